// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "pep/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace pep {

bool GradcheckReport::passed() const {
  return !terms.empty() &&
         std::all_of(terms.begin(), terms.end(), [](const auto& t) { return t.passed; });
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-7});
}

Scene micro_scene() {
  constexpr int kSize = 32;
  Scene s;
  s.image_id = "micro";
  s.image = Tensor({1, kSize, kSize}, 0.1);
  auto square = [&](int r0, int c0, int side, double shade, int cls) {
    BinaryMask m(kSize, kSize);
    for (int r = r0; r < r0 + side; ++r)
      for (int c = c0; c < c0 + side; ++c) {
        m.set(r, c);
        s.image.at(0, r, c) = shade;
      }
    return std::make_pair(m, cls);
  };
  auto [a, ca] = square(4, 4, 8, 0.8, 2);
  auto [b, cb] = square(4, 12, 8, 0.5, 2);
  BinaryMask circle(kSize, kSize);
  for (int r = 0; r < kSize; ++r)
    for (int c = 0; c < kSize; ++c) {
      if ((r + 0.5 - 24) * (r + 0.5 - 24) + (c + 0.5 - 22) * (c + 0.5 - 22) <= 20.0) {
        circle.set(r, c);
        s.image.at(0, r, c) = 0.65;
      }
    }
  s.instances.push_back(make_instance(ca, a, a));
  s.instances.push_back(make_instance(cb, b, b));
  s.instances.push_back(make_instance(1, circle, circle));
  return s;
}

RunConfig micro_config() {
  RunConfig c;
  c.model.in_channels = 1;
  c.model.feat_channels = 8;
  c.model.head_channels = 8;
  c.model.head_layers = 2;
  c.model.descriptor_channels = 6;
  c.model.excavate_channels = 4;
  c.model.excavate_layers = 3;
  c.model.window_radius = 4;
  c.data.image_size = 32;
  return c;
}

namespace {

// Below this, rounding in the loss (about 1e-16 * |L| / step) rivals the slope itself.
constexpr double kGradientFloor = 1e-6;

struct Probe {
  double value;
  std::uint64_t pattern;
};

Probe term_value(const PepModel& model, const Scene& scene, const ForwardOptions& opts) {
  NoGradGuard no_grad;
  ReluPatternRecorder recorder;
  const double v = model.forward(scene, opts).loss_terms.total.value()[0];
  return {v, recorder.hash()};
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const Scene scene = micro_scene();
  PepModel model(micro_config(), options.seed + 17);
  Rng rng(options.seed);
  GradcheckReport report;

  for (int t = 0; t < kNumLossTerms; ++t) {
    const LossTerm term = static_cast<LossTerm>(t);
    ForwardOptions opts;
    opts.mode = DescriptorMode::kGroundTruth;
    std::array<double, kNumLossTerms> w{};
    w[t] = 1.0;
    opts.weights = w;
    if (options.sabotage == term) opts.sabotage = term;

    model.store().zero_grad();
    std::uint64_t base_pattern = 0;
    {
      ReluPatternRecorder recorder;
      backward(model.forward(scene, opts).loss_terms.total);
      base_pattern = recorder.hash();
    }

    GradcheckTermResult res;
    res.term = term;
    for (Parameter& p : model.store().parameters()) {
      const Tensor& g = p.var.grad();
      if (g.empty() || g.max_abs() == 0.0) continue;
      const Tensor analytic = g;
      const double gmax = analytic.max_abs();
      // Largest-gradient coordinate first, then random ones with a gradient
      // well above the finite-difference noise floor.
      std::vector<std::size_t> candidates;
      for (std::size_t i = 0; i < analytic.size(); ++i)
        if (std::abs(analytic[i]) >= std::max(1e-2 * gmax, kGradientFloor)) candidates.push_back(i);
      std::shuffle(candidates.begin(), candidates.end(), rng);
      std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(analytic[a]) == gmax && std::abs(analytic[b]) != gmax;
      });
      int probed = 0;
      for (std::size_t i : candidates) {
        if (probed >= options.coords_per_tensor) break;
        double& x = p.var.mutable_value()[i];
        const double saved = x;
        x = saved + options.step;
        const Probe up = term_value(model, scene, opts);
        x = saved - options.step;
        const Probe down = term_value(model, scene, opts);
        x = saved;
        // A relu switching state between the two probes puts a kink inside
        // the interval, where central differences do not estimate the slope.
        if (up.pattern != base_pattern || down.pattern != base_pattern) {
          ++res.skipped;
          continue;
        }
        ++probed;
        const double numeric = (up.value - down.value) / (2.0 * options.step);
        const double err = relative_error(analytic[i], numeric);
        ++res.checked;
        if (err > res.max_rel_error) {
          res.max_rel_error = err;
          res.worst_parameter = p.name + "[" + std::to_string(i) + "]";
          res.worst_analytic = analytic[i];
          res.worst_numeric = numeric;
        }
      }
    }
    res.passed = res.checked > 0 && res.max_rel_error <= options.tolerance;
    report.terms.push_back(res);
  }
  model.store().zero_grad();
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string format_gradcheck(const GradcheckReport& report) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific;
  for (const auto& t : report.terms) {
    os << to_string(t.term) << ' ' << (t.passed ? "pass" : "FAIL") << " max_rel_err=" << t.max_rel_error
       << " checked=" << t.checked << " skipped_at_kinks=" << t.skipped;
    if (!t.worst_parameter.empty()) {
      os << " worst=" << t.worst_parameter << " (analytic " << t.worst_analytic << ", numeric "
         << t.worst_numeric << ")";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace pep
