// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance runner. Prints one "[PASS]" or "[FAIL]" line per criterion and
// exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "oracles.hpp"
#include "pep/checkpoint.hpp"
#include "pep/data.hpp"
#include "pep/errors.hpp"
#include "pep/excavating.hpp"
#include "pep/gradcheck.hpp"
#include "pep/mask.hpp"
#include "pep/purifying.hpp"
#include "pep/semantics.hpp"
#include "pep/training.hpp"

using namespace pep;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

Outcome gradient_integrity() {
  const auto t0 = Clock::now();
  const GradcheckReport report = run_gradcheck();
  const double secs = seconds_since(t0);
  double worst = 0.0;
  int passed = 0;
  for (const auto& t : report.terms) {
    worst = std::max(worst, t.max_rel_error);
    passed += t.passed;
  }
  return {report.passed() && report.terms.size() == 5 && secs < 60.0,
          std::to_string(passed) + "/5 terms, worst rel err " + fmt(worst, 3) + ", " + fmt(secs, 3) + " s"};
}

Outcome cross_entropy_oracle() {
  Rng rng(101);
  std::uniform_int_distribution<int> classes(2, 6), side(1, 8);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int c = classes(rng), h = side(rng), w = side(rng);
    const Tensor p = softmax_channels(normal({c, h, w}, 2.0, rng));
    std::uniform_int_distribution<int> pick(0, c - 1);
    std::vector<int> labels(h * w);
    for (int& l : labels) l = pick(rng);
    const Tensor g = one_hot(labels, c, h, w);
    worst = std::max(worst, std::abs(cross_entropy(p, g) - oracle::naive_ce(p, g)));
  }
  return {worst <= 1e-8, "200 maps, max |diff| " + fmt(worst, 3)};
}

// Group id (smallest member) of every index under a purified partition.
std::vector<int> labels_of(const PurifiedSet& p, int n) {
  std::vector<int> label(n, -1);
  for (const auto& g : p.groups) {
    const int lo = *std::min_element(g.begin(), g.end());
    for (int id : g) label[id] = lo;
  }
  return label;
}

Outcome purify_oracle() {
  Rng rng(202);
  std::uniform_int_distribution<int> size(1, 30);
  std::uniform_real_distribution<double> tau(0.05, 0.99);
  int mismatches = 0, monotone_violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = size(rng);
    const Tensor m = oracle::random_symmetric(n, rng);
    DescriptorSet set;
    std::vector<int> ids(n);
    for (int i = 0; i < n; ++i) {
      InstanceDescriptor d;
      d.id = ids[i] = i;
      d.confidence = 0.5;
      set.items.push_back(d);
    }
    const AffinityMatrix am{m, ids};
    const double t = tau(rng);
    if (labels_of(purify(am, set, t), n) != oracle::closure_labels(m, t)) ++mismatches;

    // A higher threshold may only split groups, never join them.
    const double t2 = std::min(1.0, t + 0.1);
    const auto coarse = labels_of(purify(am, set, t), n);
    const auto fine = labels_of(purify(am, set, t2), n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (fine[i] == fine[j] && coarse[i] != coarse[j]) ++monotone_violations;
  }
  return {mismatches == 0 && monotone_violations == 0,
          "1000 matrices, " + std::to_string(mismatches) + " partition mismatches, " +
              std::to_string(monotone_violations) + " monotonicity violations"};
}

Outcome mask_oracle() {
  Rng rng(303);
  std::uniform_int_distribution<int> channels(1, 16), side(1, 12);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int c = channels(rng);
    const Tensor d = normal({c}, 1.0, rng);
    const Tensor b = normal({c, side(rng), side(rng)}, 1.0, rng);
    const Tensor probs = render_mask(d, GeneralFeature{b}).probs;
    const auto ref = oracle::naive_render(d, b);
    for (std::size_t p = 0; p < ref.size(); ++p) worst = std::max(worst, std::abs(probs[p] - ref[p]));
  }
  return {worst <= 1e-8, "100 pairs, max |diff| " + fmt(worst, 3)};
}

Outcome evaluation_oracle() {
  Rng rng(404);
  double worst = 0.0;
  const int scenarios = 40;
  for (int trial = 0; trial < scenarios; ++trial) {
    const auto sc = oracle::random_eval_scenario(rng);
    const EvalReport r = evaluate(sc.detections, sc.scenes, 2);
    const auto ref = oracle::reference_eval(sc.detections, sc.scenes, 2);
    worst = std::max({worst, std::abs(r.ap - ref.ap), std::abs(r.ap50 - ref.ap50), std::abs(r.ap75 - ref.ap75)});
  }
  SynthSpec spec;
  std::vector<Scene> fixture = generate_dataset(spec, 8);
  const EvalReport perfect = evaluate(ground_truth_detections(fixture), fixture, 3);
  return {worst <= 1e-6 && perfect.ap == 1.0,
          std::to_string(scenarios) + " scenarios, max |diff| " + fmt(worst, 3) + ", perfect fixture AP " +
              fmt(perfect.ap, 17)};
}

struct SeedRun {
  std::uint64_t seed = 0;
  TrainResult result;
  double recall = 0.0;
  double gap = 0.0;
  bool passed = false;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<SeedRun> overfit_runs(const RunConfig& base, int seeds) {
  const std::vector<Scene> scenes = load_training_scenes(base);
  std::vector<SeedRun> runs;
  for (int s = 0; s < seeds; ++s) {
    RunConfig c = base;
    c.train.seed = static_cast<std::uint64_t>(s);
    PepModel model(c, c.train.seed);
    TrainOptions opts;
    opts.write_outputs = false;
    SeedRun run;
    run.seed = c.train.seed;
    run.result = train(model, scenes, opts);
    run.recall = key_pixel_recall(model, scenes);
    run.gap = affinity_gap(model, scenes);
    run.passed = run.result.steps <= 2000 && run.result.ap50 >= 0.7 && run.result.loss_ratio >= 0.0 &&
                 run.result.loss_ratio <= 0.15;
    std::cout << "  seed " << s << ": steps=" << run.result.steps << " AP50=" << fmt(run.result.ap50)
              << " loss_ratio=" << fmt(run.result.loss_ratio) << " recall=" << fmt(run.recall)
              << " affinity_gap=" << fmt(run.gap) << " seconds=" << fmt(run.result.seconds, 4)
              << (run.passed ? " ok" : " miss") << std::endl;
    runs.push_back(run);
  }
  return runs;
}

Outcome ablation_harness(const RunConfig& base, int epochs) {
  RunConfig c = base;
  c.train.epochs = epochs;
  c.train.eval_every = 0;
  const std::vector<Scene> scenes = load_training_scenes(c);
  TrainOptions opts;
  opts.write_outputs = false;
  std::vector<AblationRow> rows;
  try {
    rows = run_ablation(c, scenes, opts);
  } catch (const Error& e) {
    return {false, e.what()};
  }
  std::cout << format_ablation(rows);
  bool ok = rows.size() == 4;
  for (const AblationRow& r : rows) {
    const LossBreakdown& l = r.last_losses;
    if (r.excavating) ok = ok && l.l_e > 0.0 && r.mined_descriptors > 0;
    if (r.purifying) ok = ok && l.l_matrix > 0.0 && r.affinity_entries > 0;
    if (!r.excavating) ok = ok && l.l_e == 0.0 && l.l_pe == 0.0 && r.mined_descriptors == 0;
    if (!r.purifying) ok = ok && l.l_matrix == 0.0 && r.affinity_entries == 0;
  }
  return {ok, std::to_string(rows.size()) + " rows, disabled mechanisms contribute no loss and no descriptors"};
}

Outcome spot_values() {
  std::vector<std::string> failures;
  auto expect = [&](const std::string& what, double got, double want) {
    if (std::abs(got - want) > 1e-12) failures.push_back(what + "=" + fmt(got, 17));
  };
  expect("additivity", compose_losses(1, 2, 3, 4, 5).total, 15.0);

  const int cp = RunConfig{}.model.num_classes + 1;
  Tensor uniform({cp, 4, 4});
  uniform.fill(1.0 / cp);
  expect("uniform CE", cross_entropy(uniform, one_hot(std::vector<int>(16, 1), cp, 4, 4), Reduction::kMean),
         std::log(static_cast<double>(cp)));
  expect("uniform cls", loss_excavating_cls({Var(Tensor({cp}))}, {2}).value()[0], std::log(static_cast<double>(cp)));

  Tensor half({6, 6});
  half.fill(0.5);
  Tensor targets({6, 6});
  for (int i = 0; i < 18; ++i) targets[i] = 1.0;
  expect("uniform BCE", binary_cross_entropy(half, targets), std::numbers::ln2);
  expect("uniform mask", loss_mask({Var(Tensor({6, 6}))}, {targets}).value()[0], std::numbers::ln2);
  const AffinityTarget at = build_affinity_target({0, 0, 1, std::nullopt});
  expect("uniform affinity", loss_purifying(Var(Tensor({4, 4})), at).value()[0], std::numbers::ln2);

  Rng rng(505);
  const Tensor zero_render = render_mask(Tensor({8}), GeneralFeature{normal({8, 5, 5}, 3.0, rng)}).probs;
  for (double v : zero_render.values()) expect("zero descriptor", v, 0.5);

  return {failures.empty(), failures.empty() ? "15, ln 2, ln " + std::to_string(cp) + ", 0.5 masks"
                                             : "mismatch: " + failures.front()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string config_path;
  int seeds = 10;
  int ablation_epochs = 40;
  std::vector<int> only;
  app.add_option("--config", config_path, "Overfit config (JSON)");
  app.add_option("--seeds", seeds, "Overfit seeds")->check(CLI::PositiveNumber);
  app.add_option("--ablation-epochs", ablation_epochs, "Epochs per ablation row")->check(CLI::PositiveNumber);
  app.add_option("--only", only, "Run only these criteria (1-10)");
  CLI11_PARSE(app, argc, argv);

  RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
  validate(config);
  auto wanted = [&](int k) { return only.empty() || std::find(only.begin(), only.end(), k) != only.end(); };

  int failures = 0;
  auto report = [&](int k, const std::string& name, const Outcome& o) {
    std::cout << (o.passed ? "[PASS] " : "[FAIL] ") << k << " " << name << ": " << o.detail << std::endl;
    failures += !o.passed;
  };
  auto run = [&](int k, const std::string& name, const std::function<Outcome()>& fn) {
    if (!wanted(k)) return;
    try {
      report(k, name, fn());
    } catch (const std::exception& e) {
      report(k, name, {false, std::string("threw: ") + e.what()});
    }
  };

  run(1, "gradient integrity", gradient_integrity);
  run(2, "cross-entropy oracle", cross_entropy_oracle);
  run(3, "purifying oracle", purify_oracle);
  run(4, "mask rendering oracle", mask_oracle);
  run(5, "evaluation oracle", evaluation_oracle);

  if (wanted(6) || wanted(7) || wanted(8)) {
    std::vector<SeedRun> runs;
    std::string error;
    try {
      runs = overfit_runs(config, seeds);
    } catch (const std::exception& e) {
      error = std::string("threw: ") + e.what();
    }
    if (!error.empty()) {
      for (int k : {6, 7, 8}) report(k, "overfit", {false, error});
    } else {
      int passed = 0;
      std::vector<double> recalls, gaps;
      for (const SeedRun& r : runs) {
        passed += r.passed;
        recalls.push_back(r.recall);
        gaps.push_back(r.gap);
      }
      const int needed = (8 * seeds + 9) / 10;
      run(6, "overfit convergence", [&]() -> Outcome {
        return {passed >= needed, std::to_string(passed) + "/" + std::to_string(seeds) + " seeds reach AP50 >= 0.7 "
                                  "with loss <= 15% of step 10 (need " + std::to_string(needed) + ")"};
      });
      run(7, "key-pixel recall", [&]() -> Outcome {
        return {median(recalls) >= 0.9, "median recall over seeds " + fmt(median(recalls))};
      });
      run(8, "affinity learning", [&]() -> Outcome {
        return {median(gaps) >= 0.3, "median intra-minus-inter affinity over seeds " + fmt(median(gaps))};
      });
    }
  }

  run(9, "ablation harness", [&] { return ablation_harness(config, ablation_epochs); });
  run(10, "spot values", spot_values);

  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail") << std::endl;
  return failures == 0 ? 0 : 1;
}
