// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <set>

#include "doctest.h"
#include "fd_check.hpp"
#include "pep/descriptor.hpp"
#include "pep/errors.hpp"
#include "pep/excavating.hpp"

using namespace pep;

namespace {

ModelConfig excavate_config() {
  ModelConfig c;
  c.feat_channels = 6;
  c.descriptor_channels = 5;
  c.excavate_channels = 4;
  c.excavate_layers = 3;
  c.window_radius = 8;
  c.num_classes = 3;
  return c;
}

struct Rig {
  Rng rng{3};
  ParameterStore store;
  ModelConfig config = excavate_config();
  ExcavatingBranch branch{store, config, rng};
  FeaturePyramid pyramid;

  Rig() {
    for (const auto& g : stage_geometry(128, 128))
      pyramid.stages.emplace_back(normal({config.feat_channels, g.height, g.width}, 1.0, rng));
  }
};

InstanceDescriptor at(int stage, int row, int col) {
  InstanceDescriptor d;
  d.stage = stage;
  d.location = {row, col};
  return d;
}

// Brute-force 3x3 peak scan with the lexicographic tie rule spelled out.
std::vector<GridPoint> brute_peaks(const Tensor& p, double tau) {
  const int h = p.dim(0), w = p.dim(1);
  std::vector<GridPoint> out;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double v = p.at(r, c);
      if (v < tau) continue;
      bool peak = true;
      for (int dr = -1; dr <= 1 && peak; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if ((dr == 0 && dc == 0) || rr < 0 || cc < 0 || rr >= h || cc >= w) continue;
          const double u = p.at(rr, cc);
          const bool earlier = std::make_pair(rr, cc) < std::make_pair(r, c);
          if (u > v || (u == v && earlier)) {
            peak = false;
            break;
          }
        }
      if (peak) out.push_back({r, c});
    }
  return out;
}

}  // namespace

TEST_CASE("window geometry at the center and clipped at a corner") {
  Rig rig;
  const std::vector<Var> shared = rig.branch.precompute(rig.pyramid);
  const Var v(normal({5}, 1.0, rig.rng));
  const CenterMap mid = rig.branch.excavate(at(1, 16, 16), v, shared);  // stage 1 is 32x32
  CHECK(mid.logits.shape() == Shape{17, 17});
  CHECK(mid.window == Window{8, 8, 17, 17});

  const CenterMap corner = rig.branch.excavate(at(1, 0, 0), v, shared);
  CHECK(corner.logits.shape() == Shape{9, 9});
  CHECK(corner.window == Window{0, 0, 9, 9});
  const Tensor corner_probs = corner.probs();
  for (double p : corner_probs.values()) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
}

TEST_CASE("initial center probability sits at the prior") {
  Rig rig;
  const std::vector<Var> shared = rig.branch.precompute(rig.pyramid);
  const CenterMap m = rig.branch.excavate(at(2, 8, 8), Var(normal({5}, 1.0, rig.rng)), shared);
  const Tensor probs = m.probs();
  for (double p : probs.values()) CHECK(p == doctest::Approx(rig.config.prior_probability).epsilon(0.3));
}

TEST_CASE("excavating loss analytic values and summation oracle") {
  CenterMap single;
  single.logits = Var(Tensor({1, 1}));
  single.window = {0, 0, 1, 1};
  CHECK(loss_excavating({single}, {Tensor({1, 1}, {1.0})}).item() == doctest::Approx(std::log(2.0)));

  Rng rng(4);
  std::vector<CenterMap> maps;
  std::vector<Tensor> targets;
  double expected = 0.0;
  for (int k = 0; k < 4; ++k) {
    CenterMap m;
    m.logits = Var(normal({3, 5}, 2.0, rng));
    m.window = {0, 0, 3, 5};
    Tensor t({3, 5});
    t[(k * 4) % 15] = 1.0;
    double s = 0.0;
    for (int i = 0; i < 15; ++i) {
      const double p = 1.0 / (1.0 + std::exp(-m.logits.value()[i]));
      s -= t[i] * std::log(p) + (1 - t[i]) * std::log(1 - p);
    }
    expected += s / 15.0;
    maps.push_back(m);
    targets.push_back(t);
  }
  CHECK(std::abs(loss_excavating(maps, targets).item() - expected) <= 1e-8);
  targets[1] = Tensor({5, 3});
  CHECK_THROWS_AS(loss_excavating(maps, targets), ShapeError);
}

TEST_CASE("key pixel extraction") {
  Tensor low({3, 3});
  low.fill(0.1);
  CHECK(extract_key_pixels(low, Window{0, 0, 3, 3}, 0, 0.3, 8).empty());

  Tensor one = low;
  one.at(1, 2) = 0.9;
  auto keys = extract_key_pixels(one, Window{4, 6, 3, 3}, 5, 0.3, 8);
  REQUIRE(keys.size() == 1);
  CHECK(keys[0].location == GridPoint{5, 8});
  CHECK(keys[0].source_id == 5);
  CHECK(keys[0].score == 0.9);

  Tensor plateau({4, 4});
  for (int r = 1; r <= 2; ++r)
    for (int c = 1; c <= 2; ++c) plateau.at(r, c) = 0.7;
  keys = extract_key_pixels(plateau, Window{0, 0, 4, 4}, 0, 0.3, 8);
  REQUIRE(keys.size() == 1);
  CHECK(keys[0].location == GridPoint{1, 1});
}

TEST_CASE("key pixels agree with a brute-force scan and respect K_max") {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor p({9, 11});
    // Quantized values make ties common.
    for (double& v : p.values()) v = std::round(u(rng) * 5.0) / 5.0;
    const auto expected = brute_peaks(p, 0.3);
    const auto keys = extract_key_pixels(p, Window{0, 0, 9, 11}, 0, 0.3, 1000);
    std::set<GridPoint> a(expected.begin(), expected.end()), b;
    for (const auto& k : keys) b.insert(k.location);
    CHECK(a == b);
    const auto capped = extract_key_pixels(p, Window{0, 0, 9, 11}, 0, 0.3, 3);
    CHECK(capped.size() == std::min<std::size_t>(3, keys.size()));
    for (std::size_t i = 0; i < capped.size(); ++i) CHECK(capped[i].location == keys[i].location);
    for (std::size_t i = 1; i < keys.size(); ++i) CHECK(keys[i - 1].score >= keys[i].score);
  }
}

TEST_CASE("minting width, coordinates and independence of keys") {
  Rig rig;
  const StageGeometry g{32, 32, 4};
  CHECK(normalized_coordinates({0, 0}, g) == std::pair{-1.0 + 1.0 / 32, -1.0 + 1.0 / 32});
  CHECK(normalized_coordinates({31, 15}, g).first == doctest::Approx(1.0 - 1.0 / 32));
  const Var v(normal({5}, 1.0, rig.rng));
  const Var a = rig.branch.mint(v, {3, 4}, g);
  const Var b = rig.branch.mint(v, {10, 4}, g);
  CHECK(a.shape() == Shape{5});
  CHECK(a.value().checksum() != b.value().checksum());
  CHECK(rig.branch.classify(a).shape() == Shape{4});
  CHECK(rig.store.find("excavate.mint0.weight")->var.shape() == Shape{5, 7});
}

TEST_CASE("key classification loss") {
  CHECK(loss_excavating_cls({Var(Tensor({4}))}, {2}).item() == doctest::Approx(std::log(4.0)));
  CHECK(loss_excavating_cls({Var(Tensor({3}, {-50.0, 50.0, -50.0}))}, {1}).item() <= 1e-12);
  CHECK(loss_excavating_cls({}, {}).item() == 0.0);

  Rng rng(6);
  std::vector<Var> logits;
  std::vector<int> labels{0, 3, 1};
  double expected = 0.0;
  for (int k = 0; k < 3; ++k) {
    logits.emplace_back(normal({4}, 1.0, rng));
    double z = 0.0;
    for (int c = 0; c < 4; ++c) z += std::exp(logits.back().value()[c]);
    expected -= logits.back().value()[labels[k]] - std::log(z);
  }
  CHECK(std::abs(loss_excavating_cls(logits, labels).item() - expected) <= 1e-8);
}

TEST_CASE("excavating loss gradient wrt the source vector") {
  Rig rig;
  const std::vector<Var> shared = rig.branch.precompute(rig.pyramid);
  Tensor target({17, 17});
  target.at(3, 12) = 1.0;
  const double err = pep::testing::max_fd_error({normal({5}, 1.0, rig.rng)}, [&](const std::vector<Var>& v) {
    return loss_excavating({rig.branch.excavate(at(1, 16, 16), v[0], shared)}, {target});
  }, 1e-4);
  CHECK(err <= 1e-4);
}
