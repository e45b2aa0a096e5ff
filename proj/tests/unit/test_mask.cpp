// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "fd_check.hpp"
#include "oracles.hpp"
#include "pep/errors.hpp"
#include "pep/mask.hpp"

using namespace pep;

namespace {

ModelConfig mask_config() {
  ModelConfig c;
  c.feat_channels = 8;
  c.descriptor_channels = 6;
  return c;
}

FeaturePyramid random_pyramid(int channels, Rng& rng) {
  FeaturePyramid p;
  for (const auto& g : stage_geometry(64, 64)) p.stages.emplace_back(normal({channels, g.height, g.width}, 1.0, rng));
  return p;
}

using oracle::sigmoid_ref;

}  // namespace

TEST_CASE("general feature shape, zero heads and determinism") {
  Rng rng(1);
  ParameterStore store;
  MaskBranch branch(store, mask_config(), rng);
  const FeaturePyramid pyramid = random_pyramid(8, rng);
  const GeneralFeature a = general_features(branch, pyramid);
  const GeneralFeature b = general_features(branch, pyramid);
  CHECK(a.basis.shape() == Shape{6, 16, 16});
  CHECK(a.basis.checksum() == b.basis.checksum());

  for (auto& p : store.parameters()) p.var.mutable_value().fill(0.0);
  FeaturePyramid zero;
  for (const Var& s : pyramid.stages) zero.stages.emplace_back(Tensor(s.shape()));
  CHECK(general_features(branch, zero).basis.max_abs() == 0.0);
}

TEST_CASE("coordinate channels span [-1, 1]") {
  const Tensor c = coordinate_channels(4, 8);
  CHECK(c.shape() == Shape{2, 4, 8});
  CHECK(c.at(0, 0, 0) == doctest::Approx(-0.75));
  CHECK(c.at(0, 3, 0) == doctest::Approx(0.75));
  CHECK(c.at(1, 0, 7) == doctest::Approx(0.875));
}

TEST_CASE("render_mask analytic cases") {
  Rng rng(2);
  const GeneralFeature feature{normal({4, 3, 3}, 1.0, rng)};
  const InstanceMask zero = render_mask(Tensor({4}), feature, 7);
  CHECK(zero.descriptor_id == 7);
  for (double v : zero.probs.values()) CHECK(v == 0.5);

  Tensor basis({4, 2, 2});
  for (int i = 0; i < 4; ++i) basis[2 * 4 + i] = 1.5;
  const InstanceMask uniform = render_mask(Tensor({4}, {0.0, 0.0, -0.4, 0.0}), GeneralFeature{basis});
  for (double v : uniform.probs.values()) CHECK(v == doctest::Approx(sigmoid_ref(-0.6)).epsilon(1e-14));

  CHECK_THROWS_AS(render_mask(Tensor({5}), feature), ShapeError);
}

TEST_CASE("render_mask matches a per-pixel dot-product loop") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor d = normal({4}, 1.0, rng);
    const Tensor b = normal({4, 2, 2}, 1.0, rng);
    const Tensor probs = render_mask(d, GeneralFeature{b}).probs;
    for (int p = 0; p < 4; ++p) {
      double dot = 0.0;
      for (int c = 0; c < 4; ++c) dot += d[c] * b[c * 4 + p];
      CHECK(std::abs(probs[p] - sigmoid_ref(dot)) <= 1e-8);
    }
  }
}

TEST_CASE("mask logits are linear in the descriptor") {
  Rng rng(4);
  const Var basis(normal({5, 3, 4}, 1.0, rng));
  const Tensor d1 = normal({5}, 1.0, rng), d2 = normal({5}, 1.0, rng);
  Tensor mix({5});
  for (int i = 0; i < 5; ++i) mix[i] = 0.3 * d1[i] - 1.7 * d2[i];
  const Tensor l1 = render_mask_logits(Var(d1), basis).value();
  const Tensor l2 = render_mask_logits(Var(d2), basis).value();
  const Tensor lm = render_mask_logits(Var(mix), basis).value();
  for (std::size_t i = 0; i < lm.size(); ++i) CHECK(lm[i] == doctest::Approx(0.3 * l1[i] - 1.7 * l2[i]).epsilon(1e-12));
}

TEST_CASE("mask loss values") {
  Tensor target({2, 2}, {1, 0, 0, 1});
  const Var half(Tensor({2, 2}));
  CHECK(loss_mask({half}, {target}).item() == doctest::Approx(std::log(2.0)));

  Tensor sure({2, 2}, {40, -40, -40, 40});
  CHECK(loss_mask({Var(sure)}, {target}).item() <= 1e-8);

  Rng rng(5);
  std::vector<Var> logits;
  std::vector<std::optional<Tensor>> targets;
  double expected = 0.0;
  for (int k = 0; k < 3; ++k) {
    logits.emplace_back(normal({2, 3}, 1.0, rng));
    Tensor t({2, 3});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = (i + k) % 2;
    double one = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double p = sigmoid_ref(logits.back().value()[i]);
      one -= t[i] * std::log(p) + (1 - t[i]) * std::log(1 - p);
    }
    expected += one / 6.0;
    targets.push_back(t);
  }
  CHECK(std::abs(loss_mask(logits, targets).item() - expected) <= 1e-8);

  // Unassigned descriptors do not contribute.
  logits.emplace_back(normal({2, 3}, 1.0, rng));
  targets.push_back(std::nullopt);
  CHECK(std::abs(loss_mask(logits, targets).item() - expected) <= 1e-8);

  CHECK_THROWS_AS(loss_mask({Var(Tensor({2, 2}))}, {Tensor({3, 3})}), ShapeError);
}

TEST_CASE("mask loss gradient reaches both descriptor and basis") {
  Rng rng(6);
  Var d(normal({4}, 1.0, rng), true);
  Var b(normal({4, 3, 3}, 1.0, rng), true);
  Tensor t({3, 3});
  for (int i = 0; i < 9; i += 2) t[i] = 1.0;
  backward(loss_mask({render_mask_logits(d, b)}, {t}));
  CHECK(d.grad().max_abs() > 0.0);
  CHECK(b.grad().max_abs() > 0.0);

  const double err = pep::testing::max_fd_error({normal({4}, 1.0, rng), normal({4, 3, 3}, 1.0, rng)},
      [&](const std::vector<Var>& v) { return loss_mask({render_mask_logits(v[0], v[1])}, {t}); }, 1e-4);
  CHECK(err <= 1e-4);
}
