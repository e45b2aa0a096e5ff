// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "fd_check.hpp"
#include "pep/backbone.hpp"
#include "pep/errors.hpp"

using namespace pep;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.feat_channels = 16;
  c.head_channels = 16;
  c.in_channels = 3;
  return c;
}

Tensor random_image(int h, int w, unsigned seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({3, h, w});
  for (double& v : t.values()) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("stage geometry follows strides 4 to 64") {
  const auto g = stage_geometry(64, 64);
  REQUIRE(g.size() == 5);
  const int expected[] = {16, 8, 4, 2, 1};
  for (int s = 0; s < 5; ++s) {
    CHECK(g[s].height == expected[s]);
    CHECK(g[s].width == expected[s]);
    CHECK(g[s].stride == (4 << s));
  }
  CHECK_THROWS_AS(stage_geometry(50, 64), ShapeError);
  CHECK_THROWS_AS(stage_geometry(64, 48), ShapeError);
}

TEST_CASE("pyramid shape, finiteness and determinism") {
  Rng rng(1);
  ParameterStore store;
  const ModelConfig cfg = small_config();
  Backbone backbone(store, cfg, rng);
  const Tensor image = random_image(64, 96, 5);
  const FeaturePyramid p1 = backbone.extract(Var(image));
  const FeaturePyramid p2 = backbone.extract(Var(image));
  REQUIRE(p1.stages.size() == 5);
  const int heights[] = {16, 8, 4, 2, 1};
  const int widths[] = {24, 12, 6, 3, 2};
  for (int s = 0; s < 5; ++s) {
    CHECK(p1.stages[s].shape() == Shape{16, heights[s], widths[s]});
    CHECK(p1.stages[s].value().checksum() == p2.stages[s].value().checksum());
  }
  CHECK_THROWS_AS(backbone.extract(Var(random_image(40, 64, 1))), ShapeError);
}

TEST_CASE("zero image through zeroed laterals stays finite") {
  Rng rng(2);
  ParameterStore store;
  Backbone backbone(store, small_config(), rng);
  backbone.zero_laterals();
  const FeaturePyramid p = backbone.extract(Var(Tensor({3, 64, 64})));
  for (const Var& s : p.stages) CHECK(s.value().all_finite());
}

TEST_CASE("grayscale input is broadcast to the model channels") {
  Tensor gray({1, 2, 2}, {0.1, 0.2, 0.3, 0.4});
  const Tensor rgb = to_model_input(gray, 3);
  CHECK(rgb.shape() == Shape{3, 2, 2});
  CHECK(rgb.at(2, 1, 1) == 0.4);
  CHECK_THROWS_AS(to_model_input(Tensor({2, 2, 2}), 3), ShapeError);
}

TEST_CASE("apply_head preserves spatial shape and checks channels") {
  Rng rng(3);
  ParameterStore store;
  SubnetHead head(store, "h", 64, 64, 4, rng);
  const Var out = apply_head(head, Var(normal({64, 8, 8}, 1.0, rng)));
  CHECK(out.shape() == Shape{64, 8, 8});
  CHECK_THROWS_AS(apply_head(head, Var(Tensor({32, 8, 8}))), ShapeError);
}

TEST_CASE("identity-initialized one-layer head returns its (non-negative) input") {
  Rng rng(4);
  ParameterStore store;
  SubnetHead head(store, "id", 3, 3, 1, rng);
  Tensor& w = head.layers()[0].weight().mutable_value();
  w.fill(0.0);
  for (int c = 0; c < 3; ++c) w[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0;
  head.layers()[0].bias().mutable_value().fill(0.0);
  Tensor x({3, 4, 4});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : x.values()) v = u(rng);
  const Tensor y = apply_head(head, Var(x)).value();
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-15));
}

TEST_CASE("head weight gradients match central differences") {
  Rng rng(5);
  const Tensor x = normal({2, 5, 5}, 1.0, rng);
  const Tensor w = normal({3, 2, 3, 3}, 0.5, rng);
  const Tensor b = normal({3}, 0.1, rng);
  const double err = pep::testing::max_fd_error({w, b}, [&](const std::vector<Var>& v) {
    return sum_all(relu(conv2d(Var(x), v[0], v[1], 1, 1)));
  }, 1e-4);
  CHECK(err <= 1e-4);
}
