// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "pep/errors.hpp"
#include "pep/purifying.hpp"
#include "pep/supervision.hpp"

using namespace pep;

namespace {

BinaryMask box(int size, int r0, int c0, int r1, int c1) {
  BinaryMask m(size, size);
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) m.set(r, c);
  return m;
}

Scene make_scene(int size, const std::vector<std::pair<int, BinaryMask>>& items) {
  Scene s;
  s.image_id = "t";
  s.image = Tensor({3, size, size});
  for (const auto& [cls, m] : items) s.instances.push_back(make_instance(cls, m, m));
  return s;
}

}  // namespace

TEST_CASE("assignment by center region") {
  // 16x16 square centered at (16, 16): stage-1 center cell (4, 4).
  const Scene s = make_scene(64, {{1, box(64, 8, 8, 24, 24)}});
  const auto geo = stage_geometry(64, 64);
  CHECK(assign_location(1, {4, 4}, s, geo, 0.2) == 0);
  CHECK_FALSE(assign_location(1, {14, 14}, s, geo, 0.2).has_value());

  DescriptorSet set;
  InstanceDescriptor d;
  d.id = 0;
  d.stage = 1;
  d.location = {4, 4};
  set.items.push_back(d);
  d.id = 1;
  d.location = {12, 1};
  set.items.push_back(d);
  const Assignment a = assign_descriptors(set, s, geo, SupervisionConfig{});
  CHECK(a.get(0) == 0);
  CHECK_FALSE(a.get(1).has_value());
  CHECK(a.instance_of.size() == 2);
}

TEST_CASE("overlapping center regions go to the nearer center") {
  // Two wide boxes whose 0.9 center regions overlap; cell (2,4) is nearer the second.
  const Scene s = make_scene(64, {{1, box(64, 0, 0, 20, 20)}, {2, box(64, 0, 8, 20, 32)}});
  const auto geo = stage_geometry(64, 64);
  const GridPoint cell{2, 4};
  CHECK(in_center_region(s.instances[0], geo[0], cell, 0.9));
  CHECK(in_center_region(s.instances[1], geo[0], cell, 0.9));
  const double d0 = center_distance(s.instances[0], geo[0], cell);
  const double d1 = center_distance(s.instances[1], geo[0], cell);
  REQUIRE(d1 < d0);
  CHECK(assign_location(1, cell, s, geo, 0.9) == 1);
}

TEST_CASE("semantic targets: empty scene, routing and union of regions") {
  SupervisionConfig cfg;
  const auto geo = stage_geometry(128, 128);
  const auto empty = build_semantic_targets(make_scene(128, {}), geo, 3, cfg);
  for (const Tensor& t : empty) {
    const int hw = t.dim(1) * t.dim(2);
    for (int i = 0; i < hw; ++i) CHECK(t[i] == 1.0);
  }

  // √(50·50) = 50 lands in [40, 80): stage 3.
  const Scene big = make_scene(128, {{2, box(128, 10, 10, 60, 60)}});
  CHECK(route_stage(big.instances[0], cfg) == 3);
  const auto labels = build_semantic_labels(big, geo, cfg);
  for (int s = 0; s < 5; ++s) {
    int fg = 0;
    for (int v : labels[s]) fg += v != 0;
    CHECK((s == 2 ? fg > 0 : fg == 0));
  }

  // Two same-class neighbours: labels equal the union of directly rasterized regions.
  const Scene pair = make_scene(128, {{1, box(128, 20, 20, 50, 50)}, {1, box(128, 20, 52, 50, 82)}});
  const auto pl = build_semantic_labels(pair, geo, cfg);
  const StageGeometry& g = geo[route_stage(pair.instances[0], cfg) - 1];
  const int stage = route_stage(pair.instances[0], cfg) - 1;
  for (int r = 0; r < g.height; ++r)
    for (int c = 0; c < g.width; ++c) {
      bool inside = false;
      for (const auto& inst : pair.instances) {
        const double y = (r + 0.5) * g.stride, x = (c + 0.5) * g.stride;
        const bool box_hit = std::abs(y - inst.center_row) <= 0.1 * inst.bbox.height() &&
                             std::abs(x - inst.center_col) <= 0.1 * inst.bbox.width();
        const bool center_hit = r == static_cast<int>(inst.center_row / g.stride) &&
                                c == static_cast<int>(inst.center_col / g.stride);
        inside = inside || box_hit || center_hit;
      }
      CHECK(pl[stage][r * g.width + c] == (inside ? 1 : 0));
    }

  const Scene bad = make_scene(64, {{5, box(64, 0, 0, 8, 8)}});
  CHECK_THROWS_AS(build_semantic_targets(bad, stage_geometry(64, 64), 3, cfg), ValidationError);
}

TEST_CASE("center targets in a window") {
  SupervisionConfig cfg;
  const StageGeometry g{16, 16, 4};
  const Scene s = make_scene(64, {{1, box(64, 0, 0, 8, 8)}, {2, box(64, 32, 32, 40, 40)}});
  // Instance centers: (4,4) -> cell (1,1); (36,36) -> cell (9,9).
  const Window around_first{0, 0, 9, 9};
  CHECK(build_center_targets(0, s, g, around_first, cfg).max_abs() == 0.0);
  const Tensor one = build_center_targets(std::nullopt, s, g, around_first, cfg);
  double total = 0.0;
  for (double v : one.values()) total += v;
  CHECK(total == 1.0);
  CHECK(one.at(1, 1) == 1.0);

  // Radius 8 around (1,1): the window reaches row/col 9 exactly.
  const Window r8{0, 0, 10, 10};
  CHECK(build_center_targets(0, s, g, r8, cfg).at(9, 9) == 1.0);
  const Window r7{0, 0, 9, 9};
  CHECK(build_center_targets(0, s, g, r7, cfg).max_abs() == 0.0);

  SupervisionConfig with_source = cfg;
  with_source.source_center_positive = true;
  CHECK(build_center_targets(0, s, g, around_first, with_source).at(1, 1) == 1.0);
}

TEST_CASE("key pixel assignment skips the source and accepts one-cell slack") {
  const auto geo = stage_geometry(64, 64);
  const Scene s = make_scene(64, {{1, box(64, 0, 0, 8, 8)}, {3, box(64, 8, 0, 16, 8)}});
  // Centers: cell (1,1) and cell (3,1).
  CHECK(assign_key_pixel(1, {3, 1}, 0, s, geo) == 1);
  CHECK(assign_key_pixel(1, {2, 2}, 0, s, geo) == 1);
  CHECK_FALSE(assign_key_pixel(1, {1, 1}, 1, s, geo) == 1);
  CHECK_FALSE(assign_key_pixel(1, {10, 10}, std::nullopt, s, geo).has_value());
}

TEST_CASE("mask downsampling") {
  CHECK(downsample_mask(box(2, 0, 0, 2, 2), 1, 1).at(0, 0) == 1.0);
  // Exactly half covered is not a majority.
  CHECK(downsample_mask(box(2, 0, 0, 1, 2), 1, 1).at(0, 0) == 0.0);
  const Tensor t = downsample_mask(box(8, 0, 0, 4, 6), 4, 4);
  CHECK(t.at(0, 0) == 1.0);
  CHECK(t.at(1, 2) == 1.0);
  CHECK(t.at(1, 3) == 0.0);
  CHECK(t.at(2, 0) == 0.0);
  CHECK_THROWS_AS(downsample_mask(box(6, 0, 0, 2, 2), 4, 4), ShapeError);
}

TEST_CASE("mask targets follow the assignment") {
  const Scene s = make_scene(64, {{1, box(64, 0, 0, 16, 16)}});
  DescriptorSet set;
  for (int i = 0; i < 2; ++i) {
    InstanceDescriptor d;
    d.id = i;
    set.items.push_back(d);
  }
  Assignment a;
  a.instance_of[0] = 0;
  a.instance_of[1] = std::nullopt;
  const auto targets = build_mask_targets(set, a, s, 16, 16);
  REQUIRE(targets.size() == 2);
  REQUIRE(targets[0].has_value());
  CHECK(targets[0]->at(3, 3) == 1.0);
  CHECK(targets[0]->at(4, 4) == 0.0);
  CHECK_FALSE(targets[1].has_value());
}

TEST_CASE("affinity targets from random assignments are equivalence relations") {
  Rng rng(8);
  std::uniform_int_distribution<int> n_dist(1, 12), lab(-1, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = n_dist(rng);
    std::vector<std::optional<int>> ids;
    for (int i = 0; i < n; ++i) {
      const int l = lab(rng);
      ids.push_back(l < 0 ? std::nullopt : std::optional<int>(l));
    }
    const Tensor g = build_affinity_target(ids).values;
    for (int i = 0; i < n; ++i) {
      CHECK(g.at(i, i) == 1.0);
      for (int j = 0; j < n; ++j) {
        CHECK(g.at(i, j) == g.at(j, i));
        for (int k = 0; k < n; ++k)
          if (g.at(i, j) == 1.0 && g.at(j, k) == 1.0) CHECK(g.at(i, k) == 1.0);
      }
    }
  }
}

TEST_CASE("ground-truth origins deduplicate shared cells") {
  SupervisionConfig cfg;
  const auto geo = stage_geometry(64, 64);
  // Two small instances whose centers share stage-1 cell (2, 2).
  const Scene s = make_scene(64, {{1, box(64, 8, 8, 10, 10)}, {2, box(64, 9, 10, 11, 11)}});
  const auto origins = ground_truth_origins(s, geo, cfg);
  REQUIRE(origins.size() == 1);
  CHECK(origins[0].cell == GridPoint{2, 2});
}
