// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "fd_check.hpp"
#include "oracles.hpp"
#include "pep/errors.hpp"
#include "pep/purifying.hpp"

using namespace pep;

namespace {

using oracle::closure_labels;
using oracle::random_symmetric;

DescriptorSet plain_descriptors(int n) {
  DescriptorSet s;
  for (int i = 0; i < n; ++i) {
    InstanceDescriptor d;
    d.id = i;
    d.confidence = 0.5;
    s.items.push_back(d);
  }
  return s;
}

Tensor transpose(const Tensor& m) {
  Tensor t(m.shape());
  for (int i = 0; i < m.dim(0); ++i)
    for (int j = 0; j < m.dim(1); ++j) t.at(j, i) = m.at(i, j);
  return t;
}

int group_count(const Tensor& m, double tau) {
  const auto labels = threshold_components(m, tau);
  return static_cast<int>(std::set<int>(labels.begin(), labels.end()).size());
}

}  // namespace

TEST_CASE("affinity target from assignments") {
  const AffinityTarget t = build_affinity_target({0, 0, 1});
  const double expected[] = {1, 1, 0, 1, 1, 0, 0, 0, 1};
  for (int i = 0; i < 9; ++i) CHECK(t.values[i] == expected[i]);

  const AffinityTarget distinct = build_affinity_target({std::nullopt, std::nullopt, 2});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(distinct.values.at(i, j) == (i == j ? 1.0 : 0.0));

  const AffinityTarget same = build_affinity_target({4, 4, 4, 4});
  for (double v : same.values.values()) CHECK(v == 1.0);
}

TEST_CASE("zero projection gives 0.5 affinities") {
  Rng rng(1);
  ParameterStore store;
  ModelConfig cfg;
  cfg.descriptor_channels = 6;
  cfg.bias_self = 0.0;
  PurifyingBranch branch(store, cfg, rng);
  for (auto& p : store.parameters()) p.var.mutable_value().fill(0.0);
  DescriptorSet set = plain_descriptors(4);
  for (auto& d : set.items) d.vector = normal({6}, 1.0, rng);
  const AffinityMatrix m = compute_affinity(branch, set);
  for (double v : m.values.values()) CHECK(v == doctest::Approx(0.5));
  CHECK_THROWS_AS(compute_affinity(branch, DescriptorSet{}), ValidationError);
}

TEST_CASE("affinity is symmetric and identical descriptors tie with self when bias is zero") {
  Rng rng(2);
  ParameterStore store;
  ModelConfig cfg;
  cfg.descriptor_channels = 8;
  cfg.bias_self = 0.0;
  PurifyingBranch branch(store, cfg, rng);
  DescriptorSet set = plain_descriptors(5);
  for (auto& d : set.items) d.vector = normal({8}, 1.0, rng);
  set.items[3].vector = set.items[1].vector;
  const AffinityMatrix m = compute_affinity(branch, set);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) CHECK(m.values.at(i, j) == m.values.at(j, i));
  CHECK(m.values.at(1, 3) == doctest::Approx(m.values.at(1, 1)).epsilon(1e-12));
}

TEST_CASE("self bias lifts the diagonal") {
  Rng rng(3);
  ParameterStore store;
  ModelConfig cfg;
  cfg.descriptor_channels = 8;
  PurifyingBranch branch(store, cfg, rng);
  DescriptorSet set = plain_descriptors(6);
  for (auto& d : set.items) d.vector = normal({8}, 1.0, rng);
  const AffinityMatrix m = compute_affinity(branch, set);
  for (int i = 0; i < 6; ++i) CHECK(m.values.at(i, i) >= 0.5);
}

TEST_CASE("purifying loss values and double-loop oracle") {
  Tensor half({2, 2});
  half.fill(0.5);
  const AffinityTarget t = build_affinity_target({0, 1});
  CHECK(loss_purifying(AffinityMatrix{half, {0, 1}}, t) == doctest::Approx(std::log(2.0)));

  const AffinityMatrix perfect{t.values, {0, 1}};
  CHECK(loss_purifying(perfect, t) <= 1e-8);

  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> lab(0, 2);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor m({5, 5});
    for (double& v : m.values()) v = u(rng);
    std::vector<std::optional<int>> ids;
    for (int i = 0; i < 5; ++i) ids.push_back(lab(rng));
    const AffinityTarget g = build_affinity_target(ids);
    double naive = 0.0;
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        const double p = m.at(i, j), y = g.values.at(i, j);
        naive -= y * std::log(p) + (1 - y) * std::log(1 - p);
      }
    CHECK(std::abs(loss_purifying(AffinityMatrix{m, {0, 1, 2, 3, 4}}, g) - naive / 25.0) <= 1e-8);
  }
  CHECK_THROWS_AS(loss_purifying(AffinityMatrix{Tensor({3, 3}), {0, 1, 2}}, t), ShapeError);
}

TEST_CASE("purifying loss gradient reaches descriptor vectors") {
  Rng rng(5);
  ParameterStore store;
  ModelConfig cfg;
  cfg.descriptor_channels = 4;
  PurifyingBranch branch(store, cfg, rng);
  const AffinityTarget target = build_affinity_target({0, 0, 1});
  const double err = pep::testing::max_fd_error(
      {normal({4}, 1.0, rng), normal({4}, 1.0, rng), normal({4}, 1.0, rng)},
      [&](const std::vector<Var>& v) { return loss_purifying(branch.affinity_logits(v), target); }, 1e-4);
  CHECK(err <= 1e-4);
}

TEST_CASE("grouping examples") {
  Tensor identity({4, 4});
  for (int i = 0; i < 4; ++i) identity.at(i, i) = 1.0;
  CHECK(group_count(identity, 0.5) == 4);

  Tensor ones({4, 4});
  ones.fill(0.9);
  CHECK(group_count(ones, 0.5) == 1);

  Tensor blocks({4, 4});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) blocks.at(i, j) = (i / 2 == j / 2) ? 0.8 : 0.1;
  CHECK(threshold_components(blocks, 0.5) == std::vector<int>{0, 0, 2, 2});
  CHECK(threshold_components(blocks, 0.5) == closure_labels(blocks, 0.5));
}

TEST_CASE("union-find equals the transitive-closure oracle on random matrices") {
  Rng rng(6);
  std::uniform_int_distribution<int> size(1, 30);
  std::uniform_real_distribution<double> tau(0.3, 0.99);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Tensor m = random_symmetric(size(rng), rng);
    const double t = tau(rng);
    if (threshold_components(m, t) != closure_labels(m, t)) ++mismatches;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("purify partitions, is transpose-invariant and monotone in tau_merge") {
  Rng rng(7);
  std::uniform_int_distribution<int> size(1, 30);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = size(rng);
    const Tensor m = random_symmetric(n, rng);
    DescriptorSet set = plain_descriptors(n);
    std::vector<int> ids;
    for (auto& d : set.items) ids.push_back(d.id);
    const PurifiedSet p = purify(AffinityMatrix{m, ids}, set, 0.7);
    std::vector<int> seen;
    for (std::size_t g = 0; g < p.groups.size(); ++g) {
      CHECK(std::find(p.groups[g].begin(), p.groups[g].end(), p.representatives[g]) != p.groups[g].end());
      seen.insert(seen.end(), p.groups[g].begin(), p.groups[g].end());
    }
    std::sort(seen.begin(), seen.end());
    CHECK(seen == ids);
    CHECK(purify(AffinityMatrix{transpose(m), ids}, set, 0.7).groups == p.groups);

    int previous = 0;
    for (double t = 0.0; t <= 1.0001; t += 0.05) {
      const int groups = group_count(m, t);
      CHECK(groups >= previous);
      previous = groups;
    }
  }
}

TEST_CASE("representative prefers confidence, then originals, then low id") {
  Tensor m({3, 3});
  m.fill(0.9);
  DescriptorSet set = plain_descriptors(3);
  set.items[0].provenance = Provenance::kMined;
  PurifiedSet p = purify(AffinityMatrix{m, {0, 1, 2}}, set, 0.5);
  REQUIRE(p.groups.size() == 1);
  CHECK(p.representatives[0] == 1);

  set.items[2].confidence = 0.8;
  p = purify(AffinityMatrix{m, {0, 1, 2}}, set, 0.5);
  CHECK(p.representatives[0] == 2);
}

TEST_CASE("mask NMS suppresses overlapping lower-score masks") {
  std::vector<std::uint8_t> a{1, 1, 1, 1, 0, 0};
  std::vector<std::uint8_t> b{1, 1, 1, 0, 0, 0};
  std::vector<std::uint8_t> c{0, 0, 0, 0, 1, 1};
  CHECK(mask_nms({a, b, c}, {0.9, 0.8, 0.7}, 0.5) == std::vector<int>{0, 2});
  CHECK(mask_nms({a, b, c}, {0.7, 0.8, 0.9}, 0.5) == std::vector<int>{2, 1});
  CHECK(mask_nms({a, b}, {0.9, 0.8}, 0.8).size() == 2);
}
