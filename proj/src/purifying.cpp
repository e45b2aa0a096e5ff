// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "pep/purifying.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "pep/errors.hpp"
#include "pep/ops.hpp"

namespace pep {

PurifyingBranch::PurifyingBranch(ParameterStore& store, const ModelConfig& config, Rng& rng)
    : width_(config.descriptor_channels), bias_self_(config.bias_self) {
  projection_ = Linear(store, "purify.projection", width_, width_, rng);
  projection_.weight().mutable_value() =
      normal(projection_.weight().shape(), 0.25 / std::sqrt(static_cast<double>(width_)), rng);
}

Var PurifyingBranch::affinity_logits(const std::vector<Var>& vectors) const {
  if (vectors.empty()) throw ValidationError("no descriptors");
  std::vector<Var> rows;
  rows.reserve(vectors.size());
  for (const Var& v : vectors) rows.push_back(projection_(v));
  return scaled_gram(stack_rows(rows), 1.0 / std::sqrt(static_cast<double>(width_)), bias_self_);
}

AffinityMatrix compute_affinity(const PurifyingBranch& branch, const DescriptorSet& descriptors) {
  if (descriptors.empty()) throw ValidationError("no descriptors");
  NoGradGuard no_grad;
  std::vector<Var> vectors;
  AffinityMatrix m;
  for (const auto& d : descriptors.items) {
    vectors.emplace_back(d.vector);
    m.ids.push_back(d.id);
  }
  m.values = sigmoid(branch.affinity_logits(vectors).value());
  return m;
}

AffinityTarget build_affinity_target(const std::vector<std::optional<int>>& instance_of) {
  const int n = static_cast<int>(instance_of.size());
  AffinityTarget t{Tensor({n, n})};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const bool same = i == j || (instance_of[i] && instance_of[j] && *instance_of[i] == *instance_of[j]);
      t.values.at(i, j) = same ? 1.0 : 0.0;
    }
  return t;
}

Var loss_purifying(const Var& logits, const AffinityTarget& target) {
  return sigmoid_bce(logits, target.values, Reduction::kMean);
}

double loss_purifying(const AffinityMatrix& m, const AffinityTarget& target) {
  double total = 0.0;
  require_same_shape(m.values, target.values, "loss_purifying");
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const double p = std::clamp(m.values[i], kProbEpsilon, 1.0 - kProbEpsilon);
    const double g = target.values[i];
    total -= g * std::log(p) + (1.0 - g) * std::log(1.0 - p);
  }
  return m.values.empty() ? 0.0 : total / m.values.size();
}

namespace {

int find_root(std::vector<int>& parent, int x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

}  // namespace

std::vector<int> threshold_components(const Tensor& m, double tau) {
  if (m.rank() != 2 || m.dim(0) != m.dim(1)) throw ShapeError("threshold_components: matrix not square");
  const int n = m.dim(0);
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      if (m.at(i, j) < tau && m.at(j, i) < tau) continue;
      const int a = find_root(parent, i), b = find_root(parent, j);
      // Keeping the smaller index as root makes the root the component's label.
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  std::vector<int> label(n);
  for (int i = 0; i < n; ++i) label[i] = find_root(parent, i);
  return label;
}

PurifiedSet purify(const AffinityMatrix& m, const DescriptorSet& descriptors, double tau_merge) {
  if (m.size() != descriptors.size()) throw ShapeError("purify: matrix/descriptor count mismatch");
  const std::vector<int> label = threshold_components(m.values, tau_merge);
  std::map<int, std::vector<int>> members;
  for (int i = 0; i < m.size(); ++i) members[label[i]].push_back(i);

  auto better = [&](int a, int b) {
    const auto& da = descriptors.items[a];
    const auto& db = descriptors.items[b];
    if (da.confidence != db.confidence) return da.confidence > db.confidence;
    if (da.provenance != db.provenance) return da.provenance == Provenance::kOriginal;
    return da.id < db.id;
  };
  PurifiedSet out;
  for (const auto& [root, idx] : members) {
    std::vector<int> ids;
    int rep = idx.front();
    for (int i : idx) {
      ids.push_back(descriptors.items[i].id);
      if (better(i, rep)) rep = i;
    }
    out.groups.push_back(std::move(ids));
    out.representatives.push_back(descriptors.items[rep].id);
  }
  return out;
}

std::vector<int> mask_nms(const std::vector<std::vector<std::uint8_t>>& masks,
                          const std::vector<double>& scores, double iou_threshold) {
  if (masks.size() != scores.size()) throw ShapeError("mask_nms: masks/scores count mismatch");
  std::vector<int> order(masks.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<int> kept;
  for (int i : order) {
    bool suppressed = false;
    for (int k : kept) {
      std::size_t inter = 0, uni = 0;
      for (std::size_t p = 0; p < masks[i].size(); ++p) {
        inter += masks[i][p] && masks[k][p];
        uni += masks[i][p] || masks[k][p];
      }
      if (uni > 0 && static_cast<double>(inter) / uni > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

}  // namespace pep
