// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "pep/descriptor.hpp"
#include "pep/config.hpp"
#include "pep/nn.hpp"

namespace pep {

/// Pairwise descriptor affinities in (0,1), rows and columns in `ids` order.
struct AffinityMatrix {
  Tensor values;  // [N, N]
  std::vector<int> ids;

  int size() const { return static_cast<int>(ids.size()); }
};

/// Same-instance indicator: 1 iff two descriptors share a ground-truth instance.
struct AffinityTarget {
  Tensor values;  // [N, N]
};

/// Partition of descriptor ids with one representative per group.
struct PurifiedSet {
  std::vector<std::vector<int>> groups;
  std::vector<int> representatives;
};

/// Learned projection followed by a scaled dot product. Produces affinity
/// logits; the sigmoid of them is M.
class PurifyingBranch {
 public:
  PurifyingBranch() = default;
  PurifyingBranch(ParameterStore& store, const ModelConfig& config, Rng& rng);

  /// Logits [N, N] = (P Pᵀ)/sqrt(C_D) + bias_self·I, with P the projected rows.
  Var affinity_logits(const std::vector<Var>& vectors) const;

 private:
  Linear projection_;
  int width_ = 0;
  double bias_self_ = 0.0;
};

/// Affinity of a descriptor set; throws ValidationError("no descriptors") when empty.
AffinityMatrix compute_affinity(const PurifyingBranch& branch, const DescriptorSet& descriptors);

/// Unassigned descriptors each form their own singleton.
AffinityTarget build_affinity_target(const std::vector<std::optional<int>>& instance_of);

/// Mean element-wise binary cross-entropy of sigmoid(logits) against the target.
Var loss_purifying(const Var& logits, const AffinityTarget& target);
/// Value form on probabilities, clamped at kProbEpsilon.
double loss_purifying(const AffinityMatrix& m, const AffinityTarget& target);

/// Component label (smallest member index) of each node of the graph with
/// edges m[i][j] >= tau, i != j.
std::vector<int> threshold_components(const Tensor& m, double tau);

/// Connected components of the thresholded graph. The representative is the
/// most confident member, originals before mined, then the lowest id.
PurifiedSet purify(const AffinityMatrix& m, const DescriptorSet& descriptors, double tau_merge);

/// Score-ranked greedy suppression: indices of kept masks, best first.
/// `masks` are flattened binary masks of equal size.
std::vector<int> mask_nms(const std::vector<std::vector<std::uint8_t>>& masks,
                          const std::vector<double>& scores, double iou_threshold);

}  // namespace pep
