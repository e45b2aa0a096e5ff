// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "pep/backbone.hpp"
#include "pep/descriptor.hpp"
#include "pep/config.hpp"
#include "pep/nn.hpp"

namespace pep {

/// Key-pixel logits over a window of one stage grid around a source descriptor.
struct CenterMap {
  Var logits;  // [h, w]
  Window window;
  int stage = 1;
  int source_id = -1;

  Tensor probs() const;
};

/// A predicted instance center inside a source window, in stage-grid coordinates.
struct KeyPixel {
  GridPoint location;
  double score = 0.0;
  int source_id = -1;
};

/// Conditional center detector plus the minting projection and the mined
/// classifier. The first layer acts on the concatenation [stage feature ;
/// broadcast descriptor]; its two halves are stored as separate kernels so
/// the feature half can be computed once per stage and shared across sources.
class ExcavatingBranch {
 public:
  ExcavatingBranch() = default;
  ExcavatingBranch(ParameterStore& store, const ModelConfig& config, Rng& rng);

  /// Feature half of the first layer on every full stage map.
  std::vector<Var> precompute(const FeaturePyramid& pyramid) const;

  /// Center logits for one source. `shared` is the output of precompute.
  CenterMap excavate(const InstanceDescriptor& source, const Var& source_vector,
                     const std::vector<Var>& shared) const;

  /// Source vector concatenated with the key's normalized coordinates, projected back to C_D.
  Var mint(const Var& source_vector, const GridPoint& key, const StageGeometry& geometry) const;

  /// Class logits [C_P] of a mined descriptor.
  Var classify(const Var& mined_vector) const;

  int radius() const { return radius_; }
  bool full_map() const { return full_map_; }

 private:
  int radius_ = 8;
  bool full_map_ = false;
  Conv2d feature_in_;
  Var descriptor_in_;  // [E, C_D, 3, 3]
  std::vector<Conv2d> hidden_;
  Conv2d output_;
  std::vector<Linear> mint_;
  Linear classifier_;
};

/// Normalized key coordinates in [-1, 1] (cell centers), as appended before minting.
std::pair<double, double> normalized_coordinates(const GridPoint& key, const StageGeometry& geometry);

/// Σ over maps of the per-window mean binary cross-entropy against `targets`.
Var loss_excavating(const std::vector<CenterMap>& maps, const std::vector<Tensor>& targets);

/// Window peaks scoring at least tau_key, best first (ties by row, col),
/// at most k_max of them.
std::vector<KeyPixel> extract_key_pixels(const Tensor& probs, const Window& window, int source_id,
                                         double tau_key, int k_max);
std::vector<KeyPixel> extract_key_pixels(const CenterMap& map, double tau_key, int k_max);

/// Σ over mined descriptors of softmax cross-entropy against class labels
/// (0 = background for unassigned key pixels).
Var loss_excavating_cls(const std::vector<Var>& class_logits, const std::vector<int>& labels);

}  // namespace pep
