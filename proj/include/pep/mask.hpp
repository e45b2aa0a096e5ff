// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "pep/backbone.hpp"
#include "pep/config.hpp"
#include "pep/nn.hpp"

namespace pep {

/// Shared pixel-level basis [C_B, H_m, W_m] at the stride-4 grid.
struct GeneralFeature {
  Tensor basis;
};

struct InstanceMask {
  Tensor probs;  // [H_m, W_m]
  int descriptor_id = -1;
};

/// Per-stage 3x3 tower, resized to the finest stage and summed; two
/// coordinate channels are appended before a 1x1 projection to C_B = C_D.
class MaskBranch {
 public:
  MaskBranch() = default;
  MaskBranch(ParameterStore& store, const ModelConfig& config, Rng& rng);

  Var forward(const FeaturePyramid& pyramid) const;

  int tower_layers() const { return static_cast<int>(tower_.size()); }

 private:
  std::vector<Conv2d> tower_;
  Conv2d projection_;
};

GeneralFeature general_features(const MaskBranch& branch, const FeaturePyramid& pyramid);

/// [2, h, w] map of row and column cell-center coordinates in [-1, 1].
Tensor coordinate_channels(int h, int w);

/// Mask logits [H_m, W_m]: the descriptor used as a 1x1 kernel over the basis.
Var render_mask_logits(const Var& descriptor, const Var& basis);

/// sigmoid of the per-pixel dot product descriptor · basis(:, h, w).
InstanceMask render_mask(const Tensor& descriptor, const GeneralFeature& feature, int descriptor_id = -1);

/// Σ over descriptors with a target of the per-mask mean binary
/// cross-entropy; std::nullopt targets are skipped. `dice` adds a soft Dice term per mask.
Var loss_mask(const std::vector<Var>& mask_logits, const std::vector<std::optional<Tensor>>& targets,
              bool dice = false);

}  // namespace pep
