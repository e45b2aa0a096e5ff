// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "pep/backbone.hpp"
#include "pep/descriptor.hpp"
#include "pep/ops.hpp"

namespace pep {

/// Per-pixel class probabilities [C_P, H_s, W_s]; channel 0 is background.
struct SemanticMap {
  Tensor probs;
};

/// Per-pixel descriptor vectors [C_D, H_s, W_s].
struct DescriptorField {
  Tensor vectors;
};

/// Raw differentiable outputs of the perceiving subnetwork, one per stage.
struct PerceivingOutput {
  std::vector<Var> logits;  // [C_P, H_s, W_s]
  std::vector<Var> fields;  // [C_D, H_s, W_s]
};

/// Shared 3x3 tower followed by a classification conv (C_P channels) and a
/// descriptor conv (C_D channels). The descriptor branch carries no loss of
/// its own; it learns through excavating, purifying and mask losses.
class PerceivingBranch {
 public:
  PerceivingBranch() = default;
  PerceivingBranch(ParameterStore& store, const ModelConfig& config, Rng& rng);

  PerceivingOutput forward(const FeaturePyramid& pyramid) const;

  SubnetHead& tower() { return tower_; }
  Conv2d& classifier() { return classifier_; }
  Conv2d& descriptor() { return descriptor_; }

 private:
  SubnetHead tower_;
  Conv2d classifier_;
  Conv2d descriptor_;
};

/// Softmax over the class channel of each stage's logits.
std::vector<SemanticMap> perceive(const std::vector<Tensor>& stage_logits);
std::vector<SemanticMap> perceive(const PerceivingBranch& branch, const FeaturePyramid& pyramid);

std::vector<DescriptorField> extract_descriptor_field(const PerceivingBranch& branch,
                                                      const FeaturePyramid& pyramid);

/// CE(P, G) = -Σ_i Σ_j G_ij log P_ij over pixels i and classes j, with P
/// clamped at kProbEpsilon. P and G are [C, ...]; kMean divides by the pixel count.
double cross_entropy(const Tensor& probs, const Tensor& one_hot, Reduction reduction = Reduction::kSum);

/// Elementwise binary cross-entropy of probabilities against {0,1} targets.
double binary_cross_entropy(const Tensor& probs, const Tensor& targets,
                            Reduction reduction = Reduction::kMean);

/// Σ over the five stages of cross_entropy (per-pixel mean by default).
double loss_perceiving(const std::vector<SemanticMap>& maps, const std::vector<Tensor>& targets,
                       Reduction reduction = Reduction::kMean);

/// [C, H, W] one-hot encoding of an H×W label grid.
Tensor one_hot(const std::vector<int>& labels, int num_classes, int h, int w);

/// Max foreground probability and its class at a pixel.
std::pair<double, int> foreground_confidence(const Tensor& probs, int row, int col);

/// High-confidence 3x3 peaks of the max-foreground probability across all
/// stages, ranked by confidence (ties by stage, row, col) and capped.
DescriptorSet select_original_descriptors(const std::vector<SemanticMap>& maps,
                                          const std::vector<DescriptorField>& fields,
                                          double tau_conf, int n_cap);

}  // namespace pep
