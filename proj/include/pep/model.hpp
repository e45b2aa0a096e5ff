// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pep/backbone.hpp"
#include "pep/evaluation.hpp"
#include "pep/excavating.hpp"
#include "pep/mask.hpp"
#include "pep/purifying.hpp"
#include "pep/semantics.hpp"
#include "pep/supervision.hpp"

namespace pep {

/// The five objective terms and their weights.
struct LossBreakdown {
  double l_p = 0.0;
  double l_e = 0.0;
  double l_pe = 0.0;
  double l_matrix = 0.0;
  double l_mask = 0.0;
  double total = 0.0;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double delta = 1.0;

  /// L_P + α·L_E + β·L_PE + γ·L_Matrix + δ·L_Mask.
  double weighted_total() const;
};

/// Builds a breakdown with `total` filled in from the parts.
LossBreakdown compose_losses(double l_p, double l_e, double l_pe, double l_matrix, double l_mask,
                             double alpha = 1.0, double beta = 1.0, double gamma = 1.0,
                             double delta = 1.0);

enum class LossTerm { kPerceiving, kExcavating, kExcavatingCls, kMatrix, kMask };
inline constexpr int kNumLossTerms = 5;
std::string to_string(LossTerm term);
/// Parses "L_P", "L_E", "L_PE", "L_Matrix" or "L_Mask".
LossTerm parse_loss_term(const std::string& name);

/// Where the original descriptors of a training forward pass come from.
enum class DescriptorMode {
  /// Confidence peaks of the perceiving branch; key pixels from the excavation maps.
  kPredicted,
  /// Ground-truth center cells; key pixels forced to the neighbour centers.
  kGroundTruth,
};

struct ForwardOptions {
  DescriptorMode mode = DescriptorMode::kPredicted;
  /// Term weights (1, α, β, γ, δ); defaults to the run config's.
  std::optional<std::array<double, kNumLossTerms>> weights;
  /// Negates the gradient flowing out of one term (gradient-check negative control).
  std::optional<LossTerm> sabotage;
};

/// Differentiable loss terms of one image.
struct LossTerms {
  std::array<Var, kNumLossTerms> terms;
  Var total;
};

struct ForwardResult {
  DescriptorSet descriptors;
  std::vector<Var> vectors;  // descriptor vectors, aligned with descriptors.items
  std::vector<CenterMap> center_maps;
  std::vector<KeyPixel> key_pixels;
  Assignment assignment;
  /// sigmoid of the affinity logits; empty when purifying is off or no descriptors exist.
  Tensor affinity;
  std::vector<Var> mask_logits;
  LossTerms loss_terms;
  LossBreakdown losses;
  /// True when no descriptor was selected and only L_P contributed.
  bool skipped = false;
};

/// The full network: backbone, perceiving, excavating, purifying and mask branches.
class PepModel {
 public:
  PepModel(const RunConfig& config, std::uint64_t seed);

  /// One training forward pass on a scene with all five losses.
  ForwardResult forward(const Scene& scene, const ForwardOptions& options = {}) const;

  /// Detections for one image (no gradient recording).
  std::vector<Detection> infer(const Tensor& image, const std::string& image_id) const;
  std::vector<Detection> infer(const std::vector<Scene>& scenes) const;

  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  const RunConfig& config() const { return config_; }
  ModelConfig& model_config() { return config_.model; }
  Backbone& backbone() { return backbone_; }
  const ExcavatingBranch& excavating() const { return excavating_; }
  const PurifyingBranch& purifying() const { return purifying_; }
  const MaskBranch& mask_branch() const { return mask_; }
  const PerceivingBranch& perceiving() const { return perceiving_; }
  const SupervisionConfig& supervision() const { return supervision_; }

  /// Copies parameter values from another model with the same architecture.
  void copy_parameters_from(const PepModel& other);

 private:
  RunConfig config_;
  SupervisionConfig supervision_;
  ParameterStore store_;
  Backbone backbone_;
  PerceivingBranch perceiving_;
  ExcavatingBranch excavating_;
  PurifyingBranch purifying_;
  MaskBranch mask_;
};

/// Fraction of ground-truth neighbour centers recovered by a key pixel
/// within one cell, with sources at the ground-truth center cells.
double key_pixel_recall(const PepModel& model, const std::vector<Scene>& scenes);

/// Mean affinity over same-instance pairs minus mean over different-instance
/// pairs (i != j, assigned descriptors only) with ground-truth sources and keys.
double affinity_gap(const PepModel& model, const std::vector<Scene>& scenes);

}  // namespace pep
