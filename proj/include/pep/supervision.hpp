// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <map>
#include <optional>
#include <vector>

#include "pep/backbone.hpp"
#include "pep/config.hpp"
#include "pep/descriptor.hpp"
#include "pep/scene.hpp"

namespace pep {

struct SupervisionConfig {
  /// Side of the center region as a fraction of the instance box.
  double center_fraction = 0.2;
  /// sqrt(area) upper bounds routing instances to stages 1..4; larger go to stage 5.
  std::array<double, 4> scale_ranges{20.0, 40.0, 80.0, 160.0};
  bool source_center_positive = false;
};

SupervisionConfig supervision_config_from(const RunConfig& config);

/// 1-based stage an instance is routed to by sqrt(mask area).
int route_stage(const GroundTruthInstance& inst, const SupervisionConfig& config);

/// Grid cell holding the instance's mass center.
GridPoint center_cell(const GroundTruthInstance& inst, const StageGeometry& geometry);

/// Distance (in cells) from a cell center to the instance mass center.
double center_distance(const GroundTruthInstance& inst, const StageGeometry& geometry,
                       const GridPoint& cell);

/// Cells whose centers fall in the central `center_fraction` box around the
/// mass center, plus the mass-center cell itself so the region is never empty.
bool in_center_region(const GroundTruthInstance& inst, const StageGeometry& geometry,
                      const GridPoint& cell, double center_fraction);

/// Per-stage class label grids (H_s*W_s, row-major; 0 = background). An
/// instance labels only its routed stage; overlapping regions go to the
/// nearer center, then the lower instance index.
std::vector<std::vector<int>> build_semantic_labels(const Scene& scene,
                                                    const std::vector<StageGeometry>& geometry,
                                                    const SupervisionConfig& config);

/// One-hot form of build_semantic_labels: [C_P, H_s, W_s] per stage.
std::vector<Tensor> build_semantic_targets(const Scene& scene,
                                           const std::vector<StageGeometry>& geometry,
                                           int num_classes, const SupervisionConfig& config);

/// Descriptor id -> ground-truth instance index (or none).
struct Assignment {
  std::map<int, std::optional<int>> instance_of;

  std::optional<int> get(int id) const;
};

/// Originals map to the instance whose center region (at the descriptor's
/// stage) holds their cell, nearest center first. Mined descriptors map to
/// the instance, other than their source's, whose center cell lies within
/// one cell of the key pixel.
Assignment assign_descriptors(const DescriptorSet& descriptors, const Scene& scene,
                              const std::vector<StageGeometry>& geometry,
                              const SupervisionConfig& config);

/// Instance index for one original descriptor location.
std::optional<int> assign_location(int stage, const GridPoint& cell, const Scene& scene,
                                   const std::vector<StageGeometry>& geometry,
                                   double center_fraction);

/// Instance index for a key pixel minted from a source assigned to `source_instance`.
std::optional<int> assign_key_pixel(int stage, const GridPoint& key, std::optional<int> source_instance,
                                    const Scene& scene, const std::vector<StageGeometry>& geometry);

/// Binary [h, w] map over `window` with 1 at the center cells of instances
/// other than the source's (the source's too when configured).
Tensor build_center_targets(std::optional<int> source_instance, const Scene& scene,
                            const StageGeometry& geometry, const Window& window,
                            const SupervisionConfig& config);

/// Centers of the positives in build_center_targets, in grid coordinates.
std::vector<GridPoint> center_target_cells(std::optional<int> source_instance, const Scene& scene,
                                           const StageGeometry& geometry, const Window& window,
                                           const SupervisionConfig& config);

/// Area-fraction downsampling: a cell is 1 iff more than half of it is covered.
Tensor downsample_mask(const BinaryMask& mask, int out_h, int out_w);

/// Mask target per descriptor at mask resolution; std::nullopt excludes
/// unassigned descriptors from the mask loss.
std::vector<std::optional<Tensor>> build_mask_targets(const DescriptorSet& descriptors,
                                                      const Assignment& assignment,
                                                      const Scene& scene, int mask_h, int mask_w);

/// Ground-truth descriptor locations: one per instance at its routed stage
/// and center cell; instances sharing a cell collapse to one location.
struct GroundTruthOrigin {
  int stage = 1;
  GridPoint cell;
  int instance = 0;
};
std::vector<GroundTruthOrigin> ground_truth_origins(const Scene& scene,
                                                    const std::vector<StageGeometry>& geometry,
                                                    const SupervisionConfig& config);

}  // namespace pep
