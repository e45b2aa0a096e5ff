// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "pep/supervision.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "pep/errors.hpp"

namespace pep {

SupervisionConfig supervision_config_from(const RunConfig& config) {
  SupervisionConfig s;
  s.center_fraction = config.train.center_fraction;
  for (int i = 0; i < 4; ++i) s.scale_ranges[i] = config.train.scale_ranges.at(i);
  s.source_center_positive = config.model.source_center_positive;
  return s;
}

std::optional<int> Assignment::get(int id) const {
  auto it = instance_of.find(id);
  return it == instance_of.end() ? std::nullopt : it->second;
}

int route_stage(const GroundTruthInstance& inst, const SupervisionConfig& config) {
  const double scale = std::sqrt(static_cast<double>(inst.mask.area()));
  for (int s = 0; s < 4; ++s) {
    if (scale < config.scale_ranges[s]) return s + 1;
  }
  return kNumStages;
}

GridPoint center_cell(const GroundTruthInstance& inst, const StageGeometry& g) {
  const int r = std::clamp(static_cast<int>(std::floor(inst.center_row / g.stride)), 0, g.height - 1);
  const int c = std::clamp(static_cast<int>(std::floor(inst.center_col / g.stride)), 0, g.width - 1);
  return {r, c};
}

double center_distance(const GroundTruthInstance& inst, const StageGeometry& g, const GridPoint& cell) {
  const double dy = ((cell.row + 0.5) * g.stride - inst.center_row) / g.stride;
  const double dx = ((cell.col + 0.5) * g.stride - inst.center_col) / g.stride;
  return std::hypot(dy, dx);
}

bool in_center_region(const GroundTruthInstance& inst, const StageGeometry& g, const GridPoint& cell,
                      double center_fraction) {
  if (cell == center_cell(inst, g)) return true;
  const double y = (cell.row + 0.5) * g.stride, x = (cell.col + 0.5) * g.stride;
  const double half_h = 0.5 * center_fraction * inst.bbox.height();
  const double half_w = 0.5 * center_fraction * inst.bbox.width();
  return std::abs(y - inst.center_row) <= half_h && std::abs(x - inst.center_col) <= half_w;
}

std::vector<std::vector<int>> build_semantic_labels(const Scene& scene,
                                                    const std::vector<StageGeometry>& geometry,
                                                    const SupervisionConfig& config) {
  std::vector<std::vector<int>> labels;
  for (std::size_t s = 0; s < geometry.size(); ++s) {
    const StageGeometry& g = geometry[s];
    std::vector<int> grid(static_cast<std::size_t>(g.height) * g.width, 0);
    std::vector<double> best(grid.size(), std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < scene.instances.size(); ++k) {
      const auto& inst = scene.instances[k];
      if (route_stage(inst, config) != static_cast<int>(s) + 1) continue;
      for (int r = 0; r < g.height; ++r)
        for (int c = 0; c < g.width; ++c) {
          if (!in_center_region(inst, g, {r, c}, config.center_fraction)) continue;
          const double d = center_distance(inst, g, {r, c});
          const std::size_t i = static_cast<std::size_t>(r) * g.width + c;
          if (d < best[i]) {
            best[i] = d;
            grid[i] = inst.class_id;
          }
        }
    }
    labels.push_back(std::move(grid));
  }
  return labels;
}

std::vector<Tensor> build_semantic_targets(const Scene& scene,
                                           const std::vector<StageGeometry>& geometry,
                                           int num_classes, const SupervisionConfig& config) {
  const auto labels = build_semantic_labels(scene, geometry, config);
  std::vector<Tensor> out;
  for (std::size_t s = 0; s < geometry.size(); ++s) {
    const StageGeometry& g = geometry[s];
    Tensor t({num_classes + 1, g.height, g.width});
    for (int i = 0; i < g.height * g.width; ++i) {
      const int y = labels[s][i];
      if (y > num_classes) throw ValidationError("instance class exceeds model class count");
      t[static_cast<std::size_t>(y) * g.height * g.width + i] = 1.0;
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::optional<int> assign_location(int stage, const GridPoint& cell, const Scene& scene,
                                   const std::vector<StageGeometry>& geometry,
                                   double center_fraction) {
  const StageGeometry& g = geometry.at(stage - 1);
  std::optional<int> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < scene.instances.size(); ++k) {
    const auto& inst = scene.instances[k];
    if (!in_center_region(inst, g, cell, center_fraction)) continue;
    const double d = center_distance(inst, g, cell);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

std::optional<int> assign_key_pixel(int stage, const GridPoint& key, std::optional<int> source_instance,
                                    const Scene& scene, const std::vector<StageGeometry>& geometry) {
  const StageGeometry& g = geometry.at(stage - 1);
  std::optional<int> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < scene.instances.size(); ++k) {
    if (source_instance && *source_instance == static_cast<int>(k)) continue;
    const auto& inst = scene.instances[k];
    if (chebyshev(center_cell(inst, g), key) > 1) continue;
    const double d = center_distance(inst, g, key);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

Assignment assign_descriptors(const DescriptorSet& descriptors, const Scene& scene,
                              const std::vector<StageGeometry>& geometry,
                              const SupervisionConfig& config) {
  Assignment a;
  for (const auto& d : descriptors.items) {
    if (d.provenance == Provenance::kOriginal) {
      a.instance_of[d.id] = assign_location(d.stage, d.location, scene, geometry, config.center_fraction);
    }
  }
  for (const auto& d : descriptors.items) {
    if (d.provenance != Provenance::kMined) continue;
    a.instance_of[d.id] = assign_key_pixel(d.stage, d.location, a.get(d.source_id), scene, geometry);
  }
  return a;
}

std::vector<GridPoint> center_target_cells(std::optional<int> source_instance, const Scene& scene,
                                           const StageGeometry& geometry, const Window& window,
                                           const SupervisionConfig& config) {
  std::set<GridPoint> cells;
  for (std::size_t k = 0; k < scene.instances.size(); ++k) {
    if (!config.source_center_positive && source_instance && *source_instance == static_cast<int>(k)) {
      continue;
    }
    const GridPoint c = center_cell(scene.instances[k], geometry);
    if (window.contains(c)) cells.insert(c);
  }
  return {cells.begin(), cells.end()};
}

Tensor build_center_targets(std::optional<int> source_instance, const Scene& scene,
                            const StageGeometry& geometry, const Window& window,
                            const SupervisionConfig& config) {
  Tensor t({window.height, window.width});
  for (const GridPoint& c : center_target_cells(source_instance, scene, geometry, window, config)) {
    t.at(c.row - window.row0, c.col - window.col0) = 1.0;
  }
  return t;
}

Tensor downsample_mask(const BinaryMask& mask, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0 || mask.height() % out_h != 0 || mask.width() % out_w != 0) {
    throw ShapeError("downsample_mask: " + std::to_string(mask.height()) + "x" +
                     std::to_string(mask.width()) + " not divisible to " + std::to_string(out_h) +
                     "x" + std::to_string(out_w));
  }
  const int fy = mask.height() / out_h, fx = mask.width() / out_w;
  Tensor out({out_h, out_w});
  for (int r = 0; r < out_h; ++r)
    for (int c = 0; c < out_w; ++c) {
      int covered = 0;
      for (int i = 0; i < fy; ++i)
        for (int j = 0; j < fx; ++j) covered += mask.at(r * fy + i, c * fx + j) ? 1 : 0;
      out.at(r, c) = 2 * covered > fy * fx ? 1.0 : 0.0;
    }
  return out;
}

std::vector<std::optional<Tensor>> build_mask_targets(const DescriptorSet& descriptors,
                                                      const Assignment& assignment,
                                                      const Scene& scene, int mask_h, int mask_w) {
  std::vector<std::optional<Tensor>> out;
  std::map<int, Tensor> cache;
  for (const auto& d : descriptors.items) {
    const auto k = assignment.get(d.id);
    if (!k) {
      out.emplace_back(std::nullopt);
      continue;
    }
    auto it = cache.find(*k);
    if (it == cache.end()) {
      it = cache.emplace(*k, downsample_mask(scene.instances.at(*k).mask, mask_h, mask_w)).first;
    }
    out.emplace_back(it->second);
  }
  return out;
}

std::vector<GroundTruthOrigin> ground_truth_origins(const Scene& scene,
                                                    const std::vector<StageGeometry>& geometry,
                                                    const SupervisionConfig& config) {
  std::vector<GroundTruthOrigin> out;
  std::set<std::pair<int, GridPoint>> seen;
  for (std::size_t k = 0; k < scene.instances.size(); ++k) {
    const int stage = route_stage(scene.instances[k], config);
    const GridPoint cell = center_cell(scene.instances[k], geometry[stage - 1]);
    if (!seen.insert({stage, cell}).second) continue;
    const auto owner = assign_location(stage, cell, scene, geometry, config.center_fraction);
    out.push_back({stage, cell, owner.value_or(static_cast<int>(k))});
  }
  return out;
}

}  // namespace pep
