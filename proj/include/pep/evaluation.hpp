// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include "pep/config.hpp"
#include "pep/scene.hpp"

namespace pep {

struct Detection {
  std::string image_id;
  int class_id = 1;
  BinaryMask mask;
  double score = 0.0;
};

/// Marker for a metric whose bucket holds no ground truth.
inline constexpr double kUndefinedMetric = -1.0;

struct EvalReport {
  double ap = kUndefinedMetric;
  double ap50 = kUndefinedMetric;
  double ap75 = kUndefinedMetric;
  double ap_small = kUndefinedMetric;
  double ap_medium = kUndefinedMetric;
  double ap_large = kUndefinedMetric;
  int num_images = 0;
  int num_detections = 0;
  int num_ground_truth = 0;
};

/// |a∩b| / |a∪b|, 0 when both are empty. Throws ShapeError on a size mismatch.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

/// Area range [lo, hi] of the all/small/medium/large buckets.
std::array<std::pair<double, double>, 4> area_ranges(const EvalConfig& config, int canvas_height,
                                                     int canvas_width);

/// Mask AP with greedy per-class matching at IoU 0.50:0.05:0.95 and
/// 101-point interpolation. Throws ValidationError on an unknown class or image.
EvalReport evaluate(const std::vector<Detection>& detections, const std::vector<Scene>& scenes,
                    int num_classes, const EvalConfig& config = {});

/// Ground-truth instances as score-1 detections.
std::vector<Detection> ground_truth_detections(const std::vector<Scene>& scenes);

/// "AP=0.512345"-style lines; undefined metrics print as -1.
std::string format_report(const EvalReport& report);
void write_report(const std::string& path, const EvalReport& report);

}  // namespace pep
