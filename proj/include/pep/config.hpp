// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pep/ops.hpp"

namespace pep {

/// Architecture and pipeline thresholds shared by training and inference.
struct ModelConfig {
  int num_classes = 3;
  int in_channels = 3;
  int feat_channels = 64;
  int head_channels = 64;
  int head_layers = 4;
  int descriptor_channels = 64;
  int excavate_channels = 32;
  int excavate_layers = 3;
  /// Layers in the mined-descriptor projection; 1 is a single linear map.
  int mint_layers = 2;
  int window_radius = 8;
  bool full_map_excavation = false;
  double prior_probability = 0.01;
  double bias_self = 0.0;

  bool enable_excavating = true;
  bool enable_purifying = true;

  double tau_conf = 0.3;
  int n_cap = 30;
  double tau_key = 0.3;
  int k_max = 8;
  double tau_merge = 0.5;
  /// Marks the source instance's own center positive in excavation targets.
  bool source_center_positive = false;
  /// Score-ranked mask NMS after purifying (always used when purifying is off).
  bool mask_nms_fallback = false;
  double nms_iou = 0.5;
  /// Average the rendered masks of a merged group instead of using the representative's.
  bool average_merged_masks = false;
};

struct DataConfig {
  /// Dataset directory (images + annotations.json); empty means synthesize in memory.
  std::string path;
  int image_size = 64;
  int num_images = 8;
  int min_instances = 2;
  int max_instances = 5;
  double overlap_bias = 0.7;
  std::uint64_t seed = 7;
  double min_size_fraction = 0.22;
  double max_size_fraction = 0.40;
  bool horizontal_flip = false;
};

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int epochs = 2000;
  int batch = 8;
  std::vector<double> milestones{0.75, 0.92};
  double lr_factor = 0.1;
  double clip_norm = 10.0;
  std::uint64_t seed = 0;
  /// Fraction of each batch supervised with ground-truth descriptor locations.
  double gt_mix = 0.5;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double delta = 1.0;
  Reduction loss_reduction = Reduction::kMean;
  bool dice = false;
  double center_fraction = 0.2;
  /// Upper bounds of sqrt(mask area) in pixels routing instances to stages 1..4.
  std::vector<double> scale_ranges{20.0, 40.0, 80.0, 160.0};
  int checkpoint_every = 0;
  int log_every = 1;
  std::string out_dir = "runs/default";
  /// Early stop once training-set AP50 and loss ratio targets are met (0 disables).
  int eval_every = 0;
  double target_ap50 = 0.0;
  double target_loss_ratio = 0.0;
};

struct EvalConfig {
  /// "scaled": COCO size buckets scaled by canvas_area / 640²; "coco": raw thresholds.
  std::string size_buckets = "scaled";
  int max_dets = 100;
};

struct InferConfig {
  double mask_threshold = 0.5;
  double overlay_opacity = 0.4;
};

struct RunConfig {
  ModelConfig model;
  DataConfig data;
  TrainConfig train;
  EvalConfig eval;
  InferConfig infer;
};

/// Throws ValidationError describing the first invalid field.
void validate(const RunConfig& config);

/// Structured text (JSON) with sections model, data, train, eval, infer.
/// Unknown sections or keys are rejected; missing keys keep their defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::string dump_config(const RunConfig& config);

}  // namespace pep
