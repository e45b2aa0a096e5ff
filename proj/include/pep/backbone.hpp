// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "pep/config.hpp"
#include "pep/nn.hpp"

namespace pep {

inline constexpr int kNumStages = 5;
/// Inputs must have height and width divisible by this.
inline constexpr int kSizeMultiple = 32;

/// Grid of one pyramid stage. Stage s (1-based) has stride 2^(s+1).
struct StageGeometry {
  int height = 0;
  int width = 0;
  int stride = 0;
};

/// Geometry of all five stages for an image; throws ShapeError when the
/// image size is not a multiple of 32.
std::vector<StageGeometry> stage_geometry(int image_height, int image_width);

/// One [C_feat, H_s, W_s] map per stage, finest first.
struct FeaturePyramid {
  std::vector<Var> stages;

  int channels() const { return stages.empty() ? 0 : stages.front().value().dim(0); }
};

/// Repeats a 1-channel image to `channels`; passes matching inputs through.
Tensor to_model_input(const Tensor& image, int channels);

/// Stack of 3x3 convolutions (padding 1), each followed by ReLU.
class SubnetHead {
 public:
  SubnetHead() = default;
  SubnetHead(ParameterStore& store, const std::string& name, int in_channels, int width,
             int layers, Rng& rng);

  std::vector<Conv2d>& layers() { return layers_; }
  const std::vector<Conv2d>& layers() const { return layers_; }
  int in_channels() const { return layers_.empty() ? 0 : layers_.front().in_channels(); }
  int width() const { return layers_.empty() ? 0 : layers_.back().out_channels(); }

 private:
  std::vector<Conv2d> layers_;
};

/// Applies the head; throws ShapeError on a channel mismatch.
Var apply_head(const SubnetHead& head, const Var& stage_feature);

/// Strided convolutional encoder with top-down lateral fusion producing
/// five stages at strides 4, 8, 16, 32, 64.
class Backbone {
 public:
  Backbone() = default;
  Backbone(ParameterStore& store, const ModelConfig& config, Rng& rng);

  FeaturePyramid extract(const Var& image) const;

  /// Zeroes the lateral 1x1 projections (used by tests).
  void zero_laterals();

 private:
  int in_channels_ = 3;
  Conv2d stem_;
  std::vector<Conv2d> encoder_;
  std::vector<Conv2d> laterals_;
  std::vector<Conv2d> outputs_;
};

}  // namespace pep
