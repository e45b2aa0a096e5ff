// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "pep/backbone.hpp"

#include "pep/errors.hpp"
#include "pep/ops.hpp"

namespace pep {

std::vector<StageGeometry> stage_geometry(int image_height, int image_width) {
  if (image_height <= 0 || image_width <= 0 || image_height % kSizeMultiple != 0 ||
      image_width % kSizeMultiple != 0) {
    throw ShapeError("image size " + std::to_string(image_height) + "x" +
                     std::to_string(image_width) + " is not a multiple of " +
                     std::to_string(kSizeMultiple));
  }
  std::vector<StageGeometry> g;
  for (int s = 1; s <= kNumStages; ++s) {
    const int stride = 1 << (s + 1);
    g.push_back({(image_height + stride - 1) / stride, (image_width + stride - 1) / stride, stride});
  }
  return g;
}

Tensor to_model_input(const Tensor& image, int channels) {
  if (image.rank() != 3) throw ShapeError("image must be [C,H,W]");
  if (image.dim(0) == channels) return image;
  if (image.dim(0) != 1) {
    throw ShapeError("image has " + std::to_string(image.dim(0)) + " channels, model expects " +
                     std::to_string(channels));
  }
  const int h = image.dim(1), w = image.dim(2);
  Tensor out({channels, h, w});
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < h * w; ++i) out[static_cast<std::size_t>(c) * h * w + i] = image[i];
  return out;
}

SubnetHead::SubnetHead(ParameterStore& store, const std::string& name, int in_channels, int width,
                       int layers, Rng& rng) {
  for (int i = 0; i < layers; ++i) {
    layers_.emplace_back(store, name + "." + std::to_string(i), i == 0 ? in_channels : width,
                         width, 3, 1, rng);
  }
}

Var apply_head(const SubnetHead& head, const Var& stage_feature) {
  if (stage_feature.value().rank() != 3 || stage_feature.value().dim(0) != head.in_channels()) {
    throw ShapeError("head expects " + std::to_string(head.in_channels()) +
                     " input channels, got " + shape_to_string(stage_feature.shape()));
  }
  Var x = stage_feature;
  for (const Conv2d& layer : head.layers()) x = relu(layer(x));
  return x;
}

Backbone::Backbone(ParameterStore& store, const ModelConfig& config, Rng& rng)
    : in_channels_(config.in_channels) {
  const int f = config.feat_channels;
  const int stem_width = std::max(f / 4, 8);
  const std::vector<int> widths{std::max(f / 2, 8), f, f, f, f};
  stem_ = Conv2d(store, "backbone.stem", config.in_channels, stem_width, 3, 2, rng);
  int in = stem_width;
  for (int s = 0; s < kNumStages; ++s) {
    encoder_.emplace_back(store, "backbone.enc" + std::to_string(s + 1), in, widths[s], 3, 2, rng);
    in = widths[s];
  }
  // Extra stride-4 layer: the finest stage feeds the mask basis.
  encoder_.emplace_back(store, "backbone.enc1b", widths[0], widths[0], 3, 1, rng);
  for (int s = 0; s < kNumStages; ++s) {
    laterals_.emplace_back(store, "backbone.lateral" + std::to_string(s + 1), widths[s], f, 1, 1,
                           rng);
    outputs_.emplace_back(store, "backbone.output" + std::to_string(s + 1), f, f, 3, 1, rng);
  }
}

FeaturePyramid Backbone::extract(const Var& image) const {
  const Tensor& v = image.value();
  if (v.rank() != 3) throw ShapeError("image must be [C,H,W], got " + shape_to_string(v.shape()));
  if (v.dim(0) != in_channels_) {
    throw ShapeError("image has " + std::to_string(v.dim(0)) + " channels, expected " +
                     std::to_string(in_channels_));
  }
  const auto geometry = stage_geometry(v.dim(1), v.dim(2));

  std::vector<Var> encoded;
  Var x = relu(stem_(image));
  for (int s = 0; s < kNumStages; ++s) {
    x = relu(encoder_[s](x));
    if (s == 0) x = relu(encoder_[kNumStages](x));
    encoded.push_back(x);
  }
  std::vector<Var> merged(kNumStages);
  for (int s = kNumStages - 1; s >= 0; --s) {
    Var lateral = laterals_[s](encoded[s]);
    if (s + 1 < kNumStages) {
      lateral = add(lateral, resize_nearest(merged[s + 1], geometry[s].height, geometry[s].width));
    }
    merged[s] = lateral;
  }
  FeaturePyramid pyramid;
  for (int s = 0; s < kNumStages; ++s) pyramid.stages.push_back(outputs_[s](merged[s]));
  return pyramid;
}

void Backbone::zero_laterals() {
  for (Conv2d& l : laterals_) {
    l.weight().mutable_value().fill(0.0);
    if (l.bias().defined()) l.bias().mutable_value().fill(0.0);
  }
}

}  // namespace pep
