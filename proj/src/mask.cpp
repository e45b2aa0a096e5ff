// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "pep/mask.hpp"

#include "pep/errors.hpp"
#include "pep/ops.hpp"

namespace pep {

namespace {
constexpr int kTowerLayers = 2;
}

MaskBranch::MaskBranch(ParameterStore& store, const ModelConfig& config, Rng& rng) {
  int in = config.feat_channels;
  for (int i = 0; i < kTowerLayers; ++i) {
    tower_.emplace_back(store, "mask.tower" + std::to_string(i), in, config.head_channels, 3, 1, rng);
    in = config.head_channels;
  }
  projection_ = Conv2d(store, "mask.basis", in + 2, config.descriptor_channels, 1, 1, rng);
  projection_.weight().mutable_value() = normal(projection_.weight().shape(), 0.01, rng);
}

Tensor coordinate_channels(int h, int w) {
  Tensor t({2, h, w});
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      t.at(0, r, c) = 2.0 * (r + 0.5) / h - 1.0;
      t.at(1, r, c) = 2.0 * (c + 0.5) / w - 1.0;
    }
  return t;
}

Var MaskBranch::forward(const FeaturePyramid& pyramid) const {
  const int h = pyramid.stages.front().value().dim(1);
  const int w = pyramid.stages.front().value().dim(2);
  Var fused;
  for (const Var& stage : pyramid.stages) {
    Var x = stage;
    for (const Conv2d& layer : tower_) x = relu(layer(x));
    if (x.value().dim(1) != h || x.value().dim(2) != w) x = resize_bilinear(x, h, w);
    fused = fused.defined() ? add(fused, x) : x;
  }
  return projection_(concat_channels({fused, Var(coordinate_channels(h, w))}));
}

GeneralFeature general_features(const MaskBranch& branch, const FeaturePyramid& pyramid) {
  NoGradGuard no_grad;
  return {branch.forward(pyramid).value()};
}

Var render_mask_logits(const Var& descriptor, const Var& basis) {
  const Tensor& b = basis.value();
  if (b.rank() != 3) throw ShapeError("render_mask: basis must be [C, H, W]");
  const int c = b.dim(0), h = b.dim(1), w = b.dim(2);
  if (descriptor.value().rank() != 1 || descriptor.value().dim(0) != c) {
    throw ShapeError("render_mask: descriptor " + shape_to_string(descriptor.shape()) +
                     " vs basis " + shape_to_string(b.shape()));
  }
  Var row = reshape(descriptor, {1, c});
  return reshape(matmul(row, reshape(basis, {c, h * w})), {h, w});
}

InstanceMask render_mask(const Tensor& descriptor, const GeneralFeature& feature, int descriptor_id) {
  NoGradGuard no_grad;
  Var logits = render_mask_logits(Var(descriptor), Var(feature.basis));
  return {sigmoid(logits.value()), descriptor_id};
}

Var loss_mask(const std::vector<Var>& mask_logits, const std::vector<std::optional<Tensor>>& targets,
              bool dice) {
  if (mask_logits.size() != targets.size()) throw ShapeError("loss_mask: masks/targets count mismatch");
  std::vector<Var> terms;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!targets[i]) continue;
    terms.push_back(sigmoid_bce(mask_logits[i], *targets[i], Reduction::kMean));
    if (dice) terms.push_back(sigmoid_dice(mask_logits[i], *targets[i]));
  }
  if (terms.empty()) return Var(Tensor({1}));
  return weighted_sum(terms, std::vector<double>(terms.size(), 1.0));
}

}  // namespace pep
