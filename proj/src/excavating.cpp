// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "pep/excavating.hpp"

#include <algorithm>
#include <cmath>

#include "pep/errors.hpp"
#include "pep/ops.hpp"

namespace pep {

Tensor CenterMap::probs() const { return sigmoid(logits.value()); }

ExcavatingBranch::ExcavatingBranch(ParameterStore& store, const ModelConfig& config, Rng& rng)
    : radius_(config.window_radius), full_map_(config.full_map_excavation) {
  const int e = config.excavate_channels;
  const int cd = config.descriptor_channels;
  const int fan_in = (config.feat_channels + cd) * 9;
  feature_in_ = Conv2d(store, "excavate.feature_in", config.feat_channels, e, 3, 1, rng);
  feature_in_.weight().mutable_value() = he_normal(feature_in_.weight().shape(), fan_in, rng);
  descriptor_in_ = store.add("excavate.descriptor_in.weight", he_normal({e, cd, 3, 3}, fan_in, rng));
  for (int i = 0; i + 2 < config.excavate_layers; ++i) {
    hidden_.emplace_back(store, "excavate.hidden" + std::to_string(i), e, e, 3, 1, rng);
  }
  output_ = Conv2d(store, "excavate.output", e, 1, 3, 1, rng);
  output_.weight().mutable_value() = normal(output_.weight().shape(), 0.01, rng);
  const double pi = config.prior_probability;
  output_.bias().mutable_value()[0] = std::log(pi / (1.0 - pi));

  for (int i = 0; i < config.mint_layers; ++i) {
    mint_.emplace_back(store, "excavate.mint" + std::to_string(i), i == 0 ? cd + 2 : cd, cd, rng);
  }
  classifier_ = Linear(store, "excavate.classifier", cd, config.num_classes + 1, rng);
}

std::vector<Var> ExcavatingBranch::precompute(const FeaturePyramid& pyramid) const {
  std::vector<Var> out;
  out.reserve(pyramid.stages.size());
  for (const Var& stage : pyramid.stages) out.push_back(feature_in_(stage));
  return out;
}

CenterMap ExcavatingBranch::excavate(const InstanceDescriptor& source, const Var& source_vector,
                                     const std::vector<Var>& shared) const {
  const Var& full = shared.at(source.stage - 1);
  const int gh = full.value().dim(1), gw = full.value().dim(2);
  const Window win = make_window(source.location, radius_, gh, gw, full_map_);
  Var x = crop(full, win.row0, win.col0, win.height, win.width);
  x = add(x, broadcast_conv_window(source_vector, descriptor_in_, gh, gw, win.row0, win.col0,
                                   win.height, win.width, 1));
  x = relu(x);
  for (const Conv2d& layer : hidden_) x = relu(layer(x));
  Var logits = reshape(output_(x), {win.height, win.width});
  return {logits, win, source.stage, source.id};
}

std::pair<double, double> normalized_coordinates(const GridPoint& key, const StageGeometry& g) {
  return {2.0 * (key.row + 0.5) / g.height - 1.0, 2.0 * (key.col + 0.5) / g.width - 1.0};
}

Var ExcavatingBranch::mint(const Var& source_vector, const GridPoint& key,
                           const StageGeometry& geometry) const {
  auto [y, x] = normalized_coordinates(key, geometry);
  Var v = append_constant(source_vector, {y, x});
  for (std::size_t i = 0; i < mint_.size(); ++i) {
    v = mint_[i](v);
    if (i + 1 < mint_.size()) v = relu(v);
  }
  return v;
}

Var ExcavatingBranch::classify(const Var& mined_vector) const { return classifier_(mined_vector); }

Var loss_excavating(const std::vector<CenterMap>& maps, const std::vector<Tensor>& targets) {
  if (maps.size() != targets.size()) throw ShapeError("loss_excavating: maps/targets count mismatch");
  if (maps.empty()) return Var(Tensor({1}));
  std::vector<Var> terms;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    terms.push_back(sigmoid_bce(maps[i].logits, targets[i], Reduction::kMean));
  }
  return weighted_sum(terms, std::vector<double>(terms.size(), 1.0));
}

std::vector<KeyPixel> extract_key_pixels(const Tensor& probs, const Window& window, int source_id,
                                         double tau_key, int k_max) {
  const int h = probs.dim(0), w = probs.dim(1);
  std::vector<KeyPixel> keys;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double s = probs.at(r, c);
      if (s < tau_key || !is_local_peak(probs.data(), h, w, r, c)) continue;
      keys.push_back({{window.row0 + r, window.col0 + c}, s, source_id});
    }
  std::stable_sort(keys.begin(), keys.end(), [](const KeyPixel& a, const KeyPixel& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.location < b.location;
  });
  if (static_cast<int>(keys.size()) > k_max) keys.resize(std::max(k_max, 0));
  return keys;
}

std::vector<KeyPixel> extract_key_pixels(const CenterMap& map, double tau_key, int k_max) {
  return extract_key_pixels(map.probs(), map.window, map.source_id, tau_key, k_max);
}

Var loss_excavating_cls(const std::vector<Var>& class_logits, const std::vector<int>& labels) {
  if (class_logits.size() != labels.size()) throw ShapeError("loss_excavating_cls: count mismatch");
  if (class_logits.empty()) return Var(Tensor({1}));
  std::vector<Var> terms;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    terms.push_back(softmax_cross_entropy(class_logits[i], {labels[i]}, Reduction::kSum));
  }
  return weighted_sum(terms, std::vector<double>(terms.size(), 1.0));
}

}  // namespace pep
