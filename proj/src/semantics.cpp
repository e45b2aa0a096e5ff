// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "pep/semantics.hpp"

#include <algorithm>
#include <cmath>

#include "pep/errors.hpp"

namespace pep {

PerceivingBranch::PerceivingBranch(ParameterStore& store, const ModelConfig& config, Rng& rng) {
  const int classes = config.num_classes + 1;
  tower_ = SubnetHead(store, "perceive.tower", config.feat_channels, config.head_channels,
                      config.head_layers, rng);
  classifier_ = Conv2d(store, "perceive.classifier", config.head_channels, classes, 3, 1, rng);
  descriptor_ = Conv2d(store, "perceive.descriptor", config.head_channels,
                       config.descriptor_channels, 3, 1, rng);

  // Small output weights; foreground biases put the total initial
  // foreground probability at the configured prior.
  classifier_.weight().mutable_value() = normal(classifier_.weight().shape(), 0.01, rng);
  const double pi = config.prior_probability;
  const double fg_bias = std::log(pi / (config.num_classes * (1.0 - pi)));
  Tensor& b = classifier_.bias().mutable_value();
  for (int c = 1; c < classes; ++c) b[c] = fg_bias;
  descriptor_.weight().mutable_value() = he_normal(descriptor_.weight().shape(),
                                                   config.head_channels * 9, rng);
}

PerceivingOutput PerceivingBranch::forward(const FeaturePyramid& pyramid) const {
  PerceivingOutput out;
  for (const Var& stage : pyramid.stages) {
    Var t = apply_head(tower_, stage);
    out.logits.push_back(classifier_(t));
    out.fields.push_back(descriptor_(t));
  }
  return out;
}

std::vector<SemanticMap> perceive(const std::vector<Tensor>& stage_logits) {
  std::vector<SemanticMap> maps;
  maps.reserve(stage_logits.size());
  for (const Tensor& z : stage_logits) maps.push_back({softmax_channels(z)});
  return maps;
}

std::vector<SemanticMap> perceive(const PerceivingBranch& branch, const FeaturePyramid& pyramid) {
  NoGradGuard no_grad;
  PerceivingOutput out = branch.forward(pyramid);
  std::vector<Tensor> logits;
  for (const Var& v : out.logits) logits.push_back(v.value());
  return perceive(logits);
}

std::vector<DescriptorField> extract_descriptor_field(const PerceivingBranch& branch,
                                                      const FeaturePyramid& pyramid) {
  NoGradGuard no_grad;
  PerceivingOutput out = branch.forward(pyramid);
  std::vector<DescriptorField> fields;
  for (const Var& v : out.fields) fields.push_back({v.value()});
  return fields;
}

double cross_entropy(const Tensor& probs, const Tensor& one_hot, Reduction reduction) {
  require_same_shape(probs, one_hot, "cross_entropy");
  if (probs.rank() < 1 || probs.dim(0) == 0) return 0.0;
  const std::size_t positions = probs.size() / probs.dim(0);
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (one_hot[i] != 0.0) total -= one_hot[i] * std::log(std::max(probs[i], kProbEpsilon));
  }
  return reduction == Reduction::kMean && positions > 0 ? total / positions : total;
}

double binary_cross_entropy(const Tensor& probs, const Tensor& targets, Reduction reduction) {
  require_same_shape(probs, targets, "binary_cross_entropy");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kProbEpsilon, 1.0 - kProbEpsilon);
    total -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
  }
  return reduction == Reduction::kMean && probs.size() > 0 ? total / probs.size() : total;
}

double loss_perceiving(const std::vector<SemanticMap>& maps, const std::vector<Tensor>& targets,
                       Reduction reduction) {
  if (maps.size() != targets.size()) {
    throw ShapeError("loss_perceiving: " + std::to_string(maps.size()) + " maps vs " +
                     std::to_string(targets.size()) + " targets");
  }
  if (maps.size() != kNumStages) {
    throw ShapeError("loss_perceiving: expected " + std::to_string(kNumStages) + " stages, got " +
                     std::to_string(maps.size()));
  }
  double total = 0.0;
  for (std::size_t s = 0; s < maps.size(); ++s) {
    total += cross_entropy(maps[s].probs, targets[s], reduction);
  }
  return total;
}

Tensor one_hot(const std::vector<int>& labels, int num_classes, int h, int w) {
  if (labels.size() != static_cast<std::size_t>(h) * w) throw ShapeError("one_hot: label count");
  Tensor out({num_classes, h, w});
  for (int i = 0; i < h * w; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw ShapeError("one_hot: label out of range");
    out[static_cast<std::size_t>(labels[i]) * h * w + i] = 1.0;
  }
  return out;
}

std::pair<double, int> foreground_confidence(const Tensor& probs, int row, int col) {
  double best = -1.0;
  int cls = 1;
  for (int c = 1; c < probs.dim(0); ++c) {
    if (probs.at(c, row, col) > best) {
      best = probs.at(c, row, col);
      cls = c;
    }
  }
  return {best, cls};
}

DescriptorSet select_original_descriptors(const std::vector<SemanticMap>& maps,
                                          const std::vector<DescriptorField>& fields,
                                          double tau_conf, int n_cap) {
  if (maps.size() != fields.size()) throw ShapeError("select: maps and fields not aligned");
  std::vector<InstanceDescriptor> candidates;
  for (std::size_t s = 0; s < maps.size(); ++s) {
    const Tensor& p = maps[s].probs;
    const Tensor& f = fields[s].vectors;
    const int h = p.dim(1), w = p.dim(2);
    if (f.dim(1) != h || f.dim(2) != w) throw ShapeError("select: field/map spatial mismatch");
    std::vector<double> conf(static_cast<std::size_t>(h) * w);
    std::vector<int> cls(conf.size());
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        auto [v, k] = foreground_confidence(p, r, c);
        conf[r * w + c] = v;
        cls[r * w + c] = k;
      }
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const double v = conf[r * w + c];
        if (v < tau_conf || !is_local_peak(conf.data(), h, w, r, c)) continue;
        InstanceDescriptor d;
        d.stage = static_cast<int>(s) + 1;
        d.location = {r, c};
        d.class_id = cls[r * w + c];
        d.confidence = v;
        d.provenance = Provenance::kOriginal;
        d.vector = Tensor({f.dim(0)});
        for (int k = 0; k < f.dim(0); ++k) d.vector[k] = f.at(k, r, c);
        candidates.push_back(std::move(d));
      }
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const InstanceDescriptor& a, const InstanceDescriptor& b) {
                     if (a.confidence != b.confidence) return a.confidence > b.confidence;
                     if (a.stage != b.stage) return a.stage < b.stage;
                     return a.location < b.location;
                   });
  if (static_cast<int>(candidates.size()) > n_cap) candidates.resize(std::max(n_cap, 0));
  DescriptorSet set;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    candidates[i].id = static_cast<int>(i);
    set.items.push_back(std::move(candidates[i]));
  }
  return set;
}

}  // namespace pep
