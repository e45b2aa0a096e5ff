// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "pep/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "pep/errors.hpp"
#include "pep/ops.hpp"

namespace pep {

double LossBreakdown::weighted_total() const {
  return l_p + alpha * l_e + beta * l_pe + gamma * l_matrix + delta * l_mask;
}

LossBreakdown compose_losses(double l_p, double l_e, double l_pe, double l_matrix, double l_mask,
                             double alpha, double beta, double gamma, double delta) {
  LossBreakdown b{l_p, l_e, l_pe, l_matrix, l_mask, 0.0, alpha, beta, gamma, delta};
  b.total = b.weighted_total();
  return b;
}

std::string to_string(LossTerm term) {
  switch (term) {
    case LossTerm::kPerceiving: return "L_P";
    case LossTerm::kExcavating: return "L_E";
    case LossTerm::kExcavatingCls: return "L_PE";
    case LossTerm::kMatrix: return "L_Matrix";
    case LossTerm::kMask: return "L_Mask";
  }
  return "?";
}

LossTerm parse_loss_term(const std::string& name) {
  for (int i = 0; i < kNumLossTerms; ++i) {
    if (to_string(static_cast<LossTerm>(i)) == name) return static_cast<LossTerm>(i);
  }
  throw ValidationError("unknown loss term '" + name + "' (expected L_P, L_E, L_PE, L_Matrix or L_Mask)");
}

PepModel::PepModel(const RunConfig& config, std::uint64_t seed)
    : config_(config), supervision_(supervision_config_from(config)) {
  validate(config_);
  Rng rng(seed);
  backbone_ = Backbone(store_, config_.model, rng);
  perceiving_ = PerceivingBranch(store_, config_.model, rng);
  excavating_ = ExcavatingBranch(store_, config_.model, rng);
  purifying_ = PurifyingBranch(store_, config_.model, rng);
  mask_ = MaskBranch(store_, config_.model, rng);
}

void PepModel::copy_parameters_from(const PepModel& other) {
  auto& mine = store_.parameters();
  const auto& theirs = other.store().parameters();
  if (mine.size() != theirs.size()) throw ShapeError("copy_parameters_from: parameter count mismatch");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    require_same_shape(mine[i].var.value(), theirs[i].var.value(), "copy_parameters_from");
    mine[i].var.mutable_value() = theirs[i].var.value();
  }
}

namespace {

Var zero_scalar() { return Var(Tensor({1})); }

std::vector<SemanticMap> maps_of(const PerceivingOutput& out) {
  std::vector<SemanticMap> maps;
  for (const Var& z : out.logits) maps.push_back({softmax_channels(z.value())});
  return maps;
}

// Originals at the ground-truth center cells, ordered like the instances.
DescriptorSet ground_truth_originals(const Scene& scene, const std::vector<StageGeometry>& geometry,
                                     const std::vector<SemanticMap>& maps,
                                     const PerceivingOutput& perc, const SupervisionConfig& sup,
                                     int n_cap) {
  DescriptorSet set;
  for (const auto& o : ground_truth_origins(scene, geometry, sup)) {
    if (set.size() >= n_cap) break;
    InstanceDescriptor d;
    d.id = set.size();
    d.stage = o.stage;
    d.location = o.cell;
    d.class_id = scene.instances[o.instance].class_id;
    d.confidence = maps[o.stage - 1].probs.at(d.class_id, o.cell.row, o.cell.col);
    d.provenance = Provenance::kOriginal;
    const Tensor& f = perc.fields[o.stage - 1].value();
    d.vector = Tensor({f.dim(0)});
    for (int k = 0; k < f.dim(0); ++k) d.vector[k] = f.at(k, o.cell.row, o.cell.col);
    set.items.push_back(std::move(d));
  }
  return set;
}

std::pair<double, int> best_foreground(const Tensor& probs) {
  double best = -1.0;
  int cls = 1;
  for (int c = 1; c < probs.dim(0); ++c) {
    if (probs[c] > best) {
      best = probs[c];
      cls = c;
    }
  }
  return {best, cls};
}

// Keeps originals and the highest-scoring mined descriptors within n_cap.
// Returns the kept positions in their original order.
std::vector<int> cap_positions(const DescriptorSet& set, int n_cap) {
  std::vector<int> keep, mined;
  for (int i = 0; i < set.size(); ++i) {
    (set.items[i].provenance == Provenance::kOriginal ? keep : mined).push_back(i);
  }
  std::stable_sort(mined.begin(), mined.end(), [&](int a, int b) {
    return set.items[a].confidence > set.items[b].confidence;
  });
  for (int i : mined) {
    if (static_cast<int>(keep.size()) >= n_cap) break;
    keep.push_back(i);
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

}  // namespace

ForwardResult PepModel::forward(const Scene& scene, const ForwardOptions& options) const {
  const ModelConfig& mc = config_.model;
  const TrainConfig& tc = config_.train;
  const auto geometry = stage_geometry(scene.height(), scene.width());
  std::array<double, kNumLossTerms> weights =
      options.weights.value_or(std::array<double, kNumLossTerms>{1.0, tc.alpha, tc.beta, tc.gamma, tc.delta});

  ForwardResult res;
  std::array<Var, kNumLossTerms>& terms = res.loss_terms.terms;
  for (Var& t : terms) t = zero_scalar();

  Var input(to_model_input(scene.image, mc.in_channels));
  const FeaturePyramid pyramid = backbone_.extract(input);
  const PerceivingOutput perc = perceiving_.forward(pyramid);
  const std::vector<SemanticMap> maps = maps_of(perc);

  // Perceiving loss over all five stages.
  {
    const auto labels = build_semantic_labels(scene, geometry, supervision_);
    std::vector<Var> stage_terms;
    for (int s = 0; s < kNumStages; ++s) {
      stage_terms.push_back(softmax_cross_entropy(perc.logits[s], labels[s], tc.loss_reduction));
    }
    terms[0] = weighted_sum(stage_terms, std::vector<double>(stage_terms.size(), 1.0));
  }

  // Original descriptors.
  DescriptorSet set;
  if (options.mode == DescriptorMode::kGroundTruth) {
    set = ground_truth_originals(scene, geometry, maps, perc, supervision_, mc.n_cap);
  } else {
    std::vector<DescriptorField> fields;
    for (const Var& f : perc.fields) fields.push_back({f.value()});
    set = select_original_descriptors(maps, fields, mc.tau_conf, mc.n_cap);
  }
  for (const auto& d : set.items) {
    res.vectors.push_back(gather_pixel(perc.fields[d.stage - 1], d.location.row, d.location.col));
    res.assignment.instance_of[d.id] =
        assign_location(d.stage, d.location, scene, geometry, supervision_.center_fraction);
  }

  // Excavation and minting.
  if (mc.enable_excavating && !set.empty()) {
    const std::vector<Var> shared = excavating_.precompute(pyramid);
    std::vector<Tensor> targets;
    std::vector<Var> class_logits;
    std::vector<int> class_labels;
    const int num_originals = set.size();
    for (int i = 0; i < num_originals; ++i) {
      const InstanceDescriptor source = set.items[i];
      const Var source_vec = res.vectors[i];
      CenterMap cmap = excavating_.excavate(source, source_vec, shared);
      const auto source_instance = res.assignment.get(source.id);
      const StageGeometry& g = geometry[source.stage - 1];
      targets.push_back(build_center_targets(source_instance, scene, g, cmap.window, supervision_));

      std::vector<KeyPixel> keys;
      if (options.mode == DescriptorMode::kGroundTruth) {
        for (const GridPoint& c : center_target_cells(source_instance, scene, g, cmap.window, supervision_)) {
          if (static_cast<int>(keys.size()) >= mc.k_max) break;
          keys.push_back({c, 1.0, source.id});
        }
      } else {
        keys = extract_key_pixels(cmap, mc.tau_key, mc.k_max);
      }
      for (const KeyPixel& key : keys) {
        Var mined_vec = excavating_.mint(source_vec, key.location, g);
        Var logits = excavating_.classify(mined_vec);
        const Tensor probs = softmax_channels(logits.value());
        const auto [fg, cls] = best_foreground(probs);
        InstanceDescriptor m;
        m.id = set.size();
        m.vector = mined_vec.value();
        m.stage = source.stage;
        m.location = key.location;
        m.class_id = cls;
        m.confidence = key.score * fg;
        m.provenance = Provenance::kMined;
        m.source_id = source.id;
        const auto target = assign_key_pixel(source.stage, key.location, source_instance, scene, geometry);
        res.assignment.instance_of[m.id] = target;
        class_labels.push_back(target ? scene.instances[*target].class_id : 0);
        class_logits.push_back(logits);
        res.vectors.push_back(mined_vec);
        set.items.push_back(std::move(m));
        res.key_pixels.push_back(key);
      }
      res.center_maps.push_back(std::move(cmap));
    }
    terms[1] = loss_excavating(res.center_maps, targets);

    // Cap the set; dropped mined descriptors leave every downstream term.
    const std::vector<int> keep = cap_positions(set, mc.n_cap);
    DescriptorSet capped;
    std::vector<Var> capped_vectors;
    Assignment capped_assignment;
    std::vector<Var> kept_logits;
    std::vector<int> kept_labels;
    for (int pos : keep) {
      InstanceDescriptor d = set.items[pos];
      capped_assignment.instance_of[d.id] = res.assignment.get(d.id);
      if (d.provenance == Provenance::kMined) {
        kept_logits.push_back(class_logits[pos - num_originals]);
        kept_labels.push_back(class_labels[pos - num_originals]);
      }
      capped_vectors.push_back(res.vectors[pos]);
      capped.items.push_back(std::move(d));
    }
    set = std::move(capped);
    res.vectors = std::move(capped_vectors);
    res.assignment = std::move(capped_assignment);
    terms[2] = loss_excavating_cls(kept_logits, kept_labels);
  }

  res.skipped = set.empty();
  if (!set.empty()) {
    std::vector<std::optional<int>> instance_of;
    for (const auto& d : set.items) instance_of.push_back(res.assignment.get(d.id));
    if (mc.enable_purifying) {
      Var logits = purifying_.affinity_logits(res.vectors);
      res.affinity = sigmoid(logits.value());
      terms[3] = loss_purifying(logits, build_affinity_target(instance_of));
    }
    const Var basis = mask_.forward(pyramid);
    for (const Var& v : res.vectors) res.mask_logits.push_back(render_mask_logits(v, basis));
    const int mh = basis.value().dim(1), mw = basis.value().dim(2);
    terms[4] = loss_mask(res.mask_logits, build_mask_targets(set, res.assignment, scene, mh, mw), tc.dice);
  }
  res.descriptors = std::move(set);

  for (int t = 0; t < kNumLossTerms; ++t) {
    const double v = terms[t].value()[0];
    if (!std::isfinite(v)) {
      throw NumericError("non-finite loss term " + to_string(static_cast<LossTerm>(t)) + " = " +
                         std::to_string(v) + " on image " + scene.image_id);
    }
  }
  std::array<Var, kNumLossTerms> used = terms;
  if (options.sabotage) {
    const int k = static_cast<int>(*options.sabotage);
    used[k] = flip_gradient(used[k]);
  }
  res.loss_terms.total = weighted_sum({used.begin(), used.end()}, {weights.begin(), weights.end()});
  res.losses = compose_losses(terms[0].value()[0], terms[1].value()[0], terms[2].value()[0],
                              terms[3].value()[0], terms[4].value()[0], weights[1], weights[2],
                              weights[3], weights[4]);
  res.losses.total = res.loss_terms.total.value()[0];
  return res;
}

std::vector<Detection> PepModel::infer(const Tensor& image, const std::string& image_id) const {
  NoGradGuard no_grad;
  const ModelConfig& mc = config_.model;
  const int height = image.dim(1), width = image.dim(2);
  const auto geometry = stage_geometry(height, width);
  Var input(to_model_input(image, mc.in_channels));
  const FeaturePyramid pyramid = backbone_.extract(input);
  const PerceivingOutput perc = perceiving_.forward(pyramid);
  const std::vector<SemanticMap> maps = maps_of(perc);
  std::vector<DescriptorField> fields;
  for (const Var& f : perc.fields) fields.push_back({f.value()});
  DescriptorSet set = select_original_descriptors(maps, fields, mc.tau_conf, mc.n_cap);

  if (mc.enable_excavating && !set.empty()) {
    const std::vector<Var> shared = excavating_.precompute(pyramid);
    const int num_originals = set.size();
    for (int i = 0; i < num_originals; ++i) {
      const InstanceDescriptor source = set.items[i];
      Var source_vec(source.vector);
      const CenterMap cmap = excavating_.excavate(source, source_vec, shared);
      for (const KeyPixel& key : extract_key_pixels(cmap, mc.tau_key, mc.k_max)) {
        Var mined = excavating_.mint(source_vec, key.location, geometry[source.stage - 1]);
        const Tensor probs = softmax_channels(excavating_.classify(mined).value());
        const auto [fg, cls] = best_foreground(probs);
        if (probs[0] >= fg) continue;  // classified as background
        InstanceDescriptor m;
        m.id = set.size();
        m.vector = mined.value();
        m.stage = source.stage;
        m.location = key.location;
        m.class_id = cls;
        m.confidence = key.score * fg;
        m.provenance = Provenance::kMined;
        m.source_id = source.id;
        set.items.push_back(std::move(m));
      }
    }
    DescriptorSet capped;
    for (int pos : cap_positions(set, mc.n_cap)) capped.items.push_back(set.items[pos]);
    set = std::move(capped);
  }
  if (set.empty()) return {};

  const GeneralFeature feature{mask_.forward(pyramid).value()};
  struct Candidate {
    int class_id;
    double score;
    Tensor probs;
  };
  std::vector<Candidate> candidates;
  if (mc.enable_purifying) {
    const AffinityMatrix m = compute_affinity(purifying_, set);
    const PurifiedSet purified = purify(m, set, mc.tau_merge);
    for (std::size_t g = 0; g < purified.groups.size(); ++g) {
      const InstanceDescriptor* rep = set.find(purified.representatives[g]);
      double score = 0.0;
      Tensor probs;
      for (int id : purified.groups[g]) {
        const InstanceDescriptor* d = set.find(id);
        score = std::max(score, d->confidence);
        if (mc.average_merged_masks) {
          Tensor p = render_mask(d->vector, feature, id).probs;
          if (probs.empty()) probs = Tensor::zeros_like(p);
          for (std::size_t k = 0; k < p.size(); ++k) probs[k] += p[k] / purified.groups[g].size();
        }
      }
      if (!mc.average_merged_masks) probs = render_mask(rep->vector, feature, rep->id).probs;
      candidates.push_back({rep->class_id, score, std::move(probs)});
    }
  } else {
    for (const auto& d : set.items) {
      candidates.push_back({d.class_id, d.confidence, render_mask(d.vector, feature, d.id).probs});
    }
  }

  std::vector<Detection> dets;
  for (const Candidate& c : candidates) {
    const Tensor up = resize_bilinear(c.probs.reshaped({1, c.probs.dim(0), c.probs.dim(1)}), height, width);
    BinaryMask mask(height, width);
    for (int r = 0; r < height; ++r)
      for (int col = 0; col < width; ++col) mask.set(r, col, up.at(0, r, col) > config_.infer.mask_threshold);
    if (mask.empty()) continue;
    dets.push_back({image_id, c.class_id, std::move(mask), std::clamp(c.score, 0.0, 1.0)});
  }
  if (!mc.enable_purifying || mc.mask_nms_fallback) {
    std::vector<std::vector<std::uint8_t>> bits;
    std::vector<double> scores;
    for (const auto& d : dets) {
      bits.push_back(d.mask.bits());
      scores.push_back(d.score);
    }
    std::vector<Detection> kept;
    for (int i : mask_nms(bits, scores, mc.nms_iou)) kept.push_back(std::move(dets[i]));
    dets = std::move(kept);
  }
  return dets;
}

std::vector<Detection> PepModel::infer(const std::vector<Scene>& scenes) const {
  std::vector<Detection> out;
  for (const Scene& s : scenes) {
    auto d = infer(s.image, s.image_id);
    out.insert(out.end(), std::make_move_iterator(d.begin()), std::make_move_iterator(d.end()));
  }
  return out;
}

double key_pixel_recall(const PepModel& model, const std::vector<Scene>& scenes) {
  NoGradGuard no_grad;
  const ModelConfig& mc = model.config().model;
  int found = 0, total = 0;
  for (const Scene& scene : scenes) {
    const auto geometry = stage_geometry(scene.height(), scene.width());
    ForwardOptions opts;
    opts.mode = DescriptorMode::kGroundTruth;
    const ForwardResult res = model.forward(scene, opts);
    for (const CenterMap& cmap : res.center_maps) {
      const auto source_instance = res.assignment.get(cmap.source_id);
      const auto targets = center_target_cells(source_instance, scene, geometry[cmap.stage - 1],
                                               cmap.window, model.supervision());
      const auto keys = extract_key_pixels(cmap, mc.tau_key, mc.k_max);
      for (const GridPoint& t : targets) {
        ++total;
        const bool hit = std::any_of(keys.begin(), keys.end(),
                                     [&](const KeyPixel& k) { return chebyshev(k.location, t) <= 1; });
        found += hit ? 1 : 0;
      }
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(found) / total;
}

double affinity_gap(const PepModel& model, const std::vector<Scene>& scenes) {
  NoGradGuard no_grad;
  double intra = 0.0, inter = 0.0;
  int n_intra = 0, n_inter = 0;
  for (const Scene& scene : scenes) {
    ForwardOptions opts;
    opts.mode = DescriptorMode::kGroundTruth;
    const ForwardResult res = model.forward(scene, opts);
    if (res.affinity.empty()) continue;
    const int n = res.descriptors.size();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const auto a = res.assignment.get(res.descriptors.items[i].id);
        const auto b = res.assignment.get(res.descriptors.items[j].id);
        if (!a || !b) continue;
        if (*a == *b) {
          intra += res.affinity.at(i, j);
          ++n_intra;
        } else {
          inter += res.affinity.at(i, j);
          ++n_inter;
        }
      }
  }
  if (n_intra == 0 || n_inter == 0) return 0.0;
  return intra / n_intra - inter / n_inter;
}

}  // namespace pep
