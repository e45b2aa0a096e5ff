// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "pep/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"
#include "pep/errors.hpp"

namespace pep {

namespace {

using nlohmann::json;

// Two-way binding between one config section and a JSON object.
class Section {
 public:
  explicit Section(std::string name) : name_(std::move(name)) {}

  template <typename T>
  void field(const std::string& key, T& member) {
    readers_[key] = [name = name_, key, &member](const json& j) {
      try {
        member = j.get<T>();
      } catch (const json::exception&) {
        throw ValidationError("config " + name + "." + key + ": wrong type");
      }
    };
    writers_.emplace_back(key, [&member](json& out, const std::string& k) { out[k] = member; });
  }

  void reduction(const std::string& key, Reduction& member) {
    readers_[key] = [name = name_, key, &member](const json& j) {
      if (!j.is_string()) throw ValidationError("config " + name + "." + key + ": wrong type");
      const auto s = j.get<std::string>();
      if (s == "mean") {
        member = Reduction::kMean;
      } else if (s == "sum") {
        member = Reduction::kSum;
      } else {
        throw ValidationError("config " + name + "." + key + ": expected \"mean\" or \"sum\"");
      }
    };
    writers_.emplace_back(key, [&member](json& out, const std::string& k) {
      out[k] = member == Reduction::kMean ? "mean" : "sum";
    });
  }

  void read(const json& j) const {
    if (!j.is_object()) throw ValidationError("config section " + name_ + " must be an object");
    for (const auto& [key, value] : j.items()) {
      auto it = readers_.find(key);
      if (it == readers_.end()) throw ValidationError("unknown config key " + name_ + "." + key);
      it->second(value);
    }
  }

  json write() const {
    json out = json::object();
    for (const auto& [key, writer] : writers_) writer(out, key);
    return out;
  }

  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::map<std::string, std::function<void(const json&)>> readers_;
  std::vector<std::pair<std::string, std::function<void(json&, const std::string&)>>> writers_;
};

std::vector<Section> bind(RunConfig& c) {
  std::vector<Section> sections;

  Section model("model");
  ModelConfig& m = c.model;
  model.field("num_classes", m.num_classes);
  model.field("in_channels", m.in_channels);
  model.field("feat_channels", m.feat_channels);
  model.field("head_channels", m.head_channels);
  model.field("head_layers", m.head_layers);
  model.field("descriptor_channels", m.descriptor_channels);
  model.field("excavate_channels", m.excavate_channels);
  model.field("excavate_layers", m.excavate_layers);
  model.field("mint_layers", m.mint_layers);
  model.field("window_radius", m.window_radius);
  model.field("full_map_excavation", m.full_map_excavation);
  model.field("prior_probability", m.prior_probability);
  model.field("bias_self", m.bias_self);
  model.field("enable_excavating", m.enable_excavating);
  model.field("enable_purifying", m.enable_purifying);
  model.field("tau_conf", m.tau_conf);
  model.field("n_cap", m.n_cap);
  model.field("tau_key", m.tau_key);
  model.field("k_max", m.k_max);
  model.field("tau_merge", m.tau_merge);
  model.field("source_center_positive", m.source_center_positive);
  model.field("mask_nms_fallback", m.mask_nms_fallback);
  model.field("nms_iou", m.nms_iou);
  model.field("average_merged_masks", m.average_merged_masks);
  sections.push_back(std::move(model));

  Section data("data");
  DataConfig& d = c.data;
  data.field("path", d.path);
  data.field("image_size", d.image_size);
  data.field("num_images", d.num_images);
  data.field("min_instances", d.min_instances);
  data.field("max_instances", d.max_instances);
  data.field("overlap_bias", d.overlap_bias);
  data.field("seed", d.seed);
  data.field("min_size_fraction", d.min_size_fraction);
  data.field("max_size_fraction", d.max_size_fraction);
  data.field("horizontal_flip", d.horizontal_flip);
  sections.push_back(std::move(data));

  Section train("train");
  TrainConfig& t = c.train;
  train.field("lr", t.lr);
  train.field("momentum", t.momentum);
  train.field("weight_decay", t.weight_decay);
  train.field("epochs", t.epochs);
  train.field("batch", t.batch);
  train.field("milestones", t.milestones);
  train.field("lr_factor", t.lr_factor);
  train.field("clip_norm", t.clip_norm);
  train.field("seed", t.seed);
  train.field("gt_mix", t.gt_mix);
  train.field("alpha", t.alpha);
  train.field("beta", t.beta);
  train.field("gamma", t.gamma);
  train.field("delta", t.delta);
  train.reduction("loss_reduction", t.loss_reduction);
  train.field("dice", t.dice);
  train.field("center_fraction", t.center_fraction);
  train.field("scale_ranges", t.scale_ranges);
  train.field("checkpoint_every", t.checkpoint_every);
  train.field("log_every", t.log_every);
  train.field("out_dir", t.out_dir);
  train.field("eval_every", t.eval_every);
  train.field("target_ap50", t.target_ap50);
  train.field("target_loss_ratio", t.target_loss_ratio);
  sections.push_back(std::move(train));

  Section eval("eval");
  eval.field("size_buckets", c.eval.size_buckets);
  eval.field("max_dets", c.eval.max_dets);
  sections.push_back(std::move(eval));

  Section infer("infer");
  infer.field("mask_threshold", c.infer.mask_threshold);
  infer.field("overlay_opacity", c.infer.overlay_opacity);
  sections.push_back(std::move(infer));

  return sections;
}

void check(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

}  // namespace

void validate(const RunConfig& c) {
  const ModelConfig& m = c.model;
  check(m.num_classes >= 1, "model.num_classes must be >= 1");
  check(m.in_channels == 1 || m.in_channels == 3, "model.in_channels must be 1 or 3");
  check(m.feat_channels >= 1, "model.feat_channels must be >= 1");
  check(m.head_channels >= 1, "model.head_channels must be >= 1");
  check(m.head_layers >= 1, "model.head_layers must be >= 1");
  check(m.descriptor_channels >= 1, "model.descriptor_channels must be >= 1");
  check(m.excavate_channels >= 1, "model.excavate_channels must be >= 1");
  check(m.excavate_layers >= 2, "model.excavate_layers must be >= 2");
  check(m.mint_layers >= 1, "model.mint_layers must be >= 1");
  check(m.window_radius >= 1, "model.window_radius must be >= 1");
  check(m.prior_probability > 0.0 && m.prior_probability < 1.0,
        "model.prior_probability must be in (0,1)");
  check(m.bias_self >= 0.0, "model.bias_self must be >= 0");
  check(m.tau_conf > 0.0 && m.tau_conf <= 1.0, "model.tau_conf must be in (0,1]");
  check(m.n_cap >= 1, "model.n_cap must be >= 1");
  check(m.tau_key > 0.0 && m.tau_key <= 1.0, "model.tau_key must be in (0,1]");
  check(m.k_max >= 1, "model.k_max must be >= 1");
  check(m.tau_merge > 0.0 && m.tau_merge < 1.0, "model.tau_merge must be in (0,1)");
  check(m.nms_iou > 0.0 && m.nms_iou <= 1.0, "model.nms_iou must be in (0,1]");

  const DataConfig& d = c.data;
  check(d.image_size > 0 && d.image_size % 32 == 0, "size must be multiple of 32");
  check(d.num_images >= 1, "data.num_images must be >= 1");
  check(d.min_instances >= 1 && d.min_instances <= d.max_instances,
        "data instance range must be non-empty with min >= 1");
  check(d.overlap_bias >= 0.0 && d.overlap_bias <= 1.0, "data.overlap_bias must be in [0,1]");
  check(d.min_size_fraction > 0.0 && d.min_size_fraction <= d.max_size_fraction &&
            d.max_size_fraction < 1.0,
        "data size fractions must satisfy 0 < min <= max < 1");

  const TrainConfig& t = c.train;
  check(t.lr > 0.0, "train.lr must be > 0");
  check(t.momentum >= 0.0 && t.momentum < 1.0, "train.momentum must be in [0,1)");
  check(t.weight_decay >= 0.0, "train.weight_decay must be >= 0");
  check(t.epochs >= 1, "train.epochs must be >= 1");
  check(t.batch >= 1, "train.batch must be >= 1");
  check(t.lr_factor > 0.0 && t.lr_factor < 1.0, "train.lr_factor must be in (0,1)");
  for (std::size_t i = 0; i < t.milestones.size(); ++i) {
    check(t.milestones[i] > 0.0 && t.milestones[i] < 1.0, "train.milestones must be in (0,1)");
    check(i == 0 || t.milestones[i] > t.milestones[i - 1], "train.milestones must increase");
  }
  check(t.clip_norm >= 0.0, "train.clip_norm must be >= 0 (0 disables)");
  check(t.gt_mix >= 0.0 && t.gt_mix <= 1.0, "train.gt_mix must be in [0,1]");
  check(t.alpha >= 0.0 && t.beta >= 0.0 && t.gamma >= 0.0 && t.delta >= 0.0,
        "train loss weights must be >= 0");
  check(t.center_fraction > 0.0 && t.center_fraction <= 1.0,
        "train.center_fraction must be in (0,1]");
  check(t.scale_ranges.size() == 4, "train.scale_ranges needs 4 stage boundaries");
  for (std::size_t i = 1; i < t.scale_ranges.size(); ++i) {
    check(t.scale_ranges[i] > t.scale_ranges[i - 1], "train.scale_ranges must increase");
  }
  check(t.checkpoint_every >= 0, "train.checkpoint_every must be >= 0");
  check(t.log_every >= 1, "train.log_every must be >= 1");
  check(t.eval_every >= 0, "train.eval_every must be >= 0");

  check(c.eval.size_buckets == "scaled" || c.eval.size_buckets == "coco",
        "eval.size_buckets must be \"scaled\" or \"coco\"");
  check(c.eval.max_dets >= 1, "eval.max_dets must be >= 1");

  check(c.infer.mask_threshold > 0.0 && c.infer.mask_threshold < 1.0,
        "infer.mask_threshold must be in (0,1)");
  check(c.infer.overlay_opacity >= 0.0 && c.infer.overlay_opacity <= 1.0,
        "infer.overlay_opacity must be in [0,1]");
}

RunConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ValidationError("config root must be an object");
  RunConfig config;
  auto sections = bind(config);
  for (const auto& [name, value] : root.items()) {
    auto it = std::find_if(sections.begin(), sections.end(),
                           [&](const Section& s) { return s.name() == name; });
    if (it == sections.end()) throw ValidationError("unknown config section " + name);
    it->read(value);
  }
  validate(config);
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const RunConfig& config) {
  RunConfig copy = config;
  auto sections = bind(copy);
  json root = json::object();
  for (const auto& s : sections) root[s.name()] = s.write();
  return root.dump(2);
}

}  // namespace pep
