// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "pep/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "pep/checkpoint.hpp"
#include "pep/data.hpp"
#include "pep/errors.hpp"
#include "pep/ops.hpp"

namespace pep {

double learning_rate(const TrainConfig& config, int epoch) {
  double lr = config.lr;
  for (double m : config.milestones) {
    if (epoch >= static_cast<int>(std::floor(m * config.epochs))) lr *= config.lr_factor;
  }
  return lr;
}

double SgdOptimizer::step(ParameterStore& store, double lr, int step_index) {
  double sq = 0.0;
  for (const Parameter& p : store.parameters()) {
    const Tensor& g = p.var.grad();
    for (std::size_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) {
    throw NumericError("non-finite gradient at step " + std::to_string(step_index));
  }
  const double clip = (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;
  for (Parameter& p : store.parameters()) {
    Tensor& w = p.var.mutable_value();
    const Tensor& g = p.var.grad();
    if (p.velocity.size() != w.size()) p.velocity = Tensor::zeros_like(w);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = (g.empty() ? 0.0 : g[i] * clip) + config_.weight_decay * w[i];
      p.velocity[i] = config_.momentum * p.velocity[i] + gi;
      w[i] -= lr * p.velocity[i];
    }
  }
  return norm;
}

std::string format_log_line(const StepRecord& r) {
  std::ostringstream os;
  os.precision(6);
  os << "step=" << r.step << " epoch=" << r.epoch << " lr=" << r.lr << " L_P=" << r.losses.l_p
     << " L_E=" << r.losses.l_e << " L_PE=" << r.losses.l_pe << " L_Matrix=" << r.losses.l_matrix
     << " L_Mask=" << r.losses.l_mask << " total=" << r.losses.total << " grad_norm=" << r.grad_norm
     << " skipped=" << r.skipped;
  return os.str();
}

double loss_ratio(const std::vector<StepRecord>& history) {
  constexpr std::size_t kReference = 10, kWindow = 20;
  if (history.size() < kReference) return -1.0;
  const double ref = history[kReference - 1].losses.total;
  const std::size_t n = std::min(kWindow, history.size());
  double sum = 0.0;
  for (std::size_t i = history.size() - n; i < history.size(); ++i) sum += history[i].losses.total;
  return ref > 0.0 ? (sum / n) / ref : -1.0;
}

StepRecord train_step(PepModel& model, const std::vector<const Scene*>& batch,
                      const std::vector<DescriptorMode>& modes, SgdOptimizer& optimizer, double lr,
                      int step_index) {
  if (batch.empty() || batch.size() != modes.size()) throw ValidationError("train_step: bad batch");
  model.store().zero_grad();
  StepRecord rec;
  rec.step = step_index;
  rec.lr = lr;
  const double inv = 1.0 / static_cast<double>(batch.size());
  LossBreakdown& acc = rec.losses;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    ForwardOptions opts;
    opts.mode = modes[b];
    ForwardResult res = model.forward(*batch[b], opts);
    backward(scale(res.loss_terms.total, inv));
    acc.l_p += inv * res.losses.l_p;
    acc.l_e += inv * res.losses.l_e;
    acc.l_pe += inv * res.losses.l_pe;
    acc.l_matrix += inv * res.losses.l_matrix;
    acc.l_mask += inv * res.losses.l_mask;
    acc.total += inv * res.losses.total;
    acc.alpha = res.losses.alpha;
    acc.beta = res.losses.beta;
    acc.gamma = res.losses.gamma;
    acc.delta = res.losses.delta;
    rec.skipped += res.skipped ? 1 : 0;
  }
  rec.grad_norm = optimizer.step(model.store(), lr, step_index);
  return rec;
}

std::vector<Scene> load_training_scenes(const RunConfig& config) {
  if (!config.data.path.empty()) return load_dataset(config.data.path);
  return generate_dataset(synth_spec_from(config.data), config.data.num_images);
}

TrainResult train(PepModel& model, const std::vector<Scene>& scenes, const TrainOptions& options) {
  const RunConfig& config = model.config();
  const TrainConfig& tc = config.train;
  if (scenes.empty()) throw ValidationError("training set is empty");
  const auto start = std::chrono::steady_clock::now();

  const bool write = options.write_outputs && !tc.out_dir.empty();
  std::ofstream log;
  if (write) {
    std::filesystem::create_directories(tc.out_dir);
    write_run_manifest(tc.out_dir + "/run_manifest.json", config, tc.seed, dataset_hash(scenes), "train");
    log.open(tc.out_dir + "/train.log", std::ios::app);
    if (!log) throw IoError("cannot open " + tc.out_dir + "/train.log");
  }

  Rng rng(tc.seed ^ 0x9e3779b97f4a7c15ull);
  SgdOptimizer optimizer(tc);
  const int n = static_cast<int>(scenes.size());
  const int batch = std::min(tc.batch, n);
  const int steps_per_epoch = (n + batch - 1) / batch;
  const int gt_items = static_cast<int>(std::lround(tc.gt_mix * batch));

  TrainResult result;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<Scene> flipped;
  if (config.data.horizontal_flip) {
    for (const Scene& s : scenes) flipped.push_back(flip_horizontal(s));
  }
  std::bernoulli_distribution coin(0.5);
  int step = 0;
  for (int epoch = 0; epoch < tc.epochs && !result.early_stopped; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = learning_rate(tc, epoch);
    for (int k = 0; k < steps_per_epoch && !result.early_stopped; ++k) {
      std::vector<const Scene*> items;
      for (int b = k * batch; b < std::min(n, (k + 1) * batch); ++b) {
        const int idx = order[b];
        items.push_back(!flipped.empty() && coin(rng) ? &flipped[idx] : &scenes[idx]);
      }
      std::vector<DescriptorMode> modes(items.size(), DescriptorMode::kPredicted);
      std::vector<int> slots(items.size());
      std::iota(slots.begin(), slots.end(), 0);
      std::shuffle(slots.begin(), slots.end(), rng);
      for (int i = 0; i < std::min<int>(gt_items, static_cast<int>(items.size())); ++i) {
        modes[slots[i]] = DescriptorMode::kGroundTruth;
      }
      ++step;
      StepRecord rec = train_step(model, items, modes, optimizer, lr, step);
      rec.epoch = epoch;
      result.skipped_images += rec.skipped;
      result.history.push_back(rec);
      if (write && tc.log_every > 0 && step % tc.log_every == 0) log << format_log_line(rec) << '\n' << std::flush;
      if (options.on_step) options.on_step(rec);
      if (write && tc.checkpoint_every > 0 && step % tc.checkpoint_every == 0) {
        save_checkpoint(tc.out_dir + "/checkpoint-" + std::to_string(step), model);
      }
      const bool targets_set = tc.target_ap50 > 0.0 || tc.target_loss_ratio > 0.0;
      if (tc.eval_every > 0 && targets_set && step % tc.eval_every == 0 && step >= 20) {
        const double ratio = loss_ratio(result.history);
        const bool ratio_ok = tc.target_loss_ratio <= 0.0 || (ratio >= 0.0 && ratio <= tc.target_loss_ratio);
        if (ratio_ok) {
          const double ap50 = evaluate(model.infer(scenes), scenes, config.model.num_classes, config.eval).ap50;
          if (tc.target_ap50 <= 0.0 || ap50 >= tc.target_ap50) result.early_stopped = true;
        }
      }
    }
  }
  result.steps = step;
  result.loss_ratio = loss_ratio(result.history);
  result.ap50 = evaluate(model.infer(scenes), scenes, config.model.num_classes, config.eval).ap50;
  if (write) save_checkpoint(tc.out_dir + "/checkpoint-final", model);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<Scene>& scenes,
                                      const TrainOptions& options) {
  struct Switch {
    const char* name;
    const char* dir;
    bool excavating;
    bool purifying;
  };
  const Switch switches[] = {{"Baseline", "baseline", false, false},
                             {"+excavating", "excavating", true, false},
                             {"+purifying", "purifying", false, true},
                             {"full", "full", true, true}};
  std::vector<AblationRow> rows;
  for (const Switch& sw : switches) {
    RunConfig c = base;
    c.model.enable_excavating = sw.excavating;
    c.model.enable_purifying = sw.purifying;
    c.train.out_dir = base.train.out_dir + "/ablation-" + sw.dir;
    PepModel model(c, c.train.seed);
    const TrainResult res = train(model, scenes, options);

    AblationRow row;
    row.name = sw.name;
    row.excavating = sw.excavating;
    row.purifying = sw.purifying;
    row.steps = res.steps;
    row.seconds = res.seconds;
    row.last_losses = res.history.back().losses;
    {
      // Ground-truth sources, so the pathways are exercised even before the
      // perceiving branch produces confident originals.
      NoGradGuard no_grad;
      ForwardOptions probe;
      probe.mode = DescriptorMode::kGroundTruth;
      for (const Scene& s : scenes) {
        const ForwardResult f = model.forward(s, probe);
        for (const auto& d : f.descriptors.items) row.mined_descriptors += d.provenance == Provenance::kMined;
        row.affinity_entries += static_cast<int>(f.affinity.size());
      }
    }
    row.report = evaluate(model.infer(scenes), scenes, c.model.num_classes, c.eval);

    const LossBreakdown& l = row.last_losses;
    if (!sw.excavating && (l.l_e != 0.0 || l.l_pe != 0.0 || row.mined_descriptors != 0)) {
      throw Error(std::string("ablation ") + sw.name + ": excavation is disabled but still active");
    }
    if (!sw.purifying && (l.l_matrix != 0.0 || row.affinity_entries != 0)) {
      throw Error(std::string("ablation ") + sw.name + ": purifying is disabled but still active");
    }
    rows.push_back(row);
  }
  return rows;
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
  std::ostringstream table;
  table << std::left << std::setw(13) << "config" << std::right << std::fixed << std::setprecision(4);
  for (const char* col : {"AP", "AP50", "AP75", "AP_S", "AP_M", "AP_L", "L_E", "L_PE", "L_Matrix"}) {
    table << std::setw(10) << col;
  }
  table << "\n";
  for (const AblationRow& row : rows) {
    const EvalReport& r = row.report;
    const LossBreakdown& l = row.last_losses;
    table << std::left << std::setw(13) << row.name << std::right;
    for (double v : {r.ap, r.ap50, r.ap75, r.ap_small, r.ap_medium, r.ap_large, l.l_e, l.l_pe, l.l_matrix}) {
      table << std::setw(10) << v;
    }
    table << "\n";
  }
  return table.str();
}

}  // namespace pep
