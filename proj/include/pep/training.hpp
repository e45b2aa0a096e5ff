// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pep/model.hpp"

namespace pep {

/// Step decay: lr · factor^k where k counts milestones (fractions of the
/// epoch budget) already reached by the 0-based `epoch`.
double learning_rate(const TrainConfig& config, int epoch);

/// SGD with momentum and L2 weight decay, after global-norm clipping.
class SgdOptimizer {
 public:
  explicit SgdOptimizer(const TrainConfig& config) : config_(config) {}

  /// Applies one update and returns the gradient norm before clipping.
  /// Throws NumericError on a non-finite gradient.
  double step(ParameterStore& store, double lr, int step_index);

 private:
  TrainConfig config_;
};

struct StepRecord {
  int step = 0;  // 1-based
  int epoch = 0;
  double lr = 0.0;
  LossBreakdown losses;  // mean over the batch
  double grad_norm = 0.0;
  int skipped = 0;  // batch items without descriptors
};

/// "step=12 epoch=11 lr=0.01 L_P=... total=..."
std::string format_log_line(const StepRecord& record);

/// Mean total of the last 20 recorded steps over the step-10 total
/// (negative when fewer than 10 steps were run).
double loss_ratio(const std::vector<StepRecord>& history);

struct TrainOptions {
  /// Write log, manifest and checkpoints under config.train.out_dir.
  bool write_outputs = true;
  std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
  int steps = 0;
  bool early_stopped = false;
  double ap50 = kUndefinedMetric;
  double loss_ratio = -1.0;
  double seconds = 0.0;
  int skipped_images = 0;
  std::vector<StepRecord> history;
};

/// Runs one optimization step over a batch; item b uses modes[b].
StepRecord train_step(PepModel& model, const std::vector<const Scene*>& batch,
                      const std::vector<DescriptorMode>& modes, SgdOptimizer& optimizer, double lr,
                      int step_index);

/// Full training run over `scenes` with the model's run config.
TrainResult train(PepModel& model, const std::vector<Scene>& scenes, const TrainOptions& options = {});

/// One configuration of the mechanism switchboard after training.
struct AblationRow {
  std::string name;
  bool excavating = false;
  bool purifying = false;
  EvalReport report;
  /// Losses of the final training step.
  LossBreakdown last_losses;
  /// Mined descriptors and affinity entries in a forward pass over the scenes
  /// with ground-truth sources.
  int mined_descriptors = 0;
  int affinity_entries = 0;
  int steps = 0;
  double seconds = 0.0;
};

/// Trains and scores Baseline, +excavating, +purifying and full from one
/// config. Throws Error when a disabled mechanism still yields a loss or a pathway.
std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<Scene>& scenes,
                                      const TrainOptions& options = {});

/// Fixed-width table of the rows with AP columns and the mechanism losses.
std::string format_ablation(const std::vector<AblationRow>& rows);

/// Training scenes from the config: the dataset directory, or synthesized in memory.
std::vector<Scene> load_training_scenes(const RunConfig& config);

}  // namespace pep
