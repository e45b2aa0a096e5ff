// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pep/model.hpp"

namespace pep {

struct GradcheckOptions {
  double step = 1e-4;
  double tolerance = 1e-4;
  /// Coordinates probed per parameter tensor that the term reaches.
  int coords_per_tensor = 4;
  std::uint64_t seed = 0;
  std::optional<LossTerm> sabotage;
};

struct GradcheckTermResult {
  LossTerm term = LossTerm::kPerceiving;
  double max_rel_error = 0.0;
  std::string worst_parameter;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int checked = 0;
  /// Probes discarded because a relu changed state within ±step.
  int skipped = 0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckTermResult> terms;
  double seconds = 0.0;

  bool passed() const;
};

/// |a - n| / max(|a|, |n|, 1e-7).
double relative_error(double analytic, double numeric);

/// 32x32 scene with two touching squares and a separate circle.
Scene micro_scene();
/// Narrow model sized for finite differences.
RunConfig micro_config();

/// Central differences of each loss term against backprop on micro_scene,
/// with ground-truth descriptor locations so selection stays fixed.
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

/// One "L_P pass max_rel_err=... checked=..." line per term.
std::string format_gradcheck(const GradcheckReport& report);

}  // namespace pep
