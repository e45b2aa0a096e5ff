// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pep/ops.hpp"

namespace pep::testing {

/// Worst relative error between backprop and central differences of
/// L = Σ R ⊙ f(inputs) for a fixed random R, over every input coordinate.
inline double max_fd_error(std::vector<Tensor> inputs,
                           const std::function<Var(const std::vector<Var>&)>& f, double step = 1e-5,
                           unsigned seed = 11) {
  std::vector<Var> vars;
  for (Tensor& t : inputs) vars.emplace_back(std::move(t), true);
  Var out = f(vars);
  Tensor r(out.shape());
  std::uint64_t state = seed;
  for (double& v : r.values()) {
    state = state * 6364136223846793005ull + 1442695040888963407ull;
    v = static_cast<double>(state >> 11) / 9007199254740992.0 - 0.5;
  }
  const int n = static_cast<int>(r.size());
  backward(matmul(reshape(out, {1, n}), reshape(Var(r), {n, 1})));

  auto loss = [&] {
    NoGradGuard no_grad;
    const Var held = f(vars);
    const Tensor& o = held.value();
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) s += r[i] * o[i];
    return s;
  };
  double worst = 0.0;
  for (Var& v : vars) {
    const Tensor g = v.grad().empty() ? Tensor::zeros_like(v.value()) : v.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      double& x = v.mutable_value()[i];
      const double saved = x;
      x = saved + step;
      const double up = loss();
      x = saved - step;
      const double down = loss();
      x = saved;
      const double numeric = (up - down) / (2.0 * step);
      worst = std::max(worst, std::abs(numeric - g[i]) / std::max({std::abs(numeric), std::abs(g[i]), 1e-6}));
    }
  }
  return worst;
}

}  // namespace pep::testing
