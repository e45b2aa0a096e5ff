// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "pep/autograd.hpp"

namespace pep {

/// How a per-element loss is reduced to a scalar.
enum class Reduction { kMean, kSum };

/// Clamp applied to probabilities before taking logs.
inline constexpr double kProbEpsilon = 1e-12;

// Elementwise and scalar arithmetic.
Var add(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var relu(const Var& x);

/// While alive, folds the on/off pattern of every relu on this thread into
/// a hash. Two forward passes with equal hashes ran on the same linear piece.
class ReluPatternRecorder {
 public:
  ReluPatternRecorder();
  ~ReluPatternRecorder();
  ReluPatternRecorder(const ReluPatternRecorder&) = delete;
  ReluPatternRecorder& operator=(const ReluPatternRecorder&) = delete;

  std::uint64_t hash() const { return hash_; }

 private:
  friend Var relu(const Var& x);
  std::uint64_t hash_ = 1469598103934665603ull;
  ReluPatternRecorder* previous_;
};
Var sum_all(const Var& x);
/// Σ_k weights[k] * terms[k] over scalar terms.
Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights);

/// 2-D convolution of a [C,H,W] map with weights [O,C,k,k] and optional bias [O].
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding);

/// Convolution of a spatially constant map (vector `d` broadcast over a
/// full_h × full_w grid, zero padded) evaluated only on the window
/// rows [row0, row0+h) × cols [col0, col0+w). Weight is [O,C,k,k].
Var broadcast_conv_window(const Var& d, const Var& weight, int full_h, int full_w, int row0,
                          int col0, int h, int w, int padding);

Var crop(const Var& x, int row0, int col0, int h, int w);
Var resize_nearest(const Var& x, int out_h, int out_w);
/// Bilinear resize with half-pixel centers (align_corners = false).
Var resize_bilinear(const Var& x, int out_h, int out_w);
Var concat_channels(const std::vector<Var>& parts);

/// Channel vector x[:, row, col] of a [C,H,W] map.
Var gather_pixel(const Var& x, int row, int col);
/// Appends constant entries to a vector.
Var append_constant(const Var& v, const std::vector<double>& extra);
/// W x + b for x [K], W [O,K], b [O].
Var linear(const Var& x, const Var& weight, const Var& bias);
Var stack_rows(const std::vector<Var>& rows);
Var transpose(const Var& x);
Var matmul(const Var& a, const Var& b);
/// factor * P Pᵀ + diag_bias * I for P [N,C].
Var scaled_gram(const Var& p, double factor, double diag_bias);
Var reshape(const Var& x, Shape shape);

/// Softmax over axis 0 of logits [C, ...] followed by the categorical
/// cross-entropy against `labels` (one class index per trailing position).
Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels, Reduction reduction);

/// Sigmoid followed by binary cross-entropy against same-shape targets in {0,1}.
Var sigmoid_bce(const Var& logits, const Tensor& targets, Reduction reduction);

/// 1 - 2|p∩t| / (|p| + |t|) with p = sigmoid(logits) and a smoothing of 1.
Var sigmoid_dice(const Var& logits, const Tensor& targets);

/// Identity forward, negated gradient. Only the gradient checker's negative
/// control uses this.
Var flip_gradient(const Var& x);

// Value-level helpers shared with the differentiable ops.
double sigmoid(double z);
Tensor sigmoid(const Tensor& logits);
/// Softmax over axis 0 of [C, ...].
Tensor softmax_channels(const Tensor& logits);
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);

}  // namespace pep
