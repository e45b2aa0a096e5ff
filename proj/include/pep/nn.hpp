// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pep/autograd.hpp"

namespace pep {

using Rng = std::mt19937_64;

/// A named learnable tensor plus its optimizer state.
struct Parameter {
  std::string name;
  Var var;
  Tensor velocity;
};

/// Owns every learnable tensor of a model, in registration order.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  /// Registers a parameter; names must be unique.
  Var add(const std::string& name, Tensor init);

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  const Parameter* find(const std::string& name) const;
  Parameter* find(const std::string& name);

  void zero_grad();
  std::size_t total_size() const;

 private:
  std::vector<Parameter> params_;
};

/// Normal(0, sqrt(2 / fan_in)) weights.
Tensor he_normal(const Shape& shape, int fan_in, Rng& rng);
Tensor normal(const Shape& shape, double stddev, Rng& rng);

/// Square-kernel convolution layer.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels,
         int kernel, int stride, Rng& rng, bool bias = true);

  Var operator()(const Var& x) const;

  Var& weight() { return weight_; }
  Var& bias() { return bias_; }
  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }
  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }

 private:
  Var weight_;
  Var bias_;
  int in_channels_ = 0;
  int out_channels_ = 0;
  int stride_ = 1;
  int padding_ = 0;
};

/// Fully connected layer on a vector.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in_features, int out_features,
         Rng& rng);

  Var operator()(const Var& x) const;

  Var& weight() { return weight_; }
  Var& bias() { return bias_; }

 private:
  Var weight_;
  Var bias_;
};

}  // namespace pep
