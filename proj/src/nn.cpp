// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "pep/nn.hpp"

#include <cmath>

#include "pep/errors.hpp"
#include "pep/ops.hpp"

namespace pep {

Var ParameterStore::add(const std::string& name, Tensor init) {
  if (find(name) != nullptr) throw Error("duplicate parameter name " + name);
  Parameter p;
  p.name = name;
  p.velocity = Tensor::zeros_like(init);
  p.var = Var(std::move(init), true);
  params_.push_back(std::move(p));
  return params_.back().var;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

std::size_t ParameterStore::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var.value().size();
  return n;
}

Tensor normal(const Shape& shape, double stddev, Rng& rng) {
  Tensor t(shape);
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Tensor he_normal(const Shape& shape, int fan_in, Rng& rng) {
  return normal(shape, std::sqrt(2.0 / std::max(fan_in, 1)), rng);
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels,
               int kernel, int stride, Rng& rng, bool bias)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      stride_(stride),
      padding_(kernel / 2) {
  weight_ = store.add(name + ".weight", he_normal({out_channels, in_channels, kernel, kernel},
                                                  in_channels * kernel * kernel, rng));
  if (bias) bias_ = store.add(name + ".bias", Tensor({out_channels}));
}

Var Conv2d::operator()(const Var& x) const {
  return conv2d(x, weight_, bias_, stride_, padding_);
}

Linear::Linear(ParameterStore& store, const std::string& name, int in_features,
               int out_features, Rng& rng) {
  weight_ = store.add(name + ".weight", he_normal({out_features, in_features}, in_features, rng));
  bias_ = store.add(name + ".bias", Tensor({out_features}));
}

Var Linear::operator()(const Var& x) const { return linear(x, weight_, bias_); }

}  // namespace pep
