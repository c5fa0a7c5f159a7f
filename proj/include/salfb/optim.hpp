// Copyright 2026 The salfb Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>

#include "salfb/tensor.hpp"

namespace salfb {

/// SGD hyperparameters; the learning rate decays multiplicatively per epoch.
struct OptimizerConfig {
  double lr = 0.04;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 10;
  double lr_decay = 0.9;
  double clip_norm = 1.0;  // global gradient-norm cap; 0 disables

  void validate() const {
    detail::check(clip_norm >= 0.0, "optimizer.clip_norm must be nonnegative");
    detail::check(lr > 0.0, "optimizer.lr must be positive");
    detail::check(momentum >= 0.0 && momentum < 1.0, "optimizer.momentum must lie in [0, 1)");
    detail::check(weight_decay >= 0.0, "optimizer.weight_decay must be nonnegative");
    detail::check(batch_size >= 1, "optimizer.batch_size must be at least 1");
    detail::check(lr_decay > 0.0 && lr_decay <= 1.0, "optimizer.lr_decay must lie in (0, 1]");
  }
};

/// A trainable leaf: a gradient-carrying tensor plus its momentum buffer.
/// Names are unique within a network and fix the checkpoint record order.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor momentum;
};

inline Parameter make_parameter(std::string name, Tensor value) {
  value.set_requires_grad(true);
  Tensor momentum = Tensor::zeros(value.shape());
  return Parameter{std::move(name), std::move(value), std::move(momentum)};
}

/// Scale gradients so their global L2 norm does not exceed max_norm.
inline void clip_gradients(std::span<Parameter> params, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (Parameter& p : params) {
    for (double g : p.value.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (Parameter& p : params) {
    for (double& g : p.value.grad()) g *= scale;
  }
}

/// SGD with momentum and classic weight decay:
///   v <- momentum * v + (g + weight_decay * w)
///   w <- w - lr * v
/// Gradients are zeroed after the step.
inline void sgd_step(std::span<Parameter> params, double lr, double momentum, double weight_decay) {
  for (Parameter& p : params) {
    std::span<double> w = p.value.values();
    std::span<double> g = p.value.grad();
    std::span<double> v = p.momentum.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum * v[i] + (g[i] + weight_decay * w[i]);
      w[i] -= lr * v[i];
    }
    p.value.zero_grad();
  }
}

}  // namespace salfb
