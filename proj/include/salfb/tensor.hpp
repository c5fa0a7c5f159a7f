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

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "salfb/common.hpp"

namespace salfb {

/// Dense N-dimensional array of doubles with an optional gradient buffer.
///
/// A Tensor is a cheap-to-copy handle onto shared storage. Operations never
/// mutate their inputs; once produced, a tensor's values are immutable by
/// contract, which makes read-only sharing across evaluation workers safe.
/// The only sanctioned in-place writes are optimizer updates on parameter
/// leaves and gradient accumulation during a backward pass.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }

  static Tensor full(Shape shape, double fill) { return Tensor(std::move(shape), fill); }

  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

  static Tensor from(Shape shape, std::vector<double> values) {
    detail::check(shape_numel(shape) == values.size(),
                  "tensor data length " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
    Tensor t;
    t.d_ = std::make_shared<Data>();
    t.d_->shape = std::move(shape);
    t.d_->values = std::move(values);
    return t;
  }

  bool defined() const { return d_ != nullptr; }

  const Shape& shape() const { return d_->shape; }
  std::size_t rank() const { return d_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return d_->shape[axis]; }
  std::size_t numel() const { return d_->values.size(); }

  std::span<const double> values() const { return d_->values; }
  std::span<double> values() { return d_->values; }

  double operator[](std::size_t flat) const { return d_->values[flat]; }

  /// Row-major multi-index access.
  double at(std::initializer_list<std::size_t> idx) const { return d_->values[flat_index(idx)]; }
  double& at(std::initializer_list<std::size_t> idx) { return d_->values[flat_index(idx)]; }

  /// Value of a single-element tensor.
  double value() const {
    detail::check(numel() == 1, "value() requires a scalar tensor, got shape " + shape_str(shape()));
    return d_->values[0];
  }

  bool requires_grad() const { return d_ && d_->requires_grad; }

  Tensor& set_requires_grad(bool on) {
    d_->requires_grad = on;
    return *this;
  }

  /// Gradient buffer, zero-initialized on first access.
  std::span<double> grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
    return d_->grad;
  }

  std::span<const double> grad() const { return d_->grad; }

  /// True once the gradient buffer has been materialized.
  bool has_grad() const { return d_ && !d_->grad.empty(); }

  void zero_grad() {
    if (!d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
  }

  /// Storage identity; equal ids mean two handles share the same buffer.
  const void* id() const { return d_.get(); }

  Tensor clone() const {
    Tensor t = from(d_->shape, d_->values);
    return t;
  }

 private:
  struct Data {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };

  Tensor(Shape shape, double fill) : d_(std::make_shared<Data>()) {
    d_->shape = std::move(shape);
    d_->values.assign(shape_numel(d_->shape), fill);
  }

  std::size_t flat_index(std::initializer_list<std::size_t> idx) const {
    detail::check(idx.size() == d_->shape.size(), "index rank mismatch");
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
      detail::check(i < d_->shape[axis], "index out of bounds on axis " + std::to_string(axis));
      flat = flat * d_->shape[axis] + i;
      ++axis;
    }
    return flat;
  }

  std::shared_ptr<Data> d_;
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

}  // namespace salfb
