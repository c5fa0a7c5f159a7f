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

#include <functional>
#include <vector>

#include "salfb/tensor.hpp"

namespace salfb {

/// Ordered record of executed differentiable operations.
///
/// Operations append themselves in execution order, so inputs always precede
/// the operation that consumed them. backward() replays the record once, in
/// reverse. A tape belongs to exactly one training loop; it is not shared
/// across threads.
class Tape {
 public:
  Tape() = default;
  explicit Tape(bool recording) : recording_(recording) {}

  bool recording() const { return recording_; }

  void record(std::function<void()> backward_fn) {
    if (recording_) entries_.push_back(std::move(backward_fn));
  }

  std::size_t size() const { return entries_.size(); }

  /// Reverse-mode sweep from a scalar root. Seeds the root gradient with 1
  /// and visits every recorded operation exactly once, newest first.
  /// Gradients accumulate into every tensor on the path that requires them.
  void backward(Tensor root) {
    detail::check(root.numel() == 1,
                  "backward requires a scalar root, got shape " + shape_str(root.shape()));
    root.grad()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  }

  void clear() { entries_.clear(); }

 private:
  bool recording_ = true;
  std::vector<std::function<void()>> entries_;
};

}  // namespace salfb
