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

#include <algorithm>

#include "salfb/tensor.hpp"

namespace salfb {

/// Rescale to [0, 1]; a constant map normalizes to all zeros.
inline Tensor minmax_normalized(const Tensor& map) {
  detail::check(map.numel() > 0, "minmax of empty map");
  double lo = map[0], hi = map[0];
  for (double v : map.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Tensor out = Tensor::zeros(map.shape());
  if (hi > lo) {
    const double inv = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < map.numel(); ++i) out.values()[i] = (map[i] - lo) * inv;
  }
  return out;
}

/// Nearest-neighbor resize of a 2-D map, up or down.
inline Tensor nearest_resize(const Tensor& map, std::size_t out_h, std::size_t out_w) {
  detail::check(map.rank() == 2, "resize expects a 2-D map, got " + shape_str(map.shape()));
  detail::check(out_h > 0 && out_w > 0, "resize target must be nonempty");
  const std::size_t h = map.dim(0), w = map.dim(1);
  Tensor out = Tensor::zeros({out_h, out_w});
  for (std::size_t y = 0; y < out_h; ++y) {
    const double* row = map.values().data() + (y * h / out_h) * w;
    double* orow = out.values().data() + y * out_w;
    for (std::size_t x = 0; x < out_w; ++x) orow[x] = row[x * w / out_w];
  }
  return out;
}

}  // namespace salfb
