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

// Test-only reference implementations. Everything here is written as the
// dumbest possible direct evaluation of the defining formulas, independent
// of the library's production code paths, so it can serve as an oracle.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "salfb/rng.hpp"
#include "salfb/tape.hpp"
#include "salfb/tensor.hpp"

namespace testutil {

/// Direct-summation 2-D cross-correlation, six nested loops, no tricks.
inline salfb::Tensor conv2d_naive(const salfb::Tensor& input, const salfb::Tensor& weight, const salfb::Tensor& bias,
                                  std::int64_t stride, std::int64_t padding) {
  const std::int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::int64_t F = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const std::int64_t OH = (H + 2 * padding - kh) / stride + 1;
  const std::int64_t OW = (W + 2 * padding - kw) / stride + 1;
  salfb::Tensor out = salfb::Tensor::zeros({static_cast<std::size_t>(N), static_cast<std::size_t>(F),
                                            static_cast<std::size_t>(OH), static_cast<std::size_t>(OW)});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t f = 0; f < F; ++f)
      for (std::int64_t oy = 0; oy < OH; ++oy)
        for (std::int64_t ox = 0; ox < OW; ++ox) {
          double acc = bias[static_cast<std::size_t>(f)];
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t ky = 0; ky < kh; ++ky)
              for (std::int64_t kx = 0; kx < kw; ++kx) {
                const std::int64_t iy = oy * stride - padding + ky;
                const std::int64_t ix = ox * stride - padding + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += input.at({static_cast<std::size_t>(n), static_cast<std::size_t>(c), static_cast<std::size_t>(iy),
                                 static_cast<std::size_t>(ix)}) *
                       weight.at({static_cast<std::size_t>(f), static_cast<std::size_t>(c), static_cast<std::size_t>(ky),
                                  static_cast<std::size_t>(kx)});
              }
          out.at({static_cast<std::size_t>(n), static_cast<std::size_t>(f), static_cast<std::size_t>(oy),
                  static_cast<std::size_t>(ox)}) = acc;
        }
  return out;
}

/// Central finite differences of a scalar function with respect to one input
/// tensor, compared against the analytic gradient produced by a tape sweep.
/// Returns the worst relative error over all coordinates.
inline double fd_max_rel_err(const std::function<salfb::Tensor(salfb::Tape&)>& f, salfb::Tensor input, double h = 1e-6,
                             double abs_tol = 1e-10) {
  input.set_requires_grad(true);
  input.zero_grad();
  salfb::Tape tape;
  salfb::Tensor loss = f(tape);
  tape.backward(loss);
  std::vector<double> analytic(input.grad().begin(), input.grad().end());
  if (analytic.empty()) analytic.assign(input.numel(), 0.0);
  input.zero_grad();

  double worst = 0.0;
  for (std::size_t i = 0; i < input.numel(); ++i) {
    const double saved = input.values()[i];
    salfb::Tape silent(false);
    input.values()[i] = saved + h;
    const double up = f(silent).value();
    input.values()[i] = saved - h;
    const double down = f(silent).value();
    input.values()[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double diff = std::abs(analytic[i] - numeric);
    if (diff > abs_tol) worst = std::max(worst, diff / std::max(std::abs(analytic[i]), std::abs(numeric)));
  }
  return worst;
}

inline salfb::Tensor random_tensor(salfb::Shape shape, salfb::Rng& rng, double lo = -1.0, double hi = 1.0) {
  salfb::Tensor t = salfb::Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t.values()[i] = rng.uniform(lo, hi);
  return t;
}

/// Uniform values quantized to a small set of levels, so ties actually occur.
inline salfb::Tensor random_quantized(salfb::Shape shape, salfb::Rng& rng, int levels) {
  salfb::Tensor t = salfb::Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) {
    t.values()[i] = static_cast<double>(rng.below(static_cast<std::uint64_t>(levels))) / (levels - 1);
  }
  return t;
}

}  // namespace testutil
