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
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "salfb/rng.hpp"
#include "salfb/tape.hpp"
#include "salfb/tensor.hpp"

namespace salfb {

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!same_shape(a, b)) {
    throw ValidationError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

inline void accumulate(Tensor t, std::span<const double> g) {
  std::span<double> dst = t.grad();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

// First output index oy >= 0 such that oy*stride - padding + k >= 0.
inline std::int64_t conv_lo(std::int64_t k, std::int64_t stride, std::int64_t padding) {
  const std::int64_t need = padding - k;
  return need <= 0 ? 0 : (need + stride - 1) / stride;
}

// One past the last output index with oy*stride - padding + k <= limit-1.
inline std::int64_t conv_hi(std::int64_t k, std::int64_t stride, std::int64_t padding, std::int64_t limit,
                            std::int64_t out_limit) {
  const std::int64_t top = limit - 1 + padding - k;
  if (top < 0) return 0;
  return std::min(out_limit, top / stride + 1);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reduction primitives
// ---------------------------------------------------------------------------

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a[i] + b[i];
  if (tape.recording() && (a.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    tape.record([a = a, b = b, out]() mutable {
      if (!out.has_grad()) return;
      if (a.requires_grad()) detail::accumulate(a, out.grad());
      if (b.requires_grad()) detail::accumulate(b, out.grad());
    });
  }
  return out;
}

inline Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a[i] - b[i];
  if (tape.recording() && (a.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    tape.record([a = a, b = b, out]() mutable {
      if (!out.has_grad()) return;
      std::span<const double> go = out.grad();
      if (a.requires_grad()) detail::accumulate(a, go);
      if (b.requires_grad()) {
        std::span<double> db = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) db[i] -= go[i];
      }
    });
  }
  return out;
}

inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a[i] * b[i];
  if (tape.recording() && (a.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    tape.record([a = a, b = b, out]() mutable {
      if (!out.has_grad()) return;
      std::span<const double> go = out.grad();
      if (a.requires_grad()) {
        std::span<double> da = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) da[i] += go[i] * b[i];
      }
      if (b.requires_grad()) {
        std::span<double> db = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) db[i] += go[i] * a[i];
      }
    });
  }
  return out;
}

/// Elementwise division; callers guarantee nonzero denominators.
inline Tensor div(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "div");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a[i] / b[i];
  if (tape.recording() && (a.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    tape.record([a = a, b = b, out]() mutable {
      if (!out.has_grad()) return;
      std::span<const double> go = out.grad();
      if (a.requires_grad()) {
        std::span<double> da = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) da[i] += go[i] / b[i];
      }
      if (b.requires_grad()) {
        std::span<double> db = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) db[i] -= go[i] * a[i] / (b[i] * b[i]);
      }
    });
  }
  return out;
}

inline Tensor add_scalar(Tape& tape, const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a[i] + c;
  if (tape.recording() && a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a = a, out]() mutable {
      if (out.has_grad()) detail::accumulate(a, out.grad());
    });
  }
  return out;
}

inline Tensor mul_scalar(Tape& tape, const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a[i] * c;
  if (tape.recording() && a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a = a, out, c]() mutable {
      if (!out.has_grad()) return;
      std::span<const double> go = out.grad();
      std::span<double> da = a.grad();
      for (std::size_t i = 0; i < go.size(); ++i) da[i] += go[i] * c;
    });
  }
  return out;
}

inline Tensor sum(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i];
  Tensor out = Tensor::scalar(s);
  if (tape.recording() && a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a = a, out]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      std::span<double> da = a.grad();
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += g;
    });
  }
  return out;
}

inline Tensor mean(Tape& tape, const Tensor& a) {
  detail::check(a.numel() > 0, "mean of empty tensor");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i];
  const double inv_n = 1.0 / static_cast<double>(a.numel());
  Tensor out = Tensor::scalar(s * inv_n);
  if (tape.recording() && a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a = a, out, inv_n]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0] * inv_n;
      std::span<double> da = a.grad();
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += g;
    });
  }
  return out;
}

/// Broadcast a single-element tensor to an arbitrary shape.
inline Tensor expand(Tape& tape, const Tensor& a, Shape shape) {
  detail::check(a.numel() == 1, "expand requires a scalar input, got shape " + shape_str(a.shape()));
  Tensor out = Tensor::full(std::move(shape), a[0]);
  if (tape.recording() && a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a = a, out]() mutable {
      if (!out.has_grad()) return;
      double s = 0.0;
      std::span<const double> go = out.grad();
      for (double g : go) s += g;
      a.grad()[0] += s;
    });
  }
  return out;
}

/// Natural logarithm; rejects nonpositive inputs so outputs stay finite.
inline Tensor log(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    detail::check(a[i] > 0.0, "log requires strictly positive values");
    out.values()[i] = std::log(a[i]);
  }
  if (tape.recording() && a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a = a, out]() mutable {
      if (!out.has_grad()) return;
      std::span<const double> go = out.grad();
      std::span<double> da = a.grad();
      for (std::size_t i = 0; i < go.size(); ++i) da[i] += go[i] / a[i];
    });
  }
  return out;
}

inline Tensor relu(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a[i] > 0.0 ? a[i] : 0.0;
  if (tape.recording() && a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a = a, out]() mutable {
      if (!out.has_grad()) return;
      std::span<const double> go = out.grad();
      std::span<double> da = a.grad();
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (a[i] > 0.0) da[i] += go[i];
      }
    });
  }
  return out;
}

/// Inverted dropout: zeroes with probability p and scales survivors by
/// 1/(1-p), so evaluation mode is the identity.
inline Tensor dropout(Tape& tape, const Tensor& a, double p, bool training, Rng& rng) {
  detail::check(p >= 0.0 && p < 1.0, "dropout probability must lie in [0, 1)");
  if (!training || p == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(a.numel());
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double m = rng.uniform() >= p ? keep_scale : 0.0;
    (*mask)[i] = m;
    out.values()[i] = a[i] * m;
  }
  if (tape.recording() && a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a = a, out, mask]() mutable {
      if (!out.has_grad()) return;
      std::span<const double> go = out.grad();
      std::span<double> da = a.grad();
      for (std::size_t i = 0; i < go.size(); ++i) da[i] += go[i] * (*mask)[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

inline Tensor concat(Tape& tape, std::span<const Tensor> inputs, std::size_t axis) {
  detail::check(!inputs.empty(), "concat of zero tensors");
  const Shape& first = inputs[0].shape();
  detail::check(axis < first.size(), "concat axis " + std::to_string(axis) + " out of range for rank " + std::to_string(first.size()));
  std::size_t axis_total = 0;
  for (const Tensor& t : inputs) {
    detail::check(t.rank() == first.size(), "concat rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d == axis) continue;
      detail::check(t.dim(d) == first[d], "concat: dim " + std::to_string(d) + " mismatch " +
                                              std::to_string(t.dim(d)) + " vs " + std::to_string(first[d]));
    }
    axis_total += t.dim(axis);
  }
  Shape out_shape = first;
  out_shape[axis] = axis_total;
  Tensor out = Tensor::zeros(out_shape);

  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

  std::size_t offset = 0;
  bool any_grad = false;
  for (const Tensor& t : inputs) {
    const std::size_t block = t.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(t.values().data() + o * block, block, out.values().data() + o * axis_total * inner + offset);
    }
    offset += block;
    any_grad = any_grad || t.requires_grad();
  }
  if (tape.recording() && any_grad) {
    out.set_requires_grad(true);
    std::vector<Tensor> held(inputs.begin(), inputs.end());
    tape.record([held, out, outer, inner, axis_total]() mutable {
      if (!out.has_grad()) return;
      std::span<const double> go = out.grad();
      std::size_t offset = 0;
      for (Tensor& t : held) {
        const std::size_t block = t.numel() / outer;
        if (t.requires_grad()) {
          std::span<double> dt = t.grad();
          for (std::size_t o = 0; o < outer; ++o) {
            const double* src = go.data() + o * axis_total * inner + offset;
            double* dst = dt.data() + o * block;
            for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
          }
        }
        offset += block;
      }
    });
  }
  return out;
}

inline Tensor concat(Tape& tape, std::initializer_list<Tensor> inputs, std::size_t axis) {
  std::vector<Tensor> v(inputs);
  return concat(tape, std::span<const Tensor>(v), axis);
}

/// Contiguous slice along one axis.
inline Tensor narrow(Tape& tape, const Tensor& a, std::size_t axis, std::size_t start, std::size_t len) {
  detail::check(axis < a.rank(), "narrow axis out of range");
  detail::check(len > 0 && start + len <= a.dim(axis), "narrow range [" + std::to_string(start) + ", " +
                                                           std::to_string(start + len) + ") exceeds dim " +
                                                           std::to_string(a.dim(axis)));
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  Tensor out = Tensor::zeros(out_shape);

  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= a.dim(d);
  for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
  const std::size_t in_block = a.dim(axis) * inner;
  const std::size_t out_block = len * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a.values().data() + o * in_block + start * inner, out_block, out.values().data() + o * out_block);
  }
  if (tape.recording() && a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a = a, out, outer, inner, in_block, out_block, start]() mutable {
      if (!out.has_grad()) return;
      std::span<const double> go = out.grad();
      std::span<double> da = a.grad();
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = go.data() + o * out_block;
        double* dst = da.data() + o * in_block + start * inner;
        for (std::size_t i = 0; i < out_block; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

inline Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
  detail::check(shape_numel(shape) == a.numel(),
                "reshape to " + shape_str(shape) + " incompatible with " + shape_str(a.shape()));
  Tensor out = Tensor::from(std::move(shape), std::vector<double>(a.values().begin(), a.values().end()));
  if (tape.recording() && a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a = a, out]() mutable {
      if (out.has_grad()) detail::accumulate(a, out.grad());
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

namespace detail {

inline void zscore_stats(std::span<const double> x, double& mean_out, double& popstd_out) {
  double s = 0.0;
  for (double v : x) s += v;
  const double m = s / static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - m) * (v - m);
  mean_out = m;
  popstd_out = std::sqrt(var / static_cast<double>(x.size()));
}

}  // namespace detail

/// Standardize to zero mean and unit population standard deviation.
/// A map whose deviation falls below eps normalizes to all zeros, which keeps
/// fixation-based scores well-defined on empty-signal maps.
inline Tensor zscore(Tape& tape, const Tensor& a, double eps = 1e-8) {
  detail::check(a.numel() > 0, "zscore of empty tensor");
  double m = 0.0, s = 0.0;
  detail::zscore_stats(a.values(), m, s);
  if (s < eps) return Tensor::zeros(a.shape());
  Tensor out = Tensor::zeros(a.shape());
  const double inv_s = 1.0 / s;
  for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = (a[i] - m) * inv_s;
  if (tape.recording() && a.requires_grad()) {
    out.set_requires_grad(true);
    // d z_i / d x_j = (delta_ij - 1/n - z_i z_j / n) / s
    tape.record([a = a, out, inv_s]() mutable {
      if (!out.has_grad()) return;
      std::span<const double> go = out.grad();
      std::span<const double> z = out.values();
      const double n = static_cast<double>(go.size());
      double g_mean = 0.0, gz_mean = 0.0;
      for (std::size_t i = 0; i < go.size(); ++i) {
        g_mean += go[i];
        gz_mean += go[i] * z[i];
      }
      g_mean /= n;
      gz_mean /= n;
      std::span<double> da = a.grad();
      for (std::size_t i = 0; i < go.size(); ++i) da[i] += (go[i] - g_mean - z[i] * gz_mean) * inv_s;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spatial operators on [N, C, H, W] tensors
// ---------------------------------------------------------------------------

/// 2-D cross-correlation with bias, the standard deep-learning convolution.
inline Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias, std::int64_t stride = 1,
                     std::int64_t padding = 0) {
  detail::check(input.rank() == 4, "conv2d input must be rank 4 [N,C,H,W], got " + shape_str(input.shape()));
  detail::check(weight.rank() == 4, "conv2d weight must be rank 4 [F,C,kh,kw], got " + shape_str(weight.shape()));
  detail::check(bias.rank() == 1, "conv2d bias must be rank 1, got " + shape_str(bias.shape()));
  detail::check(stride >= 1, "conv2d stride must be positive");
  detail::check(padding >= 0, "conv2d padding must be nonnegative");

  const std::int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::int64_t F = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  detail::check(static_cast<std::int64_t>(weight.dim(1)) == C,
                "conv2d: weight expects " + std::to_string(weight.dim(1)) + " input channels but input has " +
                    std::to_string(C));
  detail::check(static_cast<std::int64_t>(bias.dim(0)) == F,
                "conv2d: bias length " + std::to_string(bias.dim(0)) + " does not match " + std::to_string(F) +
                    " filters");
  detail::check(kh <= H + 2 * padding && kw <= W + 2 * padding,
                "conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) + " exceeds padded input " +
                    std::to_string(H + 2 * padding) + "x" + std::to_string(W + 2 * padding));

  const std::int64_t OH = (H + 2 * padding - kh) / stride + 1;
  const std::int64_t OW = (W + 2 * padding - kw) / stride + 1;
  Tensor out = Tensor::zeros({static_cast<std::size_t>(N), static_cast<std::size_t>(F), static_cast<std::size_t>(OH),
                              static_cast<std::size_t>(OW)});

  const double* in = input.values().data();
  const double* w = weight.values().data();
  const double* bv = bias.values().data();
  double* ov = out.values().data();

  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t f = 0; f < F; ++f) {
      double* plane = ov + (n * F + f) * OH * OW;
      std::fill_n(plane, OH * OW, bv[f]);
      for (std::int64_t c = 0; c < C; ++c) {
        const double* in_plane = in + (n * C + c) * H * W;
        const double* wk = w + (f * C + c) * kh * kw;
        for (std::int64_t ky = 0; ky < kh; ++ky) {
          const std::int64_t oy_lo = detail::conv_lo(ky, stride, padding);
          const std::int64_t oy_hi = detail::conv_hi(ky, stride, padding, H, OH);
          for (std::int64_t kx = 0; kx < kw; ++kx) {
            const double wv = wk[ky * kw + kx];
            const std::int64_t ox_lo = detail::conv_lo(kx, stride, padding);
            const std::int64_t ox_hi = detail::conv_hi(kx, stride, padding, W, OW);
            for (std::int64_t oy = oy_lo; oy < oy_hi; ++oy) {
              const std::int64_t iy = oy * stride - padding + ky;
              const double* irow = in_plane + iy * W + (ox_lo * stride - padding + kx);
              double* orow = plane + oy * OW;
              for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) {
                orow[ox] += wv * (*irow);
                irow += stride;
              }
            }
          }
        }
      }
    }
  }

  if (tape.recording() && (input.requires_grad() || weight.requires_grad() || bias.requires_grad())) {
    out.set_requires_grad(true);
    Tensor in_t = input, w_t = weight, b_t = bias;
    tape.record([in_t, w_t, b_t, out, N, C, H, W, F, kh, kw, OH, OW, stride, padding]() mutable {
      if (!out.has_grad()) return;
      const double* go = out.grad().data();
      const double* in = in_t.values().data();
      const double* w = w_t.values().data();

      if (b_t.requires_grad()) {
        double* db = b_t.grad().data();
        for (std::int64_t n = 0; n < N; ++n) {
          for (std::int64_t f = 0; f < F; ++f) {
            const double* gp = go + (n * F + f) * OH * OW;
            double s = 0.0;
            for (std::int64_t i = 0; i < OH * OW; ++i) s += gp[i];
            db[f] += s;
          }
        }
      }
      if (in_t.requires_grad()) {
        double* din = in_t.grad().data();
        for (std::int64_t n = 0; n < N; ++n) {
          for (std::int64_t f = 0; f < F; ++f) {
            const double* gp = go + (n * F + f) * OH * OW;
            for (std::int64_t c = 0; c < C; ++c) {
              double* dplane = din + (n * C + c) * H * W;
              const double* wk = w + (f * C + c) * kh * kw;
              for (std::int64_t ky = 0; ky < kh; ++ky) {
                const std::int64_t oy_lo = detail::conv_lo(ky, stride, padding);
                const std::int64_t oy_hi = detail::conv_hi(ky, stride, padding, H, OH);
                for (std::int64_t kx = 0; kx < kw; ++kx) {
                  const double wv = wk[ky * kw + kx];
                  if (wv == 0.0) continue;
                  const std::int64_t ox_lo = detail::conv_lo(kx, stride, padding);
                  const std::int64_t ox_hi = detail::conv_hi(kx, stride, padding, W, OW);
                  for (std::int64_t oy = oy_lo; oy < oy_hi; ++oy) {
                    const std::int64_t iy = oy * stride - padding + ky;
                    double* drow = dplane + iy * W + (ox_lo * stride - padding + kx);
                    const double* grow = gp + oy * OW;
                    for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) {
                      *drow += wv * grow[ox];
                      drow += stride;
                    }
                  }
                }
              }
            }
          }
        }
      }
      if (w_t.requires_grad()) {
        double* dw = w_t.grad().data();
        for (std::int64_t n = 0; n < N; ++n) {
          for (std::int64_t f = 0; f < F; ++f) {
            const double* gp = go + (n * F + f) * OH * OW;
            for (std::int64_t c = 0; c < C; ++c) {
              const double* in_plane = in + (n * C + c) * H * W;
              double* dwk = dw + (f * C + c) * kh * kw;
              for (std::int64_t ky = 0; ky < kh; ++ky) {
                const std::int64_t oy_lo = detail::conv_lo(ky, stride, padding);
                const std::int64_t oy_hi = detail::conv_hi(ky, stride, padding, H, OH);
                for (std::int64_t kx = 0; kx < kw; ++kx) {
                  const std::int64_t ox_lo = detail::conv_lo(kx, stride, padding);
                  const std::int64_t ox_hi = detail::conv_hi(kx, stride, padding, W, OW);
                  double acc = 0.0;
                  for (std::int64_t oy = oy_lo; oy < oy_hi; ++oy) {
                    const std::int64_t iy = oy * stride - padding + ky;
                    const double* irow = in_plane + iy * W + (ox_lo * stride - padding + kx);
                    const double* grow = gp + oy * OW;
                    for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) {
                      acc += grow[ox] * (*irow);
                      irow += stride;
                    }
                  }
                  dwk[ky * kw + kx] += acc;
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

/// Nearest-neighbor upsampling; out(y, x) = in(floor(y*H/out_h), floor(x*W/out_w)).
inline Tensor upsample_nearest(Tape& tape, const Tensor& input, std::size_t out_h, std::size_t out_w) {
  detail::check(input.rank() == 4, "upsample input must be rank 4 [N,C,H,W], got " + shape_str(input.shape()));
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  detail::check(out_h >= H && out_w >= W, "upsample cannot downscale " + std::to_string(H) + "x" + std::to_string(W) +
                                              " to " + std::to_string(out_h) + "x" + std::to_string(out_w));
  Tensor out = Tensor::zeros({N, C, out_h, out_w});
  const double* in = input.values().data();
  double* ov = out.values().data();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const double* ip = in + nc * H * W;
    double* op = ov + nc * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const double* irow = ip + (y * H / out_h) * W;
      double* orow = op + y * out_w;
      for (std::size_t x = 0; x < out_w; ++x) orow[x] = irow[x * W / out_w];
    }
  }
  if (tape.recording() && input.requires_grad()) {
    out.set_requires_grad(true);
    Tensor in_t = input;
    tape.record([in_t, out, N, C, H, W, out_h, out_w]() mutable {
      if (!out.has_grad()) return;
      const double* go = out.grad().data();
      double* din = in_t.grad().data();
      for (std::size_t nc = 0; nc < N * C; ++nc) {
        double* dp = din + nc * H * W;
        const double* gp = go + nc * out_h * out_w;
        for (std::size_t y = 0; y < out_h; ++y) {
          double* drow = dp + (y * H / out_h) * W;
          const double* grow = gp + y * out_w;
          for (std::size_t x = 0; x < out_w; ++x) drow[x * W / out_w] += grow[x];
        }
      }
    });
  }
  return out;
}

/// Bilinear upsampling with half-pixel centers. Optional alternative to
/// nearest-neighbor; never the default.
inline Tensor upsample_bilinear(Tape& tape, const Tensor& input, std::size_t out_h, std::size_t out_w) {
  detail::check(input.rank() == 4, "upsample input must be rank 4 [N,C,H,W], got " + shape_str(input.shape()));
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  detail::check(out_h >= H && out_w >= W, "upsample cannot downscale " + std::to_string(H) + "x" + std::to_string(W) +
                                              " to " + std::to_string(out_h) + "x" + std::to_string(out_w));
  struct Lerp {
    std::size_t i0, i1;
    double w1;  // weight of i1; i0 gets 1 - w1
  };
  auto make_axis = [](std::size_t in_n, std::size_t out_n) {
    std::vector<Lerp> axis(out_n);
    const double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
    for (std::size_t o = 0; o < out_n; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      if (src < 0.0) src = 0.0;
      const auto i0 = static_cast<std::size_t>(src);
      axis[o].i0 = std::min(i0, in_n - 1);
      axis[o].i1 = std::min(axis[o].i0 + 1, in_n - 1);
      axis[o].w1 = src - static_cast<double>(axis[o].i0);
    }
    return axis;
  };
  const std::vector<Lerp> ys = make_axis(H, out_h);
  const std::vector<Lerp> xs = make_axis(W, out_w);

  Tensor out = Tensor::zeros({N, C, out_h, out_w});
  const double* in = input.values().data();
  double* ov = out.values().data();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const double* ip = in + nc * H * W;
    double* op = ov + nc * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const Lerp& ly = ys[y];
      for (std::size_t x = 0; x < out_w; ++x) {
        const Lerp& lx = xs[x];
        const double top = ip[ly.i0 * W + lx.i0] * (1.0 - lx.w1) + ip[ly.i0 * W + lx.i1] * lx.w1;
        const double bot = ip[ly.i1 * W + lx.i0] * (1.0 - lx.w1) + ip[ly.i1 * W + lx.i1] * lx.w1;
        op[y * out_w + x] = top * (1.0 - ly.w1) + bot * ly.w1;
      }
    }
  }
  if (tape.recording() && input.requires_grad()) {
    out.set_requires_grad(true);
    Tensor in_t = input;
    tape.record([in_t, out, ys, xs, N, C, H, W, out_h, out_w]() mutable {
      if (!out.has_grad()) return;
      const double* go = out.grad().data();
      double* din = in_t.grad().data();
      for (std::size_t nc = 0; nc < N * C; ++nc) {
        double* dp = din + nc * H * W;
        const double* gp = go + nc * out_h * out_w;
        for (std::size_t y = 0; y < out_h; ++y) {
          const Lerp& ly = ys[y];
          for (std::size_t x = 0; x < out_w; ++x) {
            const Lerp& lx = xs[x];
            const double g = gp[y * out_w + x];
            dp[ly.i0 * W + lx.i0] += g * (1.0 - ly.w1) * (1.0 - lx.w1);
            dp[ly.i0 * W + lx.i1] += g * (1.0 - ly.w1) * lx.w1;
            dp[ly.i1 * W + lx.i0] += g * ly.w1 * (1.0 - lx.w1);
            dp[ly.i1 * W + lx.i1] += g * ly.w1 * lx.w1;
          }
        }
      }
    });
  }
  return out;
}

}  // namespace salfb
