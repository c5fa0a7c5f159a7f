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
#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include "salfb/losses.hpp"
#include "salfb/ops.hpp"
#include "salfb/rng.hpp"

namespace salfb {

/// Recorded gaze locations on one map: in-bounds, deduplicated, sorted.
struct FixationSet {
  std::vector<std::pair<int, int>> points;  // (row, col)
  std::array<std::size_t, 2> map_shape{0, 0};
};

inline FixationSet make_fixation_set(std::vector<std::pair<int, int>> points, std::array<std::size_t, 2> map_shape) {
  for (const auto& [r, c] : points) {
    detail::check(r >= 0 && c >= 0 && static_cast<std::size_t>(r) < map_shape[0] &&
                      static_cast<std::size_t>(c) < map_shape[1],
                  "fixation (" + std::to_string(r) + ", " + std::to_string(c) + ") outside map " +
                      std::to_string(map_shape[0]) + "x" + std::to_string(map_shape[1]));
  }
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());
  return FixationSet{std::move(points), map_shape};
}

/// Binary H x W mask with ones at the fixation points.
inline Tensor fixation_mask(const FixationSet& fix) {
  Tensor m = Tensor::zeros({fix.map_shape[0], fix.map_shape[1]});
  for (const auto& [r, c] : fix.points) {
    m.values()[static_cast<std::size_t>(r) * fix.map_shape[1] + static_cast<std::size_t>(c)] = 1.0;
  }
  return m;
}

namespace detail {

inline void check_map_matches(const Tensor& map, const FixationSet& fix, const char* op) {
  check(map.rank() == 2, std::string(op) + ": map must be rank 2, got " + shape_str(map.shape()));
  check(map.dim(0) == fix.map_shape[0] && map.dim(1) == fix.map_shape[1],
        std::string(op) + ": map " + shape_str(map.shape()) + " does not match fixation grid " +
            std::to_string(fix.map_shape[0]) + "x" + std::to_string(fix.map_shape[1]));
}

/// Threshold-sweep ROC area, thresholds at each distinct positive value,
/// trapezoidal integration. Counts are accumulated as integers and divided
/// once, so equal inputs give bit-equal areas regardless of algorithm
/// details, and a constant map comes out at exactly one half.
inline double auc_threshold_sweep(std::vector<double> pos, std::vector<double> neg) {
  check(!pos.empty(), "auc: no positive samples");
  check(!neg.empty(), "auc: no negative samples");
  std::sort(pos.begin(), pos.end(), std::greater<>());
  std::sort(neg.begin(), neg.end(), std::greater<>());

  const std::size_t n_pos = pos.size(), n_neg = neg.size();
  std::uint64_t area2 = 0;  // twice the area, scaled by n_pos*n_neg
  std::size_t tp = 0, fp = 0, prev_tp = 0, prev_fp = 0;
  while (tp < n_pos) {
    const double threshold = pos[tp];
    while (tp < n_pos && pos[tp] == threshold) ++tp;
    while (fp < n_neg && neg[fp] >= threshold) ++fp;
    area2 += static_cast<std::uint64_t>(fp - prev_fp) * static_cast<std::uint64_t>(tp + prev_tp);
    prev_tp = tp;
    prev_fp = fp;
  }
  area2 += static_cast<std::uint64_t>(n_neg - prev_fp) * static_cast<std::uint64_t>(n_pos + prev_tp);
  return static_cast<double>(area2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline std::vector<double> values_at(const Tensor& map, const FixationSet& fix) {
  std::vector<double> v;
  v.reserve(fix.points.size());
  for (const auto& [r, c] : fix.points) {
    v.push_back(map[static_cast<std::size_t>(r) * map.dim(1) + static_cast<std::size_t>(c)]);
  }
  return v;
}

}  // namespace detail

/// Mean standardized saliency at the fixation pixels; a constant map scores 0.
inline double nss(const Tensor& prediction, const FixationSet& fix, double eps = 1e-8) {
  detail::check_map_matches(prediction, fix, "nss");
  detail::check(!fix.points.empty(), "nss: empty fixation set");
  Tape tape(false);
  Tensor z = zscore(tape, prediction, eps);
  double acc = 0.0;
  for (const auto& [r, c] : fix.points) acc += z[static_cast<std::size_t>(r) * prediction.dim(1) + c];
  return acc / static_cast<double>(fix.points.size());
}

/// Pearson linear correlation over all pixels, population statistics.
inline double cc(const Tensor& prediction, const Tensor& target, double eps = 1e-8) {
  detail::check_same_shape(prediction, target, "cc");
  Tape tape(false);
  Tensor zp = zscore(tape, prediction, eps);
  Tensor zg = zscore(tape, target, eps);
  double acc = 0.0;
  for (std::size_t i = 0; i < zp.numel(); ++i) acc += zp[i] * zg[i];
  return acc / static_cast<double>(zp.numel());
}

/// Histogram intersection of the sum-normalized maps.
inline double sim(const Tensor& prediction, const Tensor& target) {
  detail::check_same_shape(prediction, target, "sim");
  double ps = 0.0, gs = 0.0;
  for (std::size_t i = 0; i < prediction.numel(); ++i) {
    ps += prediction[i];
    gs += target[i];
  }
  detail::check(ps > 0.0 && gs > 0.0, "sim: maps must have positive mass");
  double acc = 0.0;
  for (std::size_t i = 0; i < prediction.numel(); ++i) acc += std::min(prediction[i] / ps, target[i] / gs);
  return acc;
}

/// KL divergence of the sum-normalized maps; one implementation shared with
/// the training loss.
inline double kldiv(const Tensor& prediction, const Tensor& target, double eps = 1e-8) {
  Tape tape(false);
  return kld_loss(tape, prediction, target, eps).value();
}

/// ROC area with fixations as positives and every non-fixation pixel as a
/// negative.
inline double auc_judd(const Tensor& prediction, const FixationSet& fix) {
  detail::check_map_matches(prediction, fix, "auc_judd");
  detail::check(!fix.points.empty(), "auc_judd: empty fixation set");
  std::vector<double> pos = detail::values_at(prediction, fix);
  std::set<std::pair<int, int>> fixed(fix.points.begin(), fix.points.end());
  std::vector<double> neg;
  neg.reserve(prediction.numel() - pos.size());
  for (std::size_t r = 0; r < prediction.dim(0); ++r) {
    for (std::size_t c = 0; c < prediction.dim(1); ++c) {
      if (!fixed.count({static_cast<int>(r), static_cast<int>(c)})) {
        neg.push_back(prediction[r * prediction.dim(1) + c]);
      }
    }
  }
  return detail::auc_threshold_sweep(std::move(pos), std::move(neg));
}

/// ROC area with negatives sampled uniformly from all pixels (with
/// replacement), one fixation-sized sample per split, averaged over splits.
inline double auc_borji(const Tensor& prediction, const FixationSet& fix, int n_splits, Rng& rng) {
  detail::check_map_matches(prediction, fix, "auc_borji");
  detail::check(!fix.points.empty(), "auc_borji: empty fixation set");
  detail::check(n_splits > 0, "auc_borji: n_splits must be positive");
  const std::vector<double> pos = detail::values_at(prediction, fix);
  double acc = 0.0;
  for (int s = 0; s < n_splits; ++s) {
    std::vector<double> neg(pos.size());
    for (std::size_t j = 0; j < neg.size(); ++j) neg[j] = prediction[rng.below(prediction.numel())];
    acc += detail::auc_threshold_sweep(pos, std::move(neg));
  }
  return acc / n_splits;
}

/// Shuffled ROC area: negatives are drawn without replacement from fixations
/// recorded on other images, one sample per split.
inline double shuffled_auc(const Tensor& prediction, const FixationSet& fix, const FixationSet& other_fix, int n_splits,
                           Rng& rng) {
  detail::check_map_matches(prediction, fix, "sauc");
  detail::check_map_matches(prediction, other_fix, "sauc(other)");
  detail::check(!fix.points.empty(), "sauc: empty fixation set");
  detail::check(!other_fix.points.empty(), "sauc: empty shuffle set");
  detail::check(n_splits > 0, "sauc: n_splits must be positive");
  const std::vector<double> pos = detail::values_at(prediction, fix);
  const std::vector<double> pool = detail::values_at(prediction, other_fix);
  const std::size_t take = std::min(pos.size(), pool.size());
  double acc = 0.0;
  std::vector<std::size_t> order(pool.size());
  for (int s = 0; s < n_splits; ++s) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> neg(take);
    for (std::size_t j = 0; j < take; ++j) {
      const std::size_t k = j + static_cast<std::size_t>(rng.below(order.size() - j));
      std::swap(order[j], order[k]);
      neg[j] = pool[order[j]];
    }
    acc += detail::auc_threshold_sweep(pos, std::move(neg));
  }
  return acc / n_splits;
}

/// Mean log2 probability gain of the prediction over a baseline map at the
/// fixation pixels, both maps sum-normalized.
inline double info_gain(const Tensor& prediction, const FixationSet& fix, const Tensor& baseline, double eps = 1e-8) {
  detail::check_map_matches(prediction, fix, "info_gain");
  detail::check_same_shape(prediction, baseline, "info_gain(baseline)");
  detail::check(!fix.points.empty(), "info_gain: empty fixation set");
  double ps = 0.0, bs = 0.0;
  for (std::size_t i = 0; i < prediction.numel(); ++i) {
    ps += prediction[i];
    bs += baseline[i];
  }
  detail::check(ps > 0.0, "info_gain: prediction has no mass");
  detail::check(bs > 0.0, "info_gain: baseline has no mass");
  double acc = 0.0;
  for (const auto& [r, c] : fix.points) {
    const std::size_t i = static_cast<std::size_t>(r) * prediction.dim(1) + c;
    acc += std::log2(prediction[i] / ps + eps) - std::log2(baseline[i] / bs + eps);
  }
  return acc / static_cast<double>(fix.points.size());
}

}  // namespace salfb
