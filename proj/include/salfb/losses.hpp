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

#include <cstdint>
#include <span>
#include <vector>

#include "salfb/ops.hpp"
#include "salfb/rng.hpp"

namespace salfb {

/// Every scalar weighting constant of the training objective.
struct LossWeights {
  double alpha = 1.0;  // fixation error weight
  double beta = 1.0;   // non-fixation error weight
  double gamma = 1.0;  // KL-divergence term
  double delta = 0.1;  // correlation term
  double eta = 0.025;  // fixation/non-fixation error term
  double lambda1 = 1.0;  // deeply supervised head scores
  double lambda2 = 1.0;  // fused prediction

  void validate() const {
    for (double v : {alpha, beta, gamma, delta, eta, lambda1, lambda2}) {
      detail::check(v >= 0.0, "loss weights must be nonnegative");
    }
  }
};

/// A ground-truth fixation mask paired with an equal-size random selection of
/// non-fixation pixels. The two masks are disjoint; when fewer non-fixation
/// pixels exist than fixations, all of them are taken and each mask keeps its
/// own count for averaging.
struct FixationSample {
  Tensor fixations;
  Tensor nonfixations;
  std::size_t fixation_count = 0;
  std::size_t nonfixation_count = 0;
  std::uint64_t seed = 0;
};

/// Uniformly select, without replacement, as many non-fixation pixels as
/// there are fixations.
inline FixationSample sample_nonfixations(const Tensor& fixation_map, Rng& rng) {
  std::vector<std::size_t> pool;
  std::size_t n_fix = 0;
  for (std::size_t i = 0; i < fixation_map.numel(); ++i) {
    const double v = fixation_map[i];
    detail::check(v == 0.0 || v == 1.0, "fixation map must be binary");
    if (v == 1.0) {
      ++n_fix;
    } else {
      pool.push_back(i);
    }
  }
  detail::check(n_fix > 0, "empty fixation map");

  const std::size_t take = std::min(n_fix, pool.size());
  for (std::size_t j = 0; j < take; ++j) {
    const std::size_t k = j + static_cast<std::size_t>(rng.below(pool.size() - j));
    std::swap(pool[j], pool[k]);
  }
  Tensor nonfix = Tensor::zeros(fixation_map.shape());
  for (std::size_t j = 0; j < take; ++j) nonfix.values()[pool[j]] = 1.0;

  FixationSample sample;
  sample.fixations = fixation_map.clone();
  sample.nonfixations = std::move(nonfix);
  sample.fixation_count = n_fix;
  sample.nonfixation_count = take;
  sample.seed = rng.seed();
  return sample;
}

/// Squared error between the standardized prediction and standardized target,
/// evaluated at the fixation pixels and at the sampled non-fixation pixels,
/// each averaged by its own count:
///   alpha/N * sum((P'F - G'F)^2) + beta/M * sum((P'Fbar - G'Fbar)^2)
inline Tensor sfne_loss(Tape& tape, const Tensor& prediction, const Tensor& target, const FixationSample& sample,
                        double alpha = 1.0, double beta = 1.0) {
  detail::check_same_shape(prediction, target, "sfne_loss");
  detail::check_same_shape(prediction, sample.fixations, "sfne_loss(sample)");
  detail::check(sample.fixation_count > 0, "sfne_loss: sample has no fixations");

  Tensor diff = sub(tape, zscore(tape, prediction), zscore(tape, target));
  auto masked_term = [&](const Tensor& mask, std::size_t count) {
    Tensor m = mul(tape, diff, mask);
    return mul_scalar(tape, sum(tape, mul(tape, m, m)), 1.0 / static_cast<double>(count));
  };
  Tensor loss = mul_scalar(tape, masked_term(sample.fixations, sample.fixation_count), alpha);
  if (sample.nonfixation_count > 0) {
    loss = add(tape, loss, mul_scalar(tape, masked_term(sample.nonfixations, sample.nonfixation_count), beta));
  }
  return loss;
}

namespace detail {

/// KL divergence of sum-normalized maps, sum(Ghat * log(Ghat/(Phat+eps) + eps)).
/// With rectify set, the prediction is clamped at zero first and a map left
/// with no mass normalizes to zero instead of being rejected, so training can
/// recover from fully negative fused outputs.
inline Tensor kld_composed(Tape& tape, const Tensor& prediction, const Tensor& target, double eps, bool rectify) {
  check_same_shape(prediction, target, "kld_loss");
  double target_sum = 0.0;
  for (double v : target.values()) target_sum += v;
  check(target_sum > 0.0, "kld_loss: target map has no mass");
  Tensor ghat = Tensor::zeros(target.shape());
  for (std::size_t i = 0; i < target.numel(); ++i) ghat.values()[i] = target[i] / target_sum;

  Tensor p = rectify ? relu(tape, prediction) : prediction;
  double p_sum = 0.0;
  for (double v : p.values()) p_sum += v;

  Tensor phat;
  if (rectify && p_sum < eps) {
    phat = mul_scalar(tape, p, 0.0);
  } else {
    check(p_sum > 0.0, "kld_loss: prediction map has no mass");
    phat = div(tape, p, expand(tape, sum(tape, p), p.shape()));
  }
  Tensor ratio = div(tape, ghat, add_scalar(tape, phat, eps));
  return sum(tape, mul(tape, ghat, log(tape, add_scalar(tape, ratio, eps))));
}

}  // namespace detail

inline Tensor kld_loss(Tape& tape, const Tensor& prediction, const Tensor& target, double eps = 1e-8) {
  return detail::kld_composed(tape, prediction, target, eps, /*rectify=*/false);
}

/// 1 - Pearson correlation over all pixels (population statistics), so the
/// value stays nonnegative for use as a loss.
inline Tensor cc_loss(Tape& tape, const Tensor& prediction, const Tensor& target) {
  detail::check_same_shape(prediction, target, "cc_loss");
  Tensor r = mean(tape, mul(tape, zscore(tape, prediction), zscore(tape, target)));
  return add_scalar(tape, mul_scalar(tape, r, -1.0), 1.0);
}

/// Weighted sum of the three hybrid components.
inline double hybrid_combination(const LossWeights& w, double kld, double cc_loss_value, double sfne) {
  return w.gamma * kld + w.delta * cc_loss_value + w.eta * sfne;
}

/// gamma*KLD + delta*(1-CC) + eta*sFNE. The KLD component rectifies the
/// prediction, which is the identity on valid nonnegative maps.
inline Tensor hybrid_loss(Tape& tape, const Tensor& prediction, const Tensor& target, const FixationSample& sample,
                          const LossWeights& w, double eps = 1e-8) {
  Tensor k = detail::kld_composed(tape, prediction, target, eps, /*rectify=*/true);
  Tensor c = cc_loss(tape, prediction, target);
  Tensor s = sfne_loss(tape, prediction, target, sample, w.alpha, w.beta);
  return add(tape, add(tape, mul_scalar(tape, k, w.gamma), mul_scalar(tape, c, w.delta)), mul_scalar(tape, s, w.eta));
}

struct TotalLoss {
  Tensor total;
  Tensor score_term;  // mean hybrid loss over the head scores
  Tensor fuse_term;   // hybrid loss of the fused prediction
};

/// Deep supervision: every head score is held to the ground truth, averaged
/// over however many heads exist, plus the fused prediction term:
///   lambda1 * mean_n L(S_n) + lambda2 * L(fused)
inline TotalLoss total_loss(Tape& tape, std::span<const Tensor> scores, const Tensor& fused, const Tensor& target,
                            const FixationSample& sample, const LossWeights& w, double eps = 1e-8) {
  detail::check(!scores.empty(), "total_loss: no head scores");
  Tensor acc = hybrid_loss(tape, scores[0], target, sample, w, eps);
  for (std::size_t n = 1; n < scores.size(); ++n) {
    acc = add(tape, acc, hybrid_loss(tape, scores[n], target, sample, w, eps));
  }
  TotalLoss out;
  out.score_term = mul_scalar(tape, acc, 1.0 / static_cast<double>(scores.size()));
  out.fuse_term = hybrid_loss(tape, fused, target, sample, w, eps);
  out.total = add(tape, mul_scalar(tape, out.score_term, w.lambda1), mul_scalar(tape, out.fuse_term, w.lambda2));
  return out;
}

/// Negative mean standardized saliency at fixations. Kept as a comparison
/// fixture for loss-composition experiments, not a supported objective.
inline Tensor neg_nss_loss(Tape& tape, const Tensor& prediction, const FixationSample& sample) {
  detail::check_same_shape(prediction, sample.fixations, "neg_nss_loss");
  detail::check(sample.fixation_count > 0, "neg_nss_loss: sample has no fixations");
  Tensor at_fix = sum(tape, mul(tape, zscore(tape, prediction), sample.fixations));
  return mul_scalar(tape, at_fix, -1.0 / static_cast<double>(sample.fixation_count));
}

/// Mean squared error; comparison fixture alongside neg_nss_loss.
inline Tensor mse_loss(Tape& tape, const Tensor& prediction, const Tensor& target) {
  detail::check_same_shape(prediction, target, "mse_loss");
  Tensor d = sub(tape, prediction, target);
  return mean(tape, mul(tape, d, d));
}

}  // namespace salfb
