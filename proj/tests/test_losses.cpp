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

#include <catch2/catch.hpp>

#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "helpers.hpp"
#include "salfb/losses.hpp"

using namespace salfb;

namespace {

// Independent long-double evaluations of the loss formulas, two-pass and
// index-by-index, used as oracles for the tape-based implementations.

std::vector<long double> zscore_oracle(const Tensor& m, long double eps = 1e-8L) {
  const std::size_t n = m.numel();
  long double mean = 0.0L;
  for (std::size_t i = 0; i < n; ++i) mean += m[i];
  mean /= n;
  long double var = 0.0L;
  for (std::size_t i = 0; i < n; ++i) var += (m[i] - mean) * (m[i] - mean);
  const long double sd = std::sqrt(var / n);
  std::vector<long double> z(n, 0.0L);
  if (sd < eps) return z;
  for (std::size_t i = 0; i < n; ++i) z[i] = (m[i] - mean) / sd;
  return z;
}

long double sfne_oracle(const Tensor& p, const Tensor& g, const Tensor& fix, const Tensor& nonfix, long double alpha,
                        long double beta) {
  const auto zp = zscore_oracle(p);
  const auto zg = zscore_oracle(g);
  long double n_fix = 0.0L, n_non = 0.0L, fix_cost = 0.0L, non_cost = 0.0L;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    n_fix += fix[i];
    n_non += nonfix[i];
    fix_cost += (zp[i] * fix[i] - zg[i] * fix[i]) * (zp[i] * fix[i] - zg[i] * fix[i]);
    non_cost += (zp[i] * nonfix[i] - zg[i] * nonfix[i]) * (zp[i] * nonfix[i] - zg[i] * nonfix[i]);
  }
  long double loss = alpha * fix_cost / n_fix;
  if (n_non > 0.0L) loss += beta * non_cost / n_non;
  return loss;
}

long double kld_oracle(const Tensor& p, const Tensor& g, long double eps = 1e-8L) {
  long double ps = 0.0L, gs = 0.0L;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    ps += p[i];
    gs += g[i];
  }
  long double acc = 0.0L;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const long double gh = g[i] / gs;
    const long double ph = p[i] / ps;
    acc += gh * std::log(gh / (ph + eps) + eps);
  }
  return acc;
}

long double cc_loss_oracle(const Tensor& p, const Tensor& g) {
  const auto zp = zscore_oracle(p);
  const auto zg = zscore_oracle(g);
  long double acc = 0.0L;
  for (std::size_t i = 0; i < p.numel(); ++i) acc += zp[i] * zg[i];
  return 1.0L - acc / p.numel();
}

FixationSample make_sample(const Tensor& fix, const Tensor& nonfix) {
  FixationSample s;
  s.fixations = fix.clone();
  s.nonfixations = nonfix.clone();
  for (double v : fix.values()) s.fixation_count += v == 1.0;
  for (double v : nonfix.values()) s.nonfixation_count += v == 1.0;
  return s;
}

double scalar_of(const std::function<Tensor(Tape&)>& f) {
  Tape tape(false);
  return f(tape).value();
}

}  // namespace

TEST_CASE("sample_nonfixations: cardinality, disjointness, forced selection") {
  Rng rng(21);
  SECTION("matches the fixation count when the pool is large enough") {
    Tensor f = Tensor::zeros({4, 4});
    f.values()[1] = f.values()[5] = f.values()[14] = 1.0;
    FixationSample s = sample_nonfixations(f, rng);
    CHECK(s.fixation_count == 3);
    CHECK(s.nonfixation_count == 3);
    double overlap = 0.0, count = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
      overlap += s.fixations[i] * s.nonfixations[i];
      count += s.nonfixations[i];
    }
    CHECK(overlap == 0.0);
    CHECK(count == 3.0);
  }
  SECTION("takes the whole pool when it is smaller") {
    Tensor f = Tensor::full({3, 3}, 1.0);
    f.values()[4] = 0.0;
    FixationSample s = sample_nonfixations(f, rng);
    CHECK(s.fixation_count == 8);
    CHECK(s.nonfixation_count == 1);
    CHECK(s.nonfixations[4] == 1.0);
  }
  SECTION("rejects an empty fixation map") {
    Tensor f = Tensor::zeros({2, 2});
    CHECK_THROWS_WITH(sample_nonfixations(f, rng), Catch::Contains("empty fixation map"));
  }
  SECTION("rejects non-binary maps") {
    Tensor f = Tensor::full({2, 2}, 0.5);
    CHECK_THROWS_AS(sample_nonfixations(f, rng), ValidationError);
  }
}

TEST_CASE("sample_nonfixations draws uniformly over the pool") {
  Tensor f = Tensor::zeros({8, 8});
  f.values()[0] = f.values()[9] = f.values()[27] = f.values()[63] = 1.0;
  const int trials = 10000;
  std::vector<int> hits(64, 0);
  for (int t = 0; t < trials; ++t) {
    Rng rng(static_cast<std::uint64_t>(t) + 1);
    FixationSample s = sample_nonfixations(f, rng);
    for (std::size_t i = 0; i < 64; ++i) hits[i] += s.nonfixations[i] == 1.0;
  }
  const double p = 4.0 / 60.0;
  const double expected = trials * p;
  const double sigma = std::sqrt(trials * p * (1.0 - p));
  for (std::size_t i = 0; i < 64; ++i) {
    if (f[i] == 1.0) {
      CHECK(hits[i] == 0);
    } else {
      CHECK(std::abs(hits[i] - expected) < 3.0 * sigma);
    }
  }
}

TEST_CASE("sfne_loss: hand-worked 2x2 case equals 16/3") {
  // P spikes at (0,0), G at (0,1); standardized values are sqrt(3) at the
  // spike and -1/sqrt(3) elsewhere, so the fixation cost at (0,0) is
  // (sqrt(3) + 1/sqrt(3))^2 = 16/3 and the non-fixation cost at (1,1) is 0.
  Tensor p = Tensor::from({2, 2}, {1, 0, 0, 0});
  Tensor g = Tensor::from({2, 2}, {0, 1, 0, 0});
  Tensor fix = Tensor::from({2, 2}, {1, 0, 0, 0});
  Tensor nonfix = Tensor::from({2, 2}, {0, 0, 0, 1});
  FixationSample sample = make_sample(fix, nonfix);

  const double got = scalar_of([&](Tape& t) { return sfne_loss(t, p, g, sample, 1.0, 1.0); });
  CHECK(got == Approx(16.0 / 3.0).epsilon(1e-12));
  CHECK(got == Approx(static_cast<double>(sfne_oracle(p, g, fix, nonfix, 1.0L, 1.0L))).epsilon(1e-12));
}

TEST_CASE("sfne_loss invariances") {
  Rng rng(31);
  Tensor g = testutil::random_tensor({6, 6}, rng, 0.0, 1.0);
  Tensor fixmap = Tensor::zeros({6, 6});
  fixmap.values()[3] = fixmap.values()[17] = fixmap.values()[30] = 1.0;
  FixationSample sample = sample_nonfixations(fixmap, rng);

  SECTION("zero when prediction equals the target") {
    CHECK(scalar_of([&](Tape& t) { return sfne_loss(t, g, g, sample); }) == Approx(0.0).margin(1e-12));
  }
  SECTION("zero under positive affine maps of the target") {
    Tape tape(false);
    Tensor p = add_scalar(tape, mul_scalar(tape, g, 2.5), 0.7);
    CHECK(scalar_of([&](Tape& t) { return sfne_loss(t, p, g, sample); }) == Approx(0.0).margin(1e-10));
  }
  SECTION("affine invariance in the prediction argument") {
    Tensor p = testutil::random_tensor({6, 6}, rng, 0.0, 1.0);
    Tape tape(false);
    Tensor p2 = add_scalar(tape, mul_scalar(tape, p, 3.0), -1.0);
    const double a = scalar_of([&](Tape& t) { return sfne_loss(t, p, g, sample); });
    const double b = scalar_of([&](Tape& t) { return sfne_loss(t, p2, g, sample); });
    CHECK(a == Approx(b).margin(1e-10));
  }
  SECTION("symmetric in its arguments when alpha equals beta") {
    Tensor p = testutil::random_tensor({6, 6}, rng, 0.0, 1.0);
    const double ab = scalar_of([&](Tape& t) { return sfne_loss(t, p, g, sample); });
    const double ba = scalar_of([&](Tape& t) { return sfne_loss(t, g, p, sample); });
    CHECK(ab == Approx(ba).margin(1e-12));
  }
  SECTION("matches the direct oracle on random maps") {
    for (int trial = 0; trial < 25; ++trial) {
      Tensor p = testutil::random_tensor({6, 6}, rng, 0.0, 1.0);
      const double got = scalar_of([&](Tape& t) { return sfne_loss(t, p, g, sample, 1.0, 2.0); });
      const double want = static_cast<double>(sfne_oracle(p, g, sample.fixations, sample.nonfixations, 1.0L, 2.0L));
      CHECK(got == Approx(want).margin(1e-10));
    }
  }
  SECTION("shape mismatch is rejected") {
    Tensor small = Tensor::zeros({2, 2});
    CHECK_THROWS_AS(scalar_of([&](Tape& t) { return sfne_loss(t, small, g, sample); }), ValidationError);
  }
}

TEST_CASE("kld_loss spot values and guards") {
  SECTION("self-divergence vanishes up to eps terms") {
    Rng rng(41);
    Tensor g = testutil::random_tensor({5, 5}, rng, 0.1, 1.0);
    const double v = scalar_of([&](Tape& t) { return kld_loss(t, g, g); });
    CHECK(std::abs(v) <= 2e-8 * g.numel());
  }
  SECTION("uniform prediction against a one-hot target gives log 4") {
    Tensor p = Tensor::full({2, 2}, 1.0);
    Tensor g = Tensor::from({2, 2}, {1, 0, 0, 0});
    const double got = scalar_of([&](Tape& t) { return kld_loss(t, p, g); });
    CHECK(got == Approx(static_cast<double>(kld_oracle(p, g))).margin(1e-9));
    CHECK(got == Approx(std::log(4.0)).margin(1e-6));
  }
  SECTION("zero-mass maps are rejected") {
    Tensor z = Tensor::zeros({2, 2});
    Tensor g = Tensor::full({2, 2}, 0.25);
    CHECK_THROWS_AS(scalar_of([&](Tape& t) { return kld_loss(t, z, g); }), ValidationError);
    CHECK_THROWS_AS(scalar_of([&](Tape& t) { return kld_loss(t, g, z); }), ValidationError);
  }
  SECTION("stays above a small multiple of eps") {
    Rng rng(43);
    for (int trial = 0; trial < 50; ++trial) {
      Tensor p = testutil::random_tensor({4, 4}, rng, 0.0, 1.0);
      Tensor g = testutil::random_tensor({4, 4}, rng, 0.0, 1.0);
      p.values()[0] += 0.01;  // keep positive mass
      g.values()[0] += 0.01;
      CHECK(scalar_of([&](Tape& t) { return kld_loss(t, p, g); }) >= -2e-8 * p.numel());
    }
  }
}

TEST_CASE("cc_loss bounds") {
  Rng rng(47);
  Tensor p = testutil::random_tensor({5, 5}, rng, 0.0, 1.0);
  CHECK(scalar_of([&](Tape& t) { return cc_loss(t, p, p); }) == Approx(0.0).margin(1e-12));

  Tape tape(false);
  double maxv = 0.0;
  for (double v : p.values()) maxv = std::max(maxv, v);
  Tensor anti = add_scalar(tape, mul_scalar(tape, p, -1.0), maxv);
  CHECK(scalar_of([&](Tape& t) { return cc_loss(t, p, anti); }) == Approx(2.0).margin(1e-12));

  Tensor g = testutil::random_tensor({5, 5}, rng, 0.0, 1.0);
  CHECK(scalar_of([&](Tape& t) { return cc_loss(t, p, g); }) ==
        Approx(static_cast<double>(cc_loss_oracle(p, g))).margin(1e-12));
}

TEST_CASE("hybrid_loss weighting arithmetic") {
  LossWeights w;  // gamma 1, delta 0.1, eta 0.025
  CHECK(hybrid_combination(w, 0.4, 0.2, 2.0) == Approx(0.47).epsilon(1e-12));

  Rng rng(53);
  Tensor p = testutil::random_tensor({6, 6}, rng, 0.05, 1.0);
  Tensor g = testutil::random_tensor({6, 6}, rng, 0.05, 1.0);
  Tensor fixmap = Tensor::zeros({6, 6});
  fixmap.values()[7] = fixmap.values()[22] = 1.0;
  FixationSample sample = sample_nonfixations(fixmap, rng);

  SECTION("equals the weighted combination of its components") {
    const double k = scalar_of([&](Tape& t) { return kld_loss(t, p, g); });
    const double c = scalar_of([&](Tape& t) { return cc_loss(t, p, g); });
    const double s = scalar_of([&](Tape& t) { return sfne_loss(t, p, g, sample, w.alpha, w.beta); });
    const double h = scalar_of([&](Tape& t) { return hybrid_loss(t, p, g, sample, w); });
    CHECK(h == Approx(hybrid_combination(w, k, c, s)).margin(1e-12));
  }
  SECTION("near zero when prediction equals target") {
    CHECK(scalar_of([&](Tape& t) { return hybrid_loss(t, g, g, sample, w); }) == Approx(0.0).margin(1e-4));
  }
  SECTION("gradient against finite differences on random 8x8 maps") {
    for (std::uint64_t trial = 0; trial < 5; ++trial) {
      Rng r2(90 + trial);
      Tensor p8 = testutil::random_tensor({8, 8}, r2, 0.05, 1.0);
      Tensor g8 = testutil::random_tensor({8, 8}, r2, 0.05, 1.0);
      Tensor f8 = Tensor::zeros({8, 8});
      f8.values()[r2.below(64)] = 1.0;
      f8.values()[33] = 1.0;
      FixationSample s8 = sample_nonfixations(f8, r2);
      CHECK(testutil::fd_max_rel_err([&](Tape& t) { return hybrid_loss(t, p8, g8, s8, w); }, p8, 1e-6, 1e-9) < 1e-5);
    }
  }
  SECTION("survives a fully negative prediction without rejection") {
    Tensor neg = testutil::random_tensor({6, 6}, rng, -2.0, -1.0);
    const double v = scalar_of([&](Tape& t) { return hybrid_loss(t, neg, g, sample, w); });
    CHECK(std::isfinite(v));
  }
}

TEST_CASE("loss-composition families combine as weighted sums") {
  // The ablation families: KLD + (1-CC) paired with MSE, with -NSS at two
  // weights, and with the fixation/non-fixation error.
  Rng rng(59);
  Tensor p = testutil::random_tensor({6, 6}, rng, 0.05, 1.0);
  Tensor g = testutil::random_tensor({6, 6}, rng, 0.05, 1.0);
  Tensor fixmap = Tensor::zeros({6, 6});
  fixmap.values()[3] = fixmap.values()[18] = 1.0;
  FixationSample sample = sample_nonfixations(fixmap, rng);

  const double k = scalar_of([&](Tape& t) { return kld_loss(t, p, g); });
  const double c = scalar_of([&](Tape& t) { return cc_loss(t, p, g); });
  const double m = scalar_of([&](Tape& t) { return mse_loss(t, p, g); });
  const double nn = scalar_of([&](Tape& t) { return neg_nss_loss(t, p, sample); });
  const double s = scalar_of([&](Tape& t) { return sfne_loss(t, p, g, sample); });

  auto compose = [&](double wk, double wc, double extra_w, double extra) {
    return scalar_of([&](Tape& t) {
      Tensor kt = kld_loss(t, p, g);
      Tensor ct = cc_loss(t, p, g);
      Tensor et = Tensor::scalar(extra);
      return add(t, add(t, mul_scalar(t, kt, wk), mul_scalar(t, ct, wc)), mul_scalar(t, et, extra_w));
    });
  };
  CHECK(compose(1.0, 0.1, 0.025, m) == Approx(1.0 * k + 0.1 * c + 0.025 * m).margin(1e-12));
  CHECK(compose(1.0, 0.1, 0.1, nn) == Approx(1.0 * k + 0.1 * c + 0.1 * nn).margin(1e-12));
  CHECK(compose(1.0, 0.1, 0.01, nn) == Approx(1.0 * k + 0.1 * c + 0.01 * nn).margin(1e-12));
  CHECK(compose(1.0, 0.1, 0.025, s) == Approx(1.0 * k + 0.1 * c + 0.025 * s).margin(1e-12));

  // -NSS really is the negated fixation mean of the standardized map.
  const auto zp = zscore_oracle(p);
  long double want = -(zp[3] + zp[18]) / 2.0L;
  CHECK(nn == Approx(static_cast<double>(want)).margin(1e-12));
}

TEST_CASE("total_loss composes the deeply supervised objective") {
  Rng rng(61);
  Tensor g = testutil::random_tensor({6, 6}, rng, 0.05, 1.0);
  Tensor fixmap = Tensor::zeros({6, 6});
  fixmap.values()[9] = fixmap.values()[29] = 1.0;
  FixationSample sample = sample_nonfixations(fixmap, rng);
  LossWeights w;

  std::vector<Tensor> scores;
  for (int n = 0; n < 5; ++n) scores.push_back(testutil::random_tensor({6, 6}, rng, 0.05, 1.0));
  Tensor fused = testutil::random_tensor({6, 6}, rng, 0.05, 1.0);

  SECTION("matches the per-head oracle decomposition") {
    Tape tape(false);
    TotalLoss t = total_loss(tape, scores, fused, g, sample, w);
    long double score_sum = 0.0L;
    for (const Tensor& s : scores) {
      score_sum += kld_oracle(s, g) + 0.1L * cc_loss_oracle(s, g) +
                   0.025L * sfne_oracle(s, g, sample.fixations, sample.nonfixations, 1.0L, 1.0L);
    }
    const long double fuse = kld_oracle(fused, g) + 0.1L * cc_loss_oracle(fused, g) +
                             0.025L * sfne_oracle(fused, g, sample.fixations, sample.nonfixations, 1.0L, 1.0L);
    CHECK(t.total.value() == Approx(static_cast<double>(score_sum / 5.0L + fuse)).margin(1e-10));
  }
  SECTION("all predictions equal to the target give a near-zero loss") {
    std::vector<Tensor> perfect(5, g);
    Tape tape(false);
    TotalLoss t = total_loss(tape, perfect, g, g, sample, w);
    CHECK(t.total.value() == Approx(0.0).margin(1e-4));
  }
  SECTION("lambda1 = 0 reduces to the fused term") {
    LossWeights w2;
    w2.lambda1 = 0.0;
    Tape tape(false);
    TotalLoss t = total_loss(tape, scores, fused, g, sample, w2);
    CHECK(t.total.value() == t.fuse_term.value());
  }
  SECTION("single-head mode averages over one head") {
    Tape tape(false);
    std::vector<Tensor> one{scores[0]};
    TotalLoss t = total_loss(tape, one, fused, g, sample, w);
    const double direct = scalar_of([&](Tape& tt) { return hybrid_loss(tt, scores[0], g, sample, w); });
    CHECK(t.score_term.value() == Approx(direct).margin(1e-15));
  }
  SECTION("deterministic given identical inputs") {
    auto run = [&]() {
      Tape tape(false);
      return total_loss(tape, scores, fused, g, sample, w).total.value();
    };
    const double a = run();
    const double b = run();
    CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
  }
}
