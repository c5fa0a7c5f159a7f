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

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "helpers.hpp"
#include "salfb/metrics.hpp"

using namespace salfb;

namespace {

// Exhaustive threshold-sweep oracle: for every distinct fixation value,
// count rates by scanning the full map, then integrate the trapezoids.
// Counts stay integral until a single final division.
double auc_judd_oracle(const Tensor& p, const FixationSet& fix) {
  std::vector<double> pos;
  for (const auto& [r, c] : fix.points) pos.push_back(p.at({static_cast<std::size_t>(r), static_cast<std::size_t>(c)}));
  std::set<std::pair<int, int>> fixed(fix.points.begin(), fix.points.end());
  std::vector<double> neg;
  for (std::size_t r = 0; r < p.dim(0); ++r)
    for (std::size_t c = 0; c < p.dim(1); ++c)
      if (!fixed.count({static_cast<int>(r), static_cast<int>(c)})) neg.push_back(p.at({r, c}));

  std::vector<double> thresholds = pos;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  std::uint64_t area2 = 0;
  std::uint64_t prev_tp = 0, prev_fp = 0;
  for (double t : thresholds) {
    std::uint64_t tp = 0, fp = 0;
    for (double v : pos) tp += v >= t;
    for (double v : neg) fp += v >= t;
    area2 += (fp - prev_fp) * (tp + prev_tp);
    prev_tp = tp;
    prev_fp = fp;
  }
  area2 += (neg.size() - prev_fp) * (pos.size() + prev_tp);
  return static_cast<double>(area2) / (2.0 * pos.size() * neg.size());
}

double auc_sweep_oracle(const std::vector<double>& pos, const std::vector<double>& neg) {
  std::vector<double> thresholds = pos;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::uint64_t area2 = 0, prev_tp = 0, prev_fp = 0;
  for (double t : thresholds) {
    std::uint64_t tp = 0, fp = 0;
    for (double v : pos) tp += v >= t;
    for (double v : neg) fp += v >= t;
    area2 += (fp - prev_fp) * (tp + prev_tp);
    prev_tp = tp;
    prev_fp = fp;
  }
  area2 += (neg.size() - prev_fp) * (pos.size() + prev_tp);
  return static_cast<double>(area2) / (2.0 * pos.size() * neg.size());
}

FixationSet random_fixations(salfb::Rng& rng, std::size_t h, std::size_t w, std::size_t count) {
  std::vector<std::pair<int, int>> pts;
  for (std::size_t i = 0; i < count; ++i) {
    pts.emplace_back(static_cast<int>(rng.below(h)), static_cast<int>(rng.below(w)));
  }
  return make_fixation_set(std::move(pts), {h, w});
}

}  // namespace

TEST_CASE("nss: single-spike map scores sqrt(3) at its fixation") {
  Tensor p = Tensor::from({2, 2}, {1, 0, 0, 0});
  FixationSet fix = make_fixation_set({{0, 0}}, {2, 2});
  CHECK(nss(p, fix) == Approx(std::sqrt(3.0)).epsilon(1e-12));

  SECTION("constant maps score zero") {
    Tensor c = Tensor::full({4, 4}, 0.7);
    FixationSet f2 = make_fixation_set({{1, 2}, {3, 3}}, {4, 4});
    CHECK(nss(c, f2) == 0.0);
  }
  SECTION("empty fixation set rejected") {
    CHECK_THROWS_AS(nss(p, FixationSet{{}, {2, 2}}), ValidationError);
  }
  SECTION("positive affine invariance") {
    Rng rng(7);
    Tensor m = testutil::random_tensor({6, 6}, rng, 0.0, 1.0);
    FixationSet f = random_fixations(rng, 6, 6, 5);
    Tape tape(false);
    Tensor m2 = add_scalar(tape, mul_scalar(tape, m, 4.2), -0.3);
    CHECK(nss(m, f) == Approx(nss(m2, f)).margin(1e-10));
  }
}

TEST_CASE("cc: Pearson bounds and invariances") {
  Rng rng(13);
  Tensor p = testutil::random_tensor({5, 5}, rng, 0.0, 1.0);
  CHECK(cc(p, p) == Approx(1.0).epsilon(1e-12));

  Tape tape(false);
  Tensor negp = mul_scalar(tape, p, -1.0);
  CHECK(cc(p, negp) == Approx(-1.0).epsilon(1e-12));

  Tensor g = testutil::random_tensor({5, 5}, rng, 0.0, 1.0);
  const double base = cc(p, g);
  CHECK(base >= -1.0);
  CHECK(base <= 1.0);
  Tensor p2 = add_scalar(tape, mul_scalar(tape, p, 2.0), 1.0);
  CHECK(cc(p2, g) == Approx(base).margin(1e-12));
  CHECK(cc(negp, g) == Approx(-base).margin(1e-12));
}

TEST_CASE("sim: intersection of normalized maps") {
  Rng rng(17);
  Tensor p = testutil::random_tensor({4, 4}, rng, 0.1, 1.0);
  CHECK(sim(p, p) == Approx(1.0).epsilon(1e-12));

  SECTION("uniform against one-hot is 1/n") {
    for (std::size_t n : {4u, 9u, 16u}) {
      const auto side = static_cast<std::size_t>(std::sqrt(n));
      Tensor uniform = Tensor::full({side, side}, 1.0);
      Tensor onehot = Tensor::zeros({side, side});
      onehot.values()[n / 2] = 5.0;
      CHECK(sim(uniform, onehot) == Approx(1.0 / n).epsilon(1e-12));
    }
  }
  SECTION("bounded in [0, 1]") {
    for (int t = 0; t < 20; ++t) {
      Tensor a = testutil::random_tensor({4, 4}, rng, 0.0, 1.0);
      Tensor b = testutil::random_tensor({4, 4}, rng, 0.0, 1.0);
      a.values()[0] += 0.01;
      b.values()[0] += 0.01;
      const double v = sim(a, b);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  SECTION("zero-mass rejected") {
    CHECK_THROWS_AS(sim(Tensor::zeros({2, 2}), p), ValidationError);
  }
}

TEST_CASE("kldiv shares the loss implementation") {
  Rng rng(19);
  Tensor g = testutil::random_tensor({4, 4}, rng, 0.1, 1.0);
  CHECK(kldiv(g, g) == Approx(0.0).margin(1e-6));
  Tape tape(false);
  Tensor p = testutil::random_tensor({4, 4}, rng, 0.1, 1.0);
  CHECK(kldiv(p, g) == kld_loss(tape, p, g).value());
}

TEST_CASE("auc_judd: exact anchors") {
  SECTION("strict maximum at the sole fixation gives exactly 1") {
    Tensor p = Tensor::from({3, 3}, {0.1, 0.2, 0.3, 0.4, 0.9, 0.5, 0.2, 0.1, 0.0});
    FixationSet fix = make_fixation_set({{1, 1}}, {3, 3});
    CHECK(auc_judd(p, fix) == 1.0);
  }
  SECTION("constant maps give exactly one half") {
    Tensor p = Tensor::full({4, 4}, 0.25);
    FixationSet fix = make_fixation_set({{0, 0}, {2, 3}}, {4, 4});
    CHECK(auc_judd(p, fix) == 0.5);
  }
}

TEST_CASE("auc_judd equals the exhaustive threshold-sweep oracle exactly") {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed);
    // quantized values make threshold ties common
    Tensor p = testutil::random_quantized({8, 8}, rng, 6);
    FixationSet fix = random_fixations(rng, 8, 8, 1 + rng.below(6));
    const double got = auc_judd(p, fix);
    const double want = auc_judd_oracle(p, fix);
    REQUIRE(got == want);
    CHECK(got >= 0.0);
    CHECK(got <= 1.0);
  }
  SECTION("also exact at 16x16") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      Rng rng(seed * 13);
      Tensor p = testutil::random_quantized({16, 16}, rng, 9);
      FixationSet fix = random_fixations(rng, 16, 16, 2 + rng.below(10));
      REQUIRE(auc_judd(p, fix) == auc_judd_oracle(p, fix));
    }
  }
}

TEST_CASE("AUC variants are invariant under strictly monotone transforms") {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    Rng rng(seed * 31);
    Tensor p = testutil::random_quantized({8, 8}, rng, 9);
    FixationSet fix = random_fixations(rng, 8, 8, 4);
    Tensor cubed = Tensor::zeros({8, 8});
    Tensor exped = Tensor::zeros({8, 8});
    for (std::size_t i = 0; i < 64; ++i) {
      cubed.values()[i] = p[i] * p[i] * p[i];
      exped.values()[i] = std::exp(p[i]);
    }
    const double base = auc_judd(p, fix);
    CHECK(std::abs(auc_judd(cubed, fix) - base) <= 1e-12);
    CHECK(std::abs(auc_judd(exped, fix) - base) <= 1e-12);

    Rng ra(seed), rb(seed), rc(seed);
    const double borji = auc_borji(p, fix, 20, ra);
    CHECK(std::abs(auc_borji(cubed, fix, 20, rb) - borji) <= 1e-12);
    CHECK(std::abs(auc_borji(exped, fix, 20, rc) - borji) <= 1e-12);
  }
}

TEST_CASE("auc_borji matches an independent re-implementation given the seeds") {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed * 7);
    Tensor p = testutil::random_quantized({8, 8}, rng, 8);
    FixationSet fix = random_fixations(rng, 8, 8, 3);

    Rng impl_rng(seed);
    const double got = auc_borji(p, fix, 15, impl_rng);

    Rng oracle_rng(seed);
    std::vector<double> pos;
    for (const auto& [r, c] : fix.points) pos.push_back(p.at({static_cast<std::size_t>(r), static_cast<std::size_t>(c)}));
    double acc = 0.0;
    for (int s = 0; s < 15; ++s) {
      std::vector<double> neg(pos.size());
      for (double& v : neg) v = p[oracle_rng.below(64)];
      acc += auc_sweep_oracle(pos, neg);
    }
    CHECK(std::abs(got - acc / 15.0) <= 1e-12);
  }
}

TEST_CASE("shuffled_auc penalizes center bias against shuffle fixations") {
  // A prediction equal to the shuffle prior scores at chance.
  Tensor p = Tensor::zeros({8, 8});
  FixationSet other = make_fixation_set({{3, 3}, {3, 4}, {4, 3}, {4, 4}}, {8, 8});
  for (const auto& [r, c] : other.points) p.at({static_cast<std::size_t>(r), static_cast<std::size_t>(c)}) = 1.0;
  FixationSet fix = make_fixation_set({{3, 3}, {4, 4}}, {8, 8});
  Rng rng(5);
  const double v = shuffled_auc(p, fix, other, 50, rng);
  CHECK(v == Approx(0.5).margin(1e-12));

  SECTION("empty shuffle set rejected") {
    CHECK_THROWS_AS(shuffled_auc(p, fix, FixationSet{{}, {8, 8}}, 10, rng), ValidationError);
  }
  SECTION("prediction onto own fixations away from the prior scores high") {
    Tensor q = Tensor::zeros({8, 8});
    q.at({0, 0}) = q.at({7, 7}) = 1.0;
    FixationSet own = make_fixation_set({{0, 0}, {7, 7}}, {8, 8});
    Rng r2(5);
    CHECK(shuffled_auc(q, own, other, 50, r2) == 1.0);
  }
}

TEST_CASE("info_gain anchors") {
  Rng rng(23);
  Tensor base = testutil::random_tensor({6, 6}, rng, 0.1, 1.0);
  FixationSet fix = random_fixations(rng, 6, 6, 4);

  SECTION("prediction equal to the baseline gains nothing") {
    CHECK(info_gain(base, fix, base) == Approx(0.0).margin(1e-12));
  }
  SECTION("doubling normalized mass at fixations matches the log-ratio oracle") {
    Tensor pred = base.clone();
    for (const auto& [r, c] : fix.points) pred.at({static_cast<std::size_t>(r), static_cast<std::size_t>(c)}) *= 2.0;
    double ps = 0.0, bs = 0.0;
    for (std::size_t i = 0; i < 36; ++i) {
      ps += pred[i];
      bs += base[i];
    }
    long double want = 0.0L;
    for (const auto& [r, c] : fix.points) {
      const std::size_t i = static_cast<std::size_t>(r) * 6 + c;
      want += std::log2(static_cast<long double>(pred[i]) / ps + 1e-8L) -
              std::log2(static_cast<long double>(base[i]) / bs + 1e-8L);
    }
    want /= fix.points.size();
    CHECK(info_gain(pred, fix, base) == Approx(static_cast<double>(want)).margin(1e-9));
  }
  SECTION("eps keeps zero probabilities finite") {
    Tensor pred = Tensor::zeros({6, 6});
    pred.values()[0] = 1.0;  // all fixation cells see probability ~0
    FixationSet far = make_fixation_set({{5, 5}}, {6, 6});
    const double v = info_gain(pred, far, base);
    CHECK(std::isfinite(v));
    CHECK(v < -10.0);
  }
  SECTION("missing mass rejected") {
    CHECK_THROWS_AS(info_gain(Tensor::zeros({6, 6}), fix, base), ValidationError);
  }
}
