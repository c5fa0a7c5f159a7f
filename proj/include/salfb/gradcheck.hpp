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
#include <cstring>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "salfb/optim.hpp"
#include "salfb/rng.hpp"
#include "salfb/tape.hpp"

namespace salfb {

struct GradCheckOptions {
  // Half width of the central difference. Small enough that typical relu
  // pre-activations do not cross their kink inside the probe window; at
  // coarser steps the probe averages one-sided slopes and reports phantom
  // errors on bias coordinates, which shift whole planes.
  double step = 1e-6;
  std::size_t samples_per_tensor = 64;  // coordinates checked per parameter (all, if fewer)
  std::uint64_t seed = 0;               // selects which coordinates are sampled
  double abs_tol = 1e-8;                // differences below this count as zero
  std::string corrupt_param;            // debug: scale this parameter's analytic gradient by 2
};

struct ParamGradReport {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t coords_checked = 0;
};

struct GradCheckReport {
  std::vector<ParamGradReport> params;
  double worst_rel_err = 0.0;
  std::string worst_param;

  bool all_below(double tol) const { return worst_rel_err < tol; }
};

/// Compare analytic gradients against central finite differences,
///   (f(w + h) - f(w - h)) / 2h,
/// coordinate by coordinate on a sampled subset of each parameter.
///
/// f must rebuild the scalar objective from the current parameter values on
/// every call and must be deterministic (evaluation-mode dropout, fixed
/// samples); this is verified by evaluating twice and is rejected otherwise.
///
/// Relative error per coordinate: |a - n| / max(|a|, |n|), treated as zero
/// when |a - n| <= abs_tol.
inline GradCheckReport grad_check(const std::function<Tensor(Tape&)>& f, std::span<Parameter> params,
                                  const GradCheckOptions& opt = {}) {
  auto eval = [&]() {
    Tape no_record(false);
    return f(no_record).value();
  };

  const double probe_a = eval();
  const double probe_b = eval();
  detail::check(std::memcmp(&probe_a, &probe_b, sizeof(double)) == 0,
                "grad_check requires a deterministic objective; two evaluations differ");

  for (Parameter& p : params) p.value.zero_grad();
  Tape tape;
  Tensor loss = f(tape);
  tape.backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Parameter& p : params) {
    std::span<const double> g = p.value.grad();
    std::vector<double> copy(g.begin(), g.end());
    if (copy.empty()) copy.assign(p.value.numel(), 0.0);
    if (p.name == opt.corrupt_param) {
      for (double& v : copy) v *= 2.0;
    }
    analytic.push_back(std::move(copy));
    p.value.zero_grad();
  }
  tape.clear();

  GradCheckReport report;
  Rng rng(derive_seed(opt.seed, 0x67726164ULL));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = params[pi];
    const std::size_t n = p.value.numel();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    const std::size_t take = std::min(opt.samples_per_tensor, n);
    for (std::size_t j = 0; j < take; ++j) {
      const std::size_t k = j + static_cast<std::size_t>(rng.below(n - j));
      std::swap(coords[j], coords[k]);
    }

    ParamGradReport pr{p.name, 0.0, take};
    std::span<double> w = p.value.values();
    for (std::size_t j = 0; j < take; ++j) {
      const std::size_t i = coords[j];
      const double saved = w[i];
      w[i] = saved + opt.step;
      const double up = eval();
      w[i] = saved - opt.step;
      const double down = eval();
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double a = analytic[pi][i];
      const double diff = std::abs(a - numeric);
      if (diff > opt.abs_tol) {
        const double denom = std::max(std::abs(a), std::abs(numeric));
        pr.max_rel_err = std::max(pr.max_rel_err, diff / denom);
      }
    }
    if (report.params.empty() || pr.max_rel_err > report.worst_rel_err) {
      report.worst_rel_err = pr.max_rel_err;
      report.worst_param = pr.name;
    }
    report.params.push_back(std::move(pr));
  }
  return report;
}

}  // namespace salfb
