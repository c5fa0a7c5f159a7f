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

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "salfb/io.hpp"
#include "salfb/metrics.hpp"
#include "salfb/parallel.hpp"
#include "salfb/pseudo.hpp"

namespace salfb {

inline const std::vector<std::string>& known_metrics() {
  static const std::vector<std::string> names{"auc_judd", "auc_borji", "sauc", "nss", "cc", "sim", "kldiv", "ig"};
  return names;
}

struct EvalOptions {
  std::vector<std::string> metrics = {"auc_judd", "auc_borji", "sauc", "nss", "cc", "sim", "kldiv"};
  std::uint64_t seed = 0;
  int auc_splits = 100;
  std::filesystem::path baseline;  // center-prior map, required for ig
  int threads = 1;
  std::string dataset_id;
  std::string checkpoint_id;
  std::string timestamp;  // caller-supplied so reports stay byte-reproducible
};

struct EvalRow {
  std::string id;
  std::vector<std::pair<std::string, double>> values;
};

struct EvalReport {
  std::string dataset_id;
  std::string checkpoint_id;
  std::string timestamp;
  std::vector<std::pair<std::string, double>> aggregate;
  std::vector<EvalRow> per_image;
  std::vector<std::string> failures;

  bool complete() const { return failures.empty(); }
};

namespace detail {

inline void validate_metric_names(const std::vector<std::string>& requested) {
  for (const std::string& name : requested) {
    bool ok = false;
    for (const std::string& known : known_metrics()) ok = ok || known == name;
    if (!ok) {
      std::string valid;
      for (const std::string& known : known_metrics()) valid += (valid.empty() ? "" : ", ") + known;
      throw ValidationError("unknown metric '" + name + "'; valid names: " + valid);
    }
  }
}

inline bool wants(const std::vector<std::string>& metrics, const char* name) {
  for (const std::string& m : metrics) {
    if (m == name) return true;
  }
  return false;
}

inline std::optional<std::filesystem::path> find_map_file(const std::filesystem::path& dir, const std::string& id) {
  for (const char* ext : {".smap", ".pgm"}) {
    const std::filesystem::path p = dir / (id + ext);
    if (std::filesystem::is_regular_file(p)) return p;
  }
  return std::nullopt;
}

inline std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

}  // namespace detail

/// Values as decimal with 10 significant digits, keys in insertion order, so
/// equal reports serialize to equal bytes.
inline std::string report_to_json(const EvalReport& report) {
  std::string out = "{\n  \"metadata\": {\"dataset\": \"" + detail::json_escape(report.dataset_id) +
                    "\", \"checkpoint\": \"" + detail::json_escape(report.checkpoint_id) + "\", \"timestamp\": \"" +
                    detail::json_escape(report.timestamp) + "\"},\n  \"aggregate\": {";
  for (std::size_t i = 0; i < report.aggregate.size(); ++i) {
    if (i) out += ", ";
    out += "\"" + report.aggregate[i].first + "\": " + detail::format_value(report.aggregate[i].second);
  }
  out += "},\n  \"per_image\": [\n";
  for (std::size_t r = 0; r < report.per_image.size(); ++r) {
    const EvalRow& row = report.per_image[r];
    out += "    {\"id\": \"" + detail::json_escape(row.id) + "\"";
    for (const auto& [name, value] : row.values) out += ", \"" + name + "\": " + detail::format_value(value);
    out += r + 1 < report.per_image.size() ? "},\n" : "}\n";
  }
  out += "  ],\n  \"failures\": [";
  for (std::size_t i = 0; i < report.failures.size(); ++i) {
    if (i) out += ", ";
    out += "\"" + detail::json_escape(report.failures[i]) + "\"";
  }
  out += "]\n}\n";
  return out;
}

/// Score every prediction in pred_dir against its ground-truth counterpart.
/// Ids come from the prediction filenames (stem before the first dot), are
/// processed in sorted order, and per-image randomness is derived from the
/// root seed and the id, so results do not depend on listing order or worker
/// count. Missing or broken counterparts become failure entries; the rest of
/// the run continues.
inline EvalReport evaluate_all(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                               const std::filesystem::path& fix_dir, const EvalOptions& options) {
  detail::validate_metric_names(options.metrics);
  const bool needs_fix = detail::wants(options.metrics, "auc_judd") || detail::wants(options.metrics, "auc_borji") ||
                         detail::wants(options.metrics, "sauc") || detail::wants(options.metrics, "nss") ||
                         detail::wants(options.metrics, "ig");
  const bool needs_gt = detail::wants(options.metrics, "cc") || detail::wants(options.metrics, "sim") ||
                        detail::wants(options.metrics, "kldiv");

  Tensor baseline;
  if (detail::wants(options.metrics, "ig")) {
    detail::check(!options.baseline.empty(), "metric 'ig' requires a baseline map");
    baseline = read_map(options.baseline).values;
  }

  std::vector<std::string> ids;
  for (const auto& [id, files] : detail::ids_in_dir(pred_dir)) ids.push_back(id);

  EvalReport report;
  report.dataset_id = options.dataset_id;
  report.checkpoint_id = options.checkpoint_id;
  report.timestamp = options.timestamp;

  struct ItemResult {
    std::optional<EvalRow> row;
    std::vector<std::string> failures;
  };
  std::vector<ItemResult> results(ids.size());

  // Fixation sets are shared across items (the shuffled-AUC negatives), so
  // load them up front.
  std::map<std::string, FixationSet> fixations;
  if (needs_fix) {
    for (const std::string& id : ids) {
      const std::filesystem::path p = fix_dir / (id + ".csv");
      if (!std::filesystem::is_regular_file(p)) continue;
      const auto pred_file = detail::find_map_file(pred_dir, id);
      if (!pred_file) continue;
      try {
        const Tensor pred = read_map(*pred_file).values;
        fixations.emplace(id, read_fixations(p, {pred.dim(0), pred.dim(1)}));
      } catch (const std::exception&) {
        // the per-item pass reports it
      }
    }
  }

  detail::parallel_for(ids.size(), options.threads, [&](std::size_t index) {
    const std::string& id = ids[index];
    ItemResult& result = results[index];
    try {
      const auto pred_file = detail::find_map_file(pred_dir, id);
      if (!pred_file) throw IoError("no .smap/.pgm prediction for id '" + id + "'");
      const Tensor pred = read_map(*pred_file).values;

      Tensor gt;
      if (needs_gt) {
        const auto gt_file = detail::find_map_file(gt_dir, id);
        if (!gt_file) throw IoError("no ground-truth map for id '" + id + "'");
        gt = read_map(*gt_file).values;
      }
      const FixationSet* fix = nullptr;
      if (needs_fix) {
        auto it = fixations.find(id);
        if (it == fixations.end()) {
          const std::filesystem::path p = fix_dir / (id + ".csv");
          if (!std::filesystem::is_regular_file(p)) throw IoError("no fixation file for id '" + id + "'");
          read_fixations(p, {pred.dim(0), pred.dim(1)});  // surfaces the parse error
          throw IoError("fixations for id '" + id + "' could not be loaded");
        }
        fix = &it->second;
      }

      EvalRow row;
      row.id = id;
      Rng rng = Rng(options.seed).fork(id);
      for (const std::string& metric : options.metrics) {
        double value = 0.0;
        if (metric == "auc_judd") {
          value = auc_judd(pred, *fix);
        } else if (metric == "auc_borji") {
          Rng stream = rng.fork("borji");
          value = auc_borji(pred, *fix, options.auc_splits, stream);
        } else if (metric == "sauc") {
          std::vector<std::pair<int, int>> others;
          for (const auto& [other_id, fs] : fixations) {
            if (other_id == id) continue;
            others.insert(others.end(), fs.points.begin(), fs.points.end());
          }
          FixationSet shuffle = make_fixation_set(std::move(others), {pred.dim(0), pred.dim(1)});
          Rng stream = rng.fork("sauc");
          value = shuffled_auc(pred, *fix, shuffle, options.auc_splits, stream);
        } else if (metric == "nss") {
          value = nss(pred, *fix);
        } else if (metric == "cc") {
          value = cc(pred, gt);
        } else if (metric == "sim") {
          value = sim(pred, gt);
        } else if (metric == "kldiv") {
          value = kldiv(pred, gt);
        } else if (metric == "ig") {
          Tensor b = baseline;
          if (!same_shape(b, pred)) b = nearest_resize(b, pred.dim(0), pred.dim(1));
          value = info_gain(pred, *fix, b);
        }
        row.values.emplace_back(metric, value);
      }
      result.row = std::move(row);
    } catch (const std::exception& e) {
      result.failures.push_back(id + ": " + e.what());
    }
  });

  for (ItemResult& r : results) {
    if (r.row) report.per_image.push_back(std::move(*r.row));
    for (std::string& f : r.failures) report.failures.push_back(std::move(f));
  }
  if (!report.per_image.empty()) {
    for (const std::string& metric : options.metrics) {
      double acc = 0.0;
      for (const EvalRow& row : report.per_image) {
        for (const auto& [name, value] : row.values) {
          if (name == metric) acc += value;
        }
      }
      report.aggregate.emplace_back(metric, acc / static_cast<double>(report.per_image.size()));
    }
  }
  return report;
}

}  // namespace salfb
