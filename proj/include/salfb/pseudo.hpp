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
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "salfb/io.hpp"
#include "salfb/maputil.hpp"
#include "salfb/metrics.hpp"
#include "salfb/rng.hpp"

namespace salfb {

/// The predictions of M annotator models for one image, plus per-annotator
/// weights (all 0.2 unless overridden).
struct AnnotationSet {
  std::string image_id;
  std::vector<std::string> annotator_ids;
  std::vector<Tensor> maps;
  std::vector<double> weights;  // empty selects the default 0.2 for every annotator
};

/// Weighted sum of the annotator maps followed by min-max normalization to
/// [0, 1]. The pseudo ground truth for one image.
inline Tensor aggregate(const AnnotationSet& set) {
  detail::check(!set.maps.empty(), "aggregate: no annotator maps for image '" + set.image_id + "'");
  detail::check(set.annotator_ids.size() == set.maps.size(), "aggregate: annotator id count does not match map count");
  detail::check(set.weights.empty() || set.weights.size() == set.maps.size(),
                "aggregate: weight count does not match annotator count");
  const Shape& shape = set.maps[0].shape();
  for (std::size_t j = 0; j < set.maps.size(); ++j) {
    detail::check(set.maps[j].shape() == shape, "aggregate: annotator '" + set.annotator_ids[j] + "' map shape " +
                                                    shape_str(set.maps[j].shape()) + " differs from " +
                                                    shape_str(shape) + " for image '" + set.image_id + "'");
    for (double v : set.maps[j].values()) {
      detail::check(v >= 0.0, "aggregate: annotator '" + set.annotator_ids[j] + "' map has negative values");
    }
  }
  Tensor acc = Tensor::zeros(shape);
  for (std::size_t j = 0; j < set.maps.size(); ++j) {
    const double w = set.weights.empty() ? 0.2 : set.weights[j];
    for (std::size_t i = 0; i < acc.numel(); ++i) acc.values()[i] += w * set.maps[j][i];
  }
  return minmax_normalized(acc);
}

/// Non-fatal sanity checks on an annotation set: all-zero maps, constant
/// maps, NaN cells, and annotator pairs that anticorrelate (a sign of
/// misaligned predictions).
inline std::vector<std::string> validate_annotations(const AnnotationSet& set) {
  std::vector<std::string> warnings;
  std::vector<bool> degenerate(set.maps.size(), false);
  for (std::size_t j = 0; j < set.maps.size(); ++j) {
    const Tensor& m = set.maps[j];
    const std::string& who = set.annotator_ids[j];
    bool has_nan = false;
    for (double v : m.values()) has_nan = has_nan || std::isnan(v);
    if (has_nan) {
      warnings.push_back(set.image_id + ": annotator '" + who + "' map contains NaN cells");
      degenerate[j] = true;
      continue;
    }
    double lo = m[0], hi = m[0];
    for (double v : m.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi == 0.0 && lo == 0.0) {
      warnings.push_back(set.image_id + ": annotator '" + who + "' produced a zero map");
      degenerate[j] = true;
    } else if (hi == lo) {
      warnings.push_back(set.image_id + ": annotator '" + who + "' produced a constant map");
      degenerate[j] = true;
    }
  }
  for (std::size_t a = 0; a < set.maps.size(); ++a) {
    for (std::size_t b = a + 1; b < set.maps.size(); ++b) {
      if (degenerate[a] || degenerate[b]) continue;
      if (!same_shape(set.maps[a], set.maps[b])) continue;
      if (cc(set.maps[a], set.maps[b]) < 0.0) {
        warnings.push_back(set.image_id + ": annotators '" + set.annotator_ids[a] + "' and '" + set.annotator_ids[b] +
                           "' anticorrelate; one of them is likely misaligned");
      }
    }
  }
  return warnings;
}

struct ManifestEntry {
  std::string image;
  std::string pseudo;
  std::string split;  // "train" or "val"
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::size_t train_count = 0;
  std::size_t val_count = 0;
  std::vector<std::string> warnings;  // unmatched ids, excluded
};

namespace detail {

/// File stem up to the first dot; plane suffixes and extensions are not part
/// of the id.
inline std::string id_of(const std::filesystem::path& p) {
  const std::string name = p.filename().string();
  const std::size_t dot = name.find('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

inline std::map<std::string, std::vector<std::string>> ids_in_dir(const std::filesystem::path& dir) {
  std::map<std::string, std::vector<std::string>> ids;
  check(std::filesystem::is_directory(dir), "not a directory: " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    ids[id_of(entry.path())].push_back(entry.path().string());
  }
  for (auto& [id, files] : ids) std::sort(files.begin(), files.end());
  return ids;
}

}  // namespace detail

/// Pair images with pseudo maps by id, shuffle deterministically, and split
/// into train/val by ratio. Unmatched ids are excluded with a warning.
inline DatasetManifest build_manifest(const std::filesystem::path& image_dir, const std::filesystem::path& map_dir,
                                      double split_ratio, std::uint64_t seed) {
  detail::check(split_ratio > 0.0 && split_ratio <= 1.0, "split ratio must lie in (0, 1]");
  const auto images = detail::ids_in_dir(image_dir);
  const auto maps = detail::ids_in_dir(map_dir);

  DatasetManifest manifest;
  std::vector<std::string> matched;
  for (const auto& [id, files] : images) {
    if (maps.count(id)) {
      matched.push_back(id);
    } else {
      manifest.warnings.push_back("image '" + id + "' has no pseudo map; excluded");
    }
  }
  for (const auto& [id, files] : maps) {
    if (!images.count(id)) manifest.warnings.push_back("pseudo map '" + id + "' has no image; excluded");
  }
  detail::check(!matched.empty(), "no ids in common between " + image_dir.string() + " and " + map_dir.string());

  std::vector<std::string> order = matched;  // matched is sorted (map order)
  Rng rng(derive_seed(seed, 0x73706c69ULL));
  for (std::size_t j = 0; j + 1 < order.size(); ++j) {
    const std::size_t k = j + static_cast<std::size_t>(rng.below(order.size() - j));
    std::swap(order[j], order[k]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(split_ratio * static_cast<double>(order.size())));
  std::map<std::string, std::string> split_of;
  for (std::size_t i = 0; i < order.size(); ++i) split_of[order[i]] = i < n_train ? "train" : "val";

  for (const std::string& id : matched) {
    const auto& image_files = images.at(id);
    const std::string image_path =
        image_files.size() == 1 ? image_files[0] : (image_dir / id).string();  // multi-plane ids keep the prefix
    manifest.entries.push_back({image_path, maps.at(id)[0], split_of[id]});
    (split_of[id] == "train" ? manifest.train_count : manifest.val_count) += 1;
  }
  return manifest;
}

inline std::string manifest_to_json(const DatasetManifest& manifest) {
  nlohmann::ordered_json j;
  j["entries"] = nlohmann::ordered_json::array();
  for (const ManifestEntry& e : manifest.entries) {
    j["entries"].push_back({{"image", e.image}, {"pseudo", e.pseudo}, {"split", e.split}});
  }
  j["counts"] = {{"train", manifest.train_count}, {"val", manifest.val_count}};
  return j.dump(2) + "\n";
}

/// Per-pixel mean over every map in a directory (nearest-resized to the
/// first map's shape), min-max normalized. Used to inspect the corpus-level
/// saliency distribution.
inline Tensor mean_distribution(const std::filesystem::path& map_dir) {
  const auto ids = detail::ids_in_dir(map_dir);
  detail::check(!ids.empty(), "no maps in " + map_dir.string());
  Tensor acc;
  std::size_t count = 0;
  for (const auto& [id, files] : ids) {
    for (const std::string& file : files) {
      Tensor m = read_map(file).values;
      if (!acc.defined()) {
        acc = Tensor::zeros(m.shape());
      } else if (!same_shape(acc, m)) {
        m = nearest_resize(m, acc.dim(0), acc.dim(1));
      }
      for (std::size_t i = 0; i < acc.numel(); ++i) acc.values()[i] += m[i];
      ++count;
    }
  }
  for (double& v : acc.values()) v /= static_cast<double>(count);
  return minmax_normalized(acc);
}

}  // namespace salfb
