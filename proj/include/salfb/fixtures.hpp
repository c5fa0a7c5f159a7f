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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "salfb/io.hpp"
#include "salfb/maputil.hpp"
#include "salfb/metrics.hpp"
#include "salfb/rng.hpp"

namespace salfb {

/// Sum of unit-mass Gaussians centered at the fixations, truncated at
/// radius 3*sigma, then rescaled to [0, 1].
inline Tensor fixations_to_saliency(const FixationSet& fix, double sigma) {
  detail::check(sigma > 0.0, "blur sigma must be positive");
  detail::check(!fix.points.empty(), "empty fixation set");
  const auto radius = static_cast<std::int64_t>(std::floor(3.0 * sigma));
  const std::int64_t side = 2 * radius + 1;
  std::vector<double> kernel(static_cast<std::size_t>(side * side));
  double mass = 0.0;
  for (std::int64_t dy = -radius; dy <= radius; ++dy) {
    for (std::int64_t dx = -radius; dx <= radius; ++dx) {
      const double v = std::exp(-static_cast<double>(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      kernel[static_cast<std::size_t>((dy + radius) * side + (dx + radius))] = v;
      mass += v;
    }
  }
  const auto h = static_cast<std::int64_t>(fix.map_shape[0]);
  const auto w = static_cast<std::int64_t>(fix.map_shape[1]);
  Tensor map = Tensor::zeros({fix.map_shape[0], fix.map_shape[1]});
  for (const auto& [r, c] : fix.points) {
    for (std::int64_t dy = -radius; dy <= radius; ++dy) {
      const std::int64_t y = r + dy;
      if (y < 0 || y >= h) continue;
      for (std::int64_t dx = -radius; dx <= radius; ++dx) {
        const std::int64_t x = c + dx;
        if (x < 0 || x >= w) continue;
        map.values()[static_cast<std::size_t>(y * w + x)] +=
            kernel[static_cast<std::size_t>((dy + radius) * side + (dx + radius))] / mass;
      }
    }
  }
  return minmax_normalized(map);
}

/// One synthetic scene: an RGB image with a handful of bright blobs, the
/// blob centers as fixations, and the blurred fixation map as ground truth.
struct FixtureItem {
  std::string id;
  Tensor image;  // [3, H, W], unit interval
  Tensor gt;     // [H, W]
  FixationSet fixations;
};

/// Deterministic synthetic corpus; a desk-scale stand-in for a real
/// eye-fixation dataset. sigma <= 0 selects the default of hw/10.
inline std::vector<FixtureItem> generate_fixtures(std::size_t n_images, std::size_t hw, std::uint64_t seed,
                                                  double sigma = 0.0) {
  detail::check(n_images >= 1, "fixtures: need at least one image");
  detail::check(hw >= 16 && hw % 16 == 0, "fixtures: image side must be a positive multiple of 16");
  if (sigma <= 0.0) sigma = static_cast<double>(hw) / 10.0;

  std::vector<FixtureItem> items;
  items.reserve(n_images);
  const auto side = static_cast<std::int64_t>(hw);
  const std::int64_t margin = std::max<std::int64_t>(2, side / 8);
  const std::int64_t min_sep = std::max<std::int64_t>(4, side / 4);

  for (std::size_t i = 0; i < n_images; ++i) {
    Rng rng(derive_seed(seed, 0x66697874ULL, i));
    FixtureItem item;
    char buf[32];
    std::snprintf(buf, sizeof buf, "img%04zu", i);
    item.id = buf;

    const std::size_t n_blobs = 1 + rng.below(5);
    std::vector<std::pair<int, int>> centers;
    for (std::size_t b = 0; b < n_blobs; ++b) {
      for (int attempt = 0; attempt < 200; ++attempt) {
        const auto r = static_cast<std::int64_t>(margin + static_cast<std::int64_t>(rng.below(hw - 2 * margin)));
        const auto c = static_cast<std::int64_t>(margin + static_cast<std::int64_t>(rng.below(hw - 2 * margin)));
        bool ok = true;
        for (const auto& [pr, pc] : centers) {
          const std::int64_t dr = pr - r, dc = pc - c;
          if (dr * dr + dc * dc < min_sep * min_sep) ok = false;
        }
        if (ok || attempt == 199) {
          if (ok) centers.emplace_back(static_cast<int>(r), static_cast<int>(c));
          break;
        }
      }
    }

    item.image = Tensor::zeros({3, hw, hw});
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double base = rng.uniform(0.05, 0.15);
      const double grad_y = rng.uniform(-0.05, 0.05);
      const double grad_x = rng.uniform(-0.05, 0.05);
      double* plane = item.image.values().data() + ch * hw * hw;
      for (std::size_t y = 0; y < hw; ++y) {
        for (std::size_t x = 0; x < hw; ++x) {
          plane[y * hw + x] = base + grad_y * (static_cast<double>(y) / hw) + grad_x * (static_cast<double>(x) / hw);
        }
      }
    }
    for (const auto& [cr, cc_] : centers) {
      const double radius = rng.uniform(static_cast<double>(hw) / 16.0, static_cast<double>(hw) / 10.0);
      const double color[3] = {rng.uniform(0.4, 1.0), rng.uniform(0.4, 1.0), rng.uniform(0.4, 1.0)};
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double* plane = item.image.values().data() + ch * hw * hw;
        for (std::size_t y = 0; y < hw; ++y) {
          for (std::size_t x = 0; x < hw; ++x) {
            const double dy = static_cast<double>(y) - cr;
            const double dx = static_cast<double>(x) - cc_;
            plane[y * hw + x] += color[ch] * std::exp(-(dy * dy + dx * dx) / (2.0 * radius * radius));
          }
        }
      }
    }
    for (double& v : item.image.values()) v = std::min(1.0, std::max(0.0, v));

    item.fixations = make_fixation_set(centers, {hw, hw});
    item.gt = fixations_to_saliency(item.fixations, sigma);
    items.push_back(std::move(item));
  }
  return items;
}

/// Write a fixture corpus to disk:
///   out/images/<id>.{r,g,b}.smap   one plane per channel
///   out/maps/<id>.smap             ground-truth saliency
///   out/fixations/<id>.csv         fixation coordinates
inline void make_fixtures(const std::filesystem::path& out_dir, std::size_t n_images, std::size_t hw,
                          std::uint64_t seed, double sigma = 0.0) {
  const std::vector<FixtureItem> items = generate_fixtures(n_images, hw, seed, sigma);
  for (const FixtureItem& item : items) {
    const char* plane_names[3] = {"r", "g", "b"};
    for (std::size_t ch = 0; ch < 3; ++ch) {
      Tensor plane = Tensor::zeros({hw, hw});
      std::copy_n(item.image.values().data() + ch * hw * hw, hw * hw, plane.values().data());
      write_map(plane, out_dir / "images" / (item.id + "." + plane_names[ch] + ".smap"), MapFormat::smap);
    }
    write_map(item.gt, out_dir / "maps" / (item.id + ".smap"), MapFormat::smap);
    write_fixations(item.fixations, out_dir / "fixations" / (item.id + ".csv"));
  }
}

/// Load a corpus written by make_fixtures.
inline std::vector<FixtureItem> load_fixtures(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  detail::check(fs::is_directory(dir / "maps"), "fixture directory " + dir.string() + " has no maps/ subdirectory");
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir / "maps")) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    const std::size_t dot = name.find('.');
    if (dot != std::string::npos) ids.push_back(name.substr(0, dot));
  }
  std::sort(ids.begin(), ids.end());
  detail::check(!ids.empty(), "fixture directory " + dir.string() + " holds no maps");

  std::vector<FixtureItem> items;
  for (const std::string& id : ids) {
    FixtureItem item;
    item.id = id;
    item.gt = read_map(dir / "maps" / (id + ".smap")).values;
    const std::size_t hw = item.gt.dim(0);
    item.image = Tensor::zeros({3, item.gt.dim(0), item.gt.dim(1)});
    const char* plane_names[3] = {"r", "g", "b"};
    for (std::size_t ch = 0; ch < 3; ++ch) {
      Tensor plane = read_map(dir / "images" / (id + "." + plane_names[ch] + ".smap")).values;
      detail::check(plane.shape() == item.gt.shape(), "fixture " + id + ": image plane shape differs from map");
      std::copy_n(plane.values().data(), plane.numel(), item.image.values().data() + ch * plane.numel());
    }
    item.fixations = read_fixations(dir / "fixations" / (id + ".csv"), {hw, item.gt.dim(1)});
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace salfb
