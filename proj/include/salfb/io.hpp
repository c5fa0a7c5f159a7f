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

#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "salfb/binio.hpp"
#include "salfb/losses.hpp"
#include "salfb/metrics.hpp"
#include "salfb/network.hpp"
#include "salfb/tensor.hpp"

namespace salfb {

enum class MapFormat { pgm8, pgm16, smap };

/// One saliency or fixation-density map on disk. PGM samples are converted
/// to unit-interval reals on read; SMAP stores raw 32-bit reals and round
/// trips bit-exactly.
struct MapFile {
  MapFormat format = MapFormat::smap;
  Tensor values;  // H x W
  std::uint32_t maxval = 0;  // PGM only
};

namespace detail {

constexpr std::size_t kMaxMapSide = 1u << 16;
constexpr std::size_t kMaxMapCells = 1u << 26;

inline void check_map_dims(std::size_t h, std::size_t w, const std::string& origin, std::size_t offset) {
  if (h == 0 || w == 0 || h > kMaxMapSide || w > kMaxMapSide || h * w > kMaxMapCells) {
    throw IoError(origin + ": implausible map size " + std::to_string(h) + "x" + std::to_string(w) + " at offset " +
                  std::to_string(offset));
  }
}

struct PgmScanner {
  const std::string& bytes;
  const std::string& origin;
  std::size_t pos = 0;

  void skip_space_and_comments() {
    while (pos < bytes.size()) {
      const char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v') {
        ++pos;
      } else {
        break;
      }
    }
  }

  std::uint64_t next_uint(const char* what) {
    skip_space_and_comments();
    if (pos >= bytes.size()) {
      throw IoError(origin + ": truncated file, expected " + what + " at offset " + std::to_string(pos));
    }
    const std::size_t start = pos;
    std::uint64_t v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + static_cast<std::uint64_t>(bytes[pos] - '0');
      if (v > 0xffffffffULL) throw IoError(origin + ": oversized " + std::string(what) + " at offset " + std::to_string(start));
      ++pos;
    }
    if (pos == start) {
      throw IoError(origin + ": expected " + what + " at offset " + std::to_string(pos) + ", found byte 0x" +
                    std::to_string(static_cast<unsigned>(static_cast<unsigned char>(bytes[pos]))));
    }
    return v;
  }
};

inline MapFile read_pgm(const std::string& bytes, const std::string& origin) {
  const bool ascii = bytes[1] == '2';
  PgmScanner scan{bytes, origin, 2};
  const std::size_t w = scan.next_uint("width");
  const std::size_t h = scan.next_uint("height");
  const std::size_t maxval_at = scan.pos;
  const std::uint64_t maxval = scan.next_uint("maxval");
  check_map_dims(h, w, origin, 2);
  if (maxval == 0 || maxval > 65535) {
    throw IoError(origin + ": maxval " + std::to_string(maxval) + " out of range 1..65535 at offset " +
                  std::to_string(maxval_at));
  }

  MapFile out;
  out.format = maxval > 255 ? MapFormat::pgm16 : MapFormat::pgm8;
  out.maxval = static_cast<std::uint32_t>(maxval);
  out.values = Tensor::zeros({h, w});
  const double scale = 1.0 / static_cast<double>(maxval);

  if (ascii) {
    for (std::size_t i = 0; i < h * w; ++i) {
      const std::size_t at = scan.pos;
      const std::uint64_t v = scan.next_uint("sample");
      if (v > maxval) {
        throw IoError(origin + ": sample " + std::to_string(v) + " exceeds maxval " + std::to_string(maxval) +
                      " at offset " + std::to_string(at));
      }
      out.values.values()[i] = static_cast<double>(v) * scale;
    }
    scan.skip_space_and_comments();
    if (scan.pos != bytes.size()) {
      throw IoError(origin + ": trailing bytes after " + std::to_string(h * w) + " samples at offset " +
                    std::to_string(scan.pos));
    }
    return out;
  }

  // binary: exactly one whitespace byte separates maxval from the samples
  if (scan.pos >= bytes.size()) {
    throw IoError(origin + ": truncated file, expected sample data at offset " + std::to_string(scan.pos));
  }
  ++scan.pos;
  const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
  const std::size_t need = h * w * sample_bytes;
  const std::size_t have = bytes.size() - scan.pos;
  if (have < need) {
    throw IoError(origin + ": truncated file, expected " + std::to_string(need) + " data bytes at offset " +
                  std::to_string(scan.pos) + " but got " + std::to_string(have));
  }
  if (have > need) {
    throw IoError(origin + ": trailing bytes, expected " + std::to_string(need) + " data bytes at offset " +
                  std::to_string(scan.pos) + " but got " + std::to_string(have));
  }
  for (std::size_t i = 0; i < h * w; ++i) {
    std::uint64_t v;
    if (sample_bytes == 1) {
      v = static_cast<std::uint8_t>(bytes[scan.pos + i]);
    } else {  // big-endian, per the format
      v = (static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes[scan.pos + 2 * i])) << 8) |
          static_cast<std::uint8_t>(bytes[scan.pos + 2 * i + 1]);
    }
    if (v > maxval) {
      throw IoError(origin + ": sample " + std::to_string(v) + " exceeds maxval " + std::to_string(maxval) +
                    " at offset " + std::to_string(scan.pos + sample_bytes * i));
    }
    out.values.values()[i] = static_cast<double>(v) * scale;
  }
  return out;
}

inline MapFile read_smap(const std::string& bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  r.skip(4);
  const std::uint32_t h = r.take_u32le("height");
  const std::uint32_t w = r.take_u32le("width");
  check_map_dims(h, w, origin, 4);
  MapFile out;
  out.format = MapFormat::smap;
  out.values = Tensor::zeros({h, w});
  for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i) {
    out.values.values()[i] = static_cast<double>(r.take_f32le("samples"));
  }
  if (!r.exhausted()) {
    throw IoError(origin + ": trailing bytes after " + std::to_string(static_cast<std::size_t>(h) * w) +
                  " samples at offset " + std::to_string(r.offset()));
  }
  return out;
}

}  // namespace detail

inline MapFile read_map(const std::filesystem::path& path) {
  const std::string bytes = detail::slurp(path);
  const std::string origin = path.string();
  if (bytes.size() >= 4 && bytes.compare(0, 4, "SMAP") == 0) return detail::read_smap(bytes, origin);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '2' || bytes[1] == '5')) return detail::read_pgm(bytes, origin);
  throw IoError(origin + ": unrecognized magic at offset 0, expected \"SMAP\", \"P2\" or \"P5\"");
}

/// Serialize a map. PGM quantizes unit-interval values to the format's
/// maxval (clamping first); SMAP casts to 32-bit reals, nothing else.
inline void write_map(const Tensor& map, const std::filesystem::path& path, MapFormat format) {
  detail::check(map.rank() == 2, "write_map expects a 2-D map, got " + shape_str(map.shape()));
  std::string out;
  if (format == MapFormat::smap) {
    out.reserve(12 + 4 * map.numel());
    out += "SMAP";
    detail::append_u32le(out, static_cast<std::uint32_t>(map.dim(0)));
    detail::append_u32le(out, static_cast<std::uint32_t>(map.dim(1)));
    for (double v : map.values()) detail::append_f32le(out, static_cast<float>(v));
  } else {
    const std::uint32_t maxval = format == MapFormat::pgm16 ? 65535 : 255;
    out += "P5\n" + std::to_string(map.dim(1)) + " " + std::to_string(map.dim(0)) + "\n" + std::to_string(maxval) + "\n";
    for (double v : map.values()) {
      const double clamped = std::min(1.0, std::max(0.0, v));
      const auto q = static_cast<std::uint32_t>(std::llround(clamped * maxval));
      if (maxval > 255) out.push_back(static_cast<char>((q >> 8) & 0xff));
      out.push_back(static_cast<char>(q & 0xff));
    }
  }
  detail::spew(path, out);
}

/// Fixation CSV: header "row,col", then one integer pair per line.
inline FixationSet read_fixations(const std::filesystem::path& path, std::array<std::size_t, 2> map_shape) {
  const std::string bytes = detail::slurp(path);
  const std::string origin = path.string();

  std::vector<std::string> lines;
  std::string cur;
  for (char c : bytes) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) lines.push_back(cur);

  if (lines.empty() || lines[0] != "row,col") {
    throw IoError(origin + ": line 1: expected header \"row,col\"");
  }
  std::vector<std::pair<int, int>> points;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::string& line = lines[n];
    if (line.empty()) {
      if (n + 1 == lines.size()) continue;  // trailing newline
      throw IoError(origin + ": line " + std::to_string(n + 1) + ": empty line");
    }
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos) {
      throw IoError(origin + ": line " + std::to_string(n + 1) + ": expected \"row,col\" integers");
    }
    auto parse_int = [&](const char* first, const char* last) {
      int v = 0;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc{} || ptr != last) {
        throw IoError(origin + ": line " + std::to_string(n + 1) + ": not an integer: '" + std::string(first, last) +
                      "'");
      }
      return v;
    };
    const int row = parse_int(line.data(), line.data() + comma);
    const int col = parse_int(line.data() + comma + 1, line.data() + line.size());
    if (row < 0 || col < 0 || static_cast<std::size_t>(row) >= map_shape[0] ||
        static_cast<std::size_t>(col) >= map_shape[1]) {
      throw IoError(origin + ": line " + std::to_string(n + 1) + ": fixation (" + std::to_string(row) + ", " +
                    std::to_string(col) + ") out of bounds for " + std::to_string(map_shape[0]) + "x" +
                    std::to_string(map_shape[1]));
    }
    points.emplace_back(row, col);
  }
  return make_fixation_set(std::move(points), map_shape);
}

inline void write_fixations(const FixationSet& fix, const std::filesystem::path& path) {
  std::string out = "row,col\n";
  for (const auto& [r, c] : fix.points) out += std::to_string(r) + "," + std::to_string(c) + "\n";
  detail::spew(path, out);
}

// ---------------------------------------------------------------------------
// Run configuration (strict JSON)
// ---------------------------------------------------------------------------

struct RunConfig {
  FeedbackNetConfig net;
  OptimizerConfig optimizer;
  LossWeights loss;
  std::uint64_t seed = 0;
  std::string data_dir;
};

namespace detail {

using json = nlohmann::json;

inline void reject_unknown_keys(const json& obj, const std::string& prefix,
                                std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError("config: unknown key " + (prefix.empty() ? key : prefix + "." + key));
  }
}

template <typename T>
T config_get(const json& obj, const std::string& prefix, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config: bad value for " + (prefix.empty() ? std::string(key) : prefix + "." + key));
  }
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  detail::json root;
  try {
    root = detail::json::parse(text);
  } catch (const detail::json::exception& e) {
    throw ValidationError(origin + ": invalid JSON: " + e.what());
  }
  detail::check(root.is_object(), origin + ": config root must be an object");
  detail::reject_unknown_keys(root, "", {"net", "optimizer", "loss", "seed", "data"});

  RunConfig cfg;
  if (root.contains("net")) {
    const auto& net = root.at("net");
    detail::check(net.is_object(), "config: net must be an object");
    detail::reject_unknown_keys(net, "net",
                                {"block_channels", "block_layers", "input_channels", "head_mid_channels",
                                 "smoothing_kernel", "fixed_width", "dropout_p", "feedback_enabled",
                                 "feedback_additive", "upsample"});
    cfg.net.block_channels = detail::config_get(net, "net", "block_channels", cfg.net.block_channels);
    cfg.net.block_layers = detail::config_get(net, "net", "block_layers", cfg.net.block_layers);
    cfg.net.input_channels = detail::config_get(net, "net", "input_channels", cfg.net.input_channels);
    cfg.net.head_mid_channels = detail::config_get(net, "net", "head_mid_channels", cfg.net.head_mid_channels);
    cfg.net.smoothing_kernel = detail::config_get(net, "net", "smoothing_kernel", cfg.net.smoothing_kernel);
    cfg.net.fixed_width = detail::config_get(net, "net", "fixed_width", cfg.net.fixed_width);
    cfg.net.dropout_p = detail::config_get(net, "net", "dropout_p", cfg.net.dropout_p);
    cfg.net.feedback_enabled = detail::config_get(net, "net", "feedback_enabled", cfg.net.feedback_enabled);
    cfg.net.feedback_additive = detail::config_get(net, "net", "feedback_additive", cfg.net.feedback_additive);
    const std::string up = detail::config_get<std::string>(net, "net", "upsample", "nearest");
    if (up == "nearest") {
      cfg.net.upsample = FeedbackNetConfig::Upsample::nearest;
    } else if (up == "bilinear") {
      cfg.net.upsample = FeedbackNetConfig::Upsample::bilinear;
    } else {
      throw ValidationError("config: net.upsample must be \"nearest\" or \"bilinear\"");
    }
  }
  if (root.contains("optimizer")) {
    const auto& opt = root.at("optimizer");
    detail::check(opt.is_object(), "config: optimizer must be an object");
    detail::reject_unknown_keys(opt, "optimizer",
                                {"lr", "momentum", "weight_decay", "batch_size", "lr_decay", "clip_norm"});
    cfg.optimizer.lr = detail::config_get(opt, "optimizer", "lr", cfg.optimizer.lr);
    cfg.optimizer.momentum = detail::config_get(opt, "optimizer", "momentum", cfg.optimizer.momentum);
    cfg.optimizer.weight_decay = detail::config_get(opt, "optimizer", "weight_decay", cfg.optimizer.weight_decay);
    cfg.optimizer.batch_size = detail::config_get(opt, "optimizer", "batch_size", cfg.optimizer.batch_size);
    cfg.optimizer.lr_decay = detail::config_get(opt, "optimizer", "lr_decay", cfg.optimizer.lr_decay);
    cfg.optimizer.clip_norm = detail::config_get(opt, "optimizer", "clip_norm", cfg.optimizer.clip_norm);
  }
  if (root.contains("loss")) {
    const auto& loss = root.at("loss");
    detail::check(loss.is_object(), "config: loss must be an object");
    detail::reject_unknown_keys(loss, "loss", {"alpha", "beta", "gamma", "delta", "eta", "lambda1", "lambda2"});
    cfg.loss.alpha = detail::config_get(loss, "loss", "alpha", cfg.loss.alpha);
    cfg.loss.beta = detail::config_get(loss, "loss", "beta", cfg.loss.beta);
    cfg.loss.gamma = detail::config_get(loss, "loss", "gamma", cfg.loss.gamma);
    cfg.loss.delta = detail::config_get(loss, "loss", "delta", cfg.loss.delta);
    cfg.loss.eta = detail::config_get(loss, "loss", "eta", cfg.loss.eta);
    cfg.loss.lambda1 = detail::config_get(loss, "loss", "lambda1", cfg.loss.lambda1);
    cfg.loss.lambda2 = detail::config_get(loss, "loss", "lambda2", cfg.loss.lambda2);
  }
  cfg.seed = detail::config_get<std::uint64_t>(root, "", "seed", 0);
  if (root.contains("data")) {
    const auto& data = root.at("data");
    detail::check(data.is_object(), "config: data must be an object");
    detail::reject_unknown_keys(data, "data", {"dir"});
    cfg.data_dir = detail::config_get<std::string>(data, "data", "dir", "");
  }

  cfg.net.validate();
  cfg.optimizer.validate();
  cfg.loss.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(detail::slurp(path), path.string());
}

}  // namespace salfb
