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
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "salfb/binio.hpp"
#include "salfb/ops.hpp"
#include "salfb/optim.hpp"
#include "salfb/rng.hpp"

namespace salfb {

/// Recursive saliency architecture: a five-block encoder, four feedback
/// connections that re-enter at block 2 through the shared block weights,
/// one saliency head per pathway, and a fusion-plus-smoothing output stage.
struct FeedbackNetConfig {
  std::vector<int> block_channels{4, 4, 8, 8, 8};  // C1..C5
  int block_layers = 2;        // 3x3 convs per block; blocks 2..5 lead with stride 2
  int input_channels = 3;
  int head_mid_channels = 8;
  int smoothing_kernel = 41;   // odd
  int fixed_width = 0;         // > 0 overrides every internal conv width
  double dropout_p = 0.5;
  bool feedback_enabled = true;
  bool feedback_additive = false;  // add the fed-back feature to the block-2 input instead of replacing it

  enum class Upsample { nearest, bilinear };
  Upsample upsample = Upsample::nearest;

  void validate() const {
    detail::check(block_channels.size() == 5, "config: exactly 5 block channel widths required");
    for (int c : block_channels) detail::check(c > 0, "config: block channels must be positive");
    detail::check(block_layers >= 1, "config: at least one conv per block");
    detail::check(input_channels > 0, "config: input channels must be positive");
    detail::check(head_mid_channels > 0, "config: head width must be positive");
    detail::check(smoothing_kernel > 0 && smoothing_kernel % 2 == 1, "config: smoothing kernel must be odd");
    detail::check(fixed_width >= 0, "config: fixed width must be positive when set");
    detail::check(dropout_p >= 0.0 && dropout_p < 1.0, "config: dropout probability must lie in [0, 1)");
  }

  std::size_t channel(int block) const {  // block in 1..5
    return static_cast<std::size_t>(fixed_width > 0 ? fixed_width : block_channels[block - 1]);
  }

  std::size_t head_mid() const { return static_cast<std::size_t>(fixed_width > 0 ? fixed_width : head_mid_channels); }

  std::size_t head_input_channels() const { return channel(2) + channel(3) + channel(4) + channel(5); }
};

enum class Mode { train, eval };

/// Encoder outputs: block-1 output (the block-2 input) plus the multi-scale
/// features of blocks 2..5. Block 1 is never fused.
struct ForwardFeatures {
  Tensor block1;
  std::array<Tensor, 4> h;

  const Tensor& at(int k) const { return h[static_cast<std::size_t>(k - 2)]; }
};

/// Head scores S1..Sn at input resolution plus the fused prediction.
struct PathwayScores {
  std::vector<Tensor> scores;
  Tensor fused;
};

struct ParamCountReport {
  std::vector<std::pair<std::string, std::size_t>> layers;
  std::size_t total = 0;
};

class FeedbackNet {
 public:
  FeedbackNet(FeedbackNetConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), seed_(seed) {
    cfg_.validate();
    build();
  }

  const FeedbackNetConfig& config() const { return cfg_; }

  std::span<Parameter> parameters() { return params_; }
  std::span<const Parameter> parameters() const { return params_; }

  Parameter& parameter(const std::string& name) {
    auto it = index_.find(name);
    detail::check(it != index_.end(), "no parameter named '" + name + "'");
    return params_[it->second];
  }

  /// Blocks 1..5 in sequence; block 1 keeps full resolution, blocks 2..5
  /// halve it once each, so height and width must be divisible by 16.
  ForwardFeatures encode_forward(Tape& tape, const Tensor& x) const {
    detail::check(x.rank() == 4, "encode: input must be [N,C,H,W], got " + shape_str(x.shape()));
    detail::check(x.dim(1) == static_cast<std::size_t>(cfg_.input_channels),
                  "encode: expected " + std::to_string(cfg_.input_channels) + " input channels, got " +
                      std::to_string(x.dim(1)));
    detail::check(x.dim(2) % 16 == 0 && x.dim(3) % 16 == 0,
                  "encode: input height and width must be divisible by 16, got " + std::to_string(x.dim(2)) + "x" +
                      std::to_string(x.dim(3)));
    ForwardFeatures f;
    f.block1 = run_block(tape, 0, x);
    Tensor cur = f.block1;
    for (int b = 1; b < 5; ++b) {
      cur = run_block(tape, b, cur);
      f.h[static_cast<std::size_t>(b - 1)] = cur;
    }
    return f;
  }

  /// Send feature k back to the block-2 input and re-run blocks 2..5 with the
  /// same parameters, yielding one multi-scale feature set per source.
  std::array<Tensor, 4> feedback_pass(Tape& tape, const ForwardFeatures& fwd, int k) const {
    detail::check(k >= 2 && k <= 5, "feedback source must be one of blocks 2..5, got " + std::to_string(k));
    detail::check(cfg_.feedback_enabled, "feedback pass on a feedback-disabled network");
    const std::size_t H = fwd.block1.dim(2), W = fwd.block1.dim(3);
    const Conv& fb = feedback_[static_cast<std::size_t>(k - 2)];
    Tensor u = relu(tape, apply_conv(tape, fb, up(tape, fwd.at(k), H, W)));
    if (cfg_.feedback_additive) u = add(tape, u, fwd.block1);
    std::array<Tensor, 4> out;
    Tensor cur = u;
    for (int b = 1; b < 5; ++b) {
      cur = run_block(tape, b, cur);
      out[static_cast<std::size_t>(b - 1)] = cur;
    }
    return out;
  }

  /// One saliency head: upsample the four pathway features to the block-2
  /// resolution, concatenate, then dropout, 3x3 conv, relu, 1x1 conv, relu,
  /// and upsample to the requested output size.
  Tensor decode_score(Tape& tape, std::span<const Tensor> features, int head, std::size_t out_h, std::size_t out_w,
                      Mode mode, Rng* rng) const {
    detail::check(!features.empty(), "decode: empty feature list");
    detail::check(features.size() == 4, "decode: expected 4 pathway features, got " + std::to_string(features.size()));
    detail::check(head >= 1 && head <= 5, "decode: head index out of range");
    const std::size_t common_h = features[0].dim(2), common_w = features[0].dim(3);
    std::vector<Tensor> lifted;
    lifted.reserve(features.size());
    for (const Tensor& f : features) lifted.push_back(up(tape, f, common_h, common_w));
    Tensor fused_features = concat(tape, std::span<const Tensor>(lifted), 1);
    if (mode == Mode::train) {
      detail::check(rng != nullptr, "decode: training mode needs a dropout stream");
      fused_features = dropout(tape, fused_features, cfg_.dropout_p, true, *rng);
    }
    const HeadLayers& layers = heads_[static_cast<std::size_t>(head - 1)];
    Tensor mid = relu(tape, apply_conv(tape, layers.mix, fused_features));
    Tensor score = relu(tape, apply_conv(tape, layers.score, mid));
    return up(tape, score, out_h, out_w);
  }

  /// Fusion over the concatenated scores (1x1 conv, relu) followed by the
  /// wide single-channel smoothing conv. With fewer than five scores, the
  /// fusion weight is narrowed to the channels actually present.
  Tensor fuse_final(Tape& tape, std::span<const Tensor> scores) const {
    detail::check(!scores.empty(), "fuse: no scores");
    for (const Tensor& s : scores) detail::check_same_shape(scores[0], s, "fuse");
    detail::check(scores.size() <= 5, "fuse: at most 5 scores");
    Tensor cat = concat(tape, scores, 1);
    Tensor fusion_w = params_[fusion_.w].value;
    if (scores.size() < 5) fusion_w = narrow(tape, fusion_w, 1, 0, scores.size());
    Tensor fused = relu(tape, conv2d(tape, cat, fusion_w, params_[fusion_.b].value, 1, 0));
    return apply_conv(tape, smoothing_, fused);
  }

  /// Whole pipeline: S1 from the forward pathway, S2..S5 from the feedback
  /// pathways (omitted when feedback is disabled), fused output last.
  PathwayScores run(Tape& tape, const Tensor& x, Mode mode, Rng* rng = nullptr) const {
    ForwardFeatures fwd = encode_forward(tape, x);
    const std::size_t out_h = x.dim(2), out_w = x.dim(3);
    PathwayScores ps;
    ps.scores.push_back(decode_score(tape, fwd.h, 1, out_h, out_w, mode, rng));
    if (cfg_.feedback_enabled) {
      for (int k = 2; k <= 5; ++k) {
        std::array<Tensor, 4> fb = feedback_pass(tape, fwd, k);
        ps.scores.push_back(decode_score(tape, fb, k, out_h, out_w, mode, rng));
      }
    }
    ps.fused = fuse_final(tape, ps.scores);
    return ps;
  }

  /// Closed-form parameter count, itemized per layer. Matches the enumerated
  /// sizes of a constructed network exactly; feedback connections account for
  /// sum_k (3*3*C_k*C1 + C1) of the total.
  static ParamCountReport param_count(const FeedbackNetConfig& cfg) {
    cfg.validate();
    ParamCountReport report;
    auto conv_cost = [&](const std::string& name, std::size_t cin, std::size_t cout, std::size_t k) {
      report.layers.emplace_back(name, k * k * cin * cout + cout);
      report.total += k * k * cin * cout + cout;
    };
    for (int b = 1; b <= 5; ++b) {
      std::size_t cin = b == 1 ? static_cast<std::size_t>(cfg.input_channels) : cfg.channel(b - 1);
      for (int l = 1; l <= cfg.block_layers; ++l) {
        conv_cost("block" + std::to_string(b) + ".conv" + std::to_string(l), cin, cfg.channel(b), 3);
        cin = cfg.channel(b);
      }
    }
    if (cfg.feedback_enabled) {
      for (int k = 2; k <= 5; ++k) {
        conv_cost("feedback" + std::to_string(k), cfg.channel(k), cfg.channel(1), 3);
      }
    }
    for (int n = 1; n <= 5; ++n) {
      conv_cost("head" + std::to_string(n) + ".mix", cfg.head_input_channels(), cfg.head_mid(), 3);
      conv_cost("head" + std::to_string(n) + ".score", cfg.head_mid(), 1, 1);
    }
    conv_cost("fusion", 5, 1, 1);
    conv_cost("smoothing", 1, 1, static_cast<std::size_t>(cfg.smoothing_kernel));
    return report;
  }

  // Checkpoint layout: magic "SFBN", version u16, then one record per
  // parameter in registration order: u32 name length, name bytes, u32 rank,
  // u32 dims, row-major little-endian 32-bit floats.
  static constexpr std::uint16_t kCheckpointVersion = 1;

  void save_checkpoint(const std::filesystem::path& path) const {
    std::string out;
    out += "SFBN";
    detail::append_u16le(out, kCheckpointVersion);
    for (const Parameter& p : params_) {
      detail::append_u32le(out, static_cast<std::uint32_t>(p.name.size()));
      out += p.name;
      detail::append_u32le(out, static_cast<std::uint32_t>(p.value.rank()));
      for (std::size_t d : p.value.shape()) detail::append_u32le(out, static_cast<std::uint32_t>(d));
      for (double v : p.value.values()) detail::append_f32le(out, static_cast<float>(v));
    }
    detail::spew(path, out);
  }

  void load_checkpoint(const std::filesystem::path& path) {
    detail::ByteReader r(detail::slurp(path), path.string());
    if (r.take_bytes(4, "magic") != "SFBN") throw IoError(path.string() + ": bad magic at offset 0, expected \"SFBN\"");
    const std::uint16_t version = r.take_u16le("version");
    if (version != kCheckpointVersion) {
      throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    std::size_t loaded = 0;
    while (!r.exhausted()) {
      const std::uint32_t name_len = r.take_u32le("name length");
      const std::string name = r.take_bytes(name_len, "parameter name");
      const std::uint32_t rank = r.take_u32le("shape rank");
      Shape shape;
      for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.take_u32le("dimension"));
      auto it = index_.find(name);
      if (it == index_.end()) throw IoError(path.string() + ": checkpoint parameter '" + name + "' unknown to this network");
      Parameter& p = params_[it->second];
      if (p.value.shape() != shape) {
        throw IoError(path.string() + ": parameter '" + name + "' has shape " + shape_str(shape) +
                      " but the network expects " + shape_str(p.value.shape()));
      }
      for (std::size_t i = 0; i < p.value.numel(); ++i) p.value.values()[i] = r.take_f32le("weights");
      for (double& v : p.momentum.values()) v = 0.0;
      ++loaded;
    }
    if (loaded != params_.size()) {
      throw IoError(path.string() + ": checkpoint holds " + std::to_string(loaded) + " parameters, network has " +
                    std::to_string(params_.size()));
    }
  }

 private:
  struct Conv {
    std::size_t w = 0, b = 0;
    std::int64_t stride = 1, pad = 0;
  };
  struct HeadLayers {
    Conv mix, score;
  };

  void build() {
    for (int b = 1; b <= 5; ++b) {
      std::vector<Conv> block;
      std::size_t cin = b == 1 ? static_cast<std::size_t>(cfg_.input_channels) : cfg_.channel(b - 1);
      for (int l = 1; l <= cfg_.block_layers; ++l) {
        const std::int64_t stride = (b > 1 && l == 1) ? 2 : 1;
        block.push_back(add_conv("block" + std::to_string(b) + ".conv" + std::to_string(l), cin, cfg_.channel(b), 3,
                                 stride, 1));
        cin = cfg_.channel(b);
      }
      blocks_.push_back(std::move(block));
    }
    if (cfg_.feedback_enabled) {
      for (int k = 2; k <= 5; ++k) {
        feedback_[static_cast<std::size_t>(k - 2)] =
            add_conv("feedback" + std::to_string(k), cfg_.channel(k), cfg_.channel(1), 3, 1, 1);
      }
    }
    for (int n = 1; n <= 5; ++n) {
      HeadLayers head;
      head.mix = add_conv("head" + std::to_string(n) + ".mix", cfg_.head_input_channels(), cfg_.head_mid(), 3, 1, 1);
      head.score = add_conv("head" + std::to_string(n) + ".score", cfg_.head_mid(), 1, 1, 1, 0);
      heads_[static_cast<std::size_t>(n - 1)] = head;
    }
    fusion_ = add_conv("fusion", 5, 1, 1, 1, 0);
    smoothing_ = add_conv("smoothing", 1, 1, static_cast<std::size_t>(cfg_.smoothing_kernel), 1,
                          (cfg_.smoothing_kernel - 1) / 2);

    // The fusion and smoothing stages start as what they are named for: an
    // average of the pathway scores and a unit-mass Gaussian blur. A signed
    // random start lets the single-channel relu between them die globally,
    // after which no gradient can revive the fused output.
    for (double& v : params_[fusion_.w].value.values()) v = 0.2;
    Tensor& smooth_w = params_[smoothing_.w].value;
    const double k_half = (cfg_.smoothing_kernel - 1) / 2.0;
    const double sigma = std::max(1.0, static_cast<double>(cfg_.smoothing_kernel) / 6.0);
    double mass = 0.0;
    for (int y = 0; y < cfg_.smoothing_kernel; ++y) {
      for (int x = 0; x < cfg_.smoothing_kernel; ++x) {
        const double dy = y - k_half, dx = x - k_half;
        const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
        smooth_w.values()[static_cast<std::size_t>(y * cfg_.smoothing_kernel + x)] = v;
        mass += v;
      }
    }
    for (double& v : smooth_w.values()) v /= mass;
  }

  /// Kaiming-uniform fan-in weights drawn from a per-parameter stream derived
  /// from the network seed and the parameter name. Streams keyed by name keep
  /// block weights identical across configs that only differ in which
  /// parameters exist. Biases start at a small positive constant: an exact
  /// zero would park every relu that sees an all-dark input precisely on its
  /// kink, where finite differences and training both stall.
  static constexpr double kBiasInit = 0.05;

  Conv add_conv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k, std::int64_t stride,
                std::int64_t pad) {
    const std::size_t fan_in = cin * k * k;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Rng stream = Rng(seed_).fork(name);
    Tensor w = Tensor::zeros({cout, cin, k, k});
    for (std::size_t i = 0; i < w.numel(); ++i) w.values()[i] = stream.uniform(-bound, bound);
    Conv conv;
    conv.w = add_param(name + ".weight", std::move(w));
    conv.b = add_param(name + ".bias", Tensor::full({cout}, kBiasInit));
    conv.stride = stride;
    conv.pad = pad;
    return conv;
  }

  std::size_t add_param(std::string name, Tensor value) {
    detail::check(!index_.count(name), "duplicate parameter name '" + name + "'");
    index_[name] = params_.size();
    params_.push_back(make_parameter(std::move(name), std::move(value)));
    return params_.size() - 1;
  }

  Tensor apply_conv(Tape& tape, const Conv& c, const Tensor& x) const {
    return conv2d(tape, x, params_[c.w].value, params_[c.b].value, c.stride, c.pad);
  }

  Tensor run_block(Tape& tape, int block, const Tensor& x) const {
    Tensor cur = x;
    for (const Conv& c : blocks_[static_cast<std::size_t>(block)]) cur = relu(tape, apply_conv(tape, c, cur));
    return cur;
  }

  Tensor up(Tape& tape, const Tensor& x, std::size_t h, std::size_t w) const {
    if (x.dim(2) == h && x.dim(3) == w) return x;
    return cfg_.upsample == FeedbackNetConfig::Upsample::bilinear ? upsample_bilinear(tape, x, h, w)
                                                                  : upsample_nearest(tape, x, h, w);
  }

  FeedbackNetConfig cfg_;
  std::uint64_t seed_;
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::vector<Conv>> blocks_;
  std::array<Conv, 4> feedback_{};
  std::array<HeadLayers, 5> heads_{};
  Conv fusion_{};
  Conv smoothing_{};
};

}  // namespace salfb
