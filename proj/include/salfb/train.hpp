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
#include <span>
#include <string>
#include <vector>

#include "salfb/fixtures.hpp"
#include "salfb/losses.hpp"
#include "salfb/network.hpp"
#include "salfb/optim.hpp"

namespace salfb {

struct TrainItem {
  std::string id;
  Tensor image;          // [3, H, W]
  Tensor gt;             // [H, W]
  Tensor fixation_mask;  // [H, W], binary
};

inline TrainItem to_train_item(const FixtureItem& f) {
  return TrainItem{f.id, f.image, f.gt, fixation_mask(f.fixations)};
}

struct TraceRow {
  int step = 0;
  double loss_score = 0.0;
  double loss_fuse = 0.0;
  double total = 0.0;
};

/// Thrown when the objective stops being finite; carries the step index.
class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(int step)
      : std::runtime_error("loss became non-finite at step " + std::to_string(step)), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

struct TrainResult {
  std::vector<TraceRow> trace;
};

/// SGD loop over the item set. Epoch order, dropout, and the per-item
/// non-fixation samples all descend from the one seed; non-fixations are
/// re-drawn every epoch from a stream keyed by (seed, epoch, item). Two runs
/// with identical inputs produce identical traces and weights.
inline TrainResult train(FeedbackNet& net, std::span<const TrainItem> items, int epochs, const OptimizerConfig& optimizer,
                         const LossWeights& weights, std::uint64_t seed) {
  detail::check(!items.empty(), "train: no items");
  detail::check(epochs >= 0, "train: negative epoch count");
  optimizer.validate();
  weights.validate();
  const std::size_t h = items[0].gt.dim(0), w = items[0].gt.dim(1);
  for (const TrainItem& item : items) {
    detail::check(item.gt.dim(0) == h && item.gt.dim(1) == w, "train: item '" + item.id + "' has a different map size");
  }

  Rng root(seed);
  Rng dropout_stream = root.fork("dropout");
  TrainResult result;
  int step = 0;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double lr = optimizer.lr * std::pow(optimizer.lr_decay, epoch);
    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle = root.fork("order", static_cast<std::uint64_t>(epoch));
    for (std::size_t j = 0; j + 1 < order.size(); ++j) {
      const std::size_t k = j + static_cast<std::size_t>(shuffle.below(order.size() - j));
      std::swap(order[j], order[k]);
    }

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(optimizer.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(optimizer.batch_size));
      const std::size_t batch = stop - start;

      Tensor input = Tensor::zeros({batch, 3, h, w});
      for (std::size_t b = 0; b < batch; ++b) {
        const TrainItem& item = items[order[start + b]];
        std::copy_n(item.image.values().data(), item.image.numel(), input.values().data() + b * item.image.numel());
      }

      Tape tape;
      PathwayScores ps = net.run(tape, input, Mode::train, &dropout_stream);

      Tensor score_sum, fuse_sum, total_sum;
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t idx = order[start + b];
        const TrainItem& item = items[idx];
        Rng nonfix_stream =
            root.fork("nonfix", static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(idx));
        FixationSample sample = sample_nonfixations(item.fixation_mask, nonfix_stream);

        std::vector<Tensor> head_scores;
        head_scores.reserve(ps.scores.size());
        for (const Tensor& s : ps.scores) head_scores.push_back(reshape(tape, narrow(tape, s, 0, b, 1), {h, w}));
        Tensor fused = reshape(tape, narrow(tape, ps.fused, 0, b, 1), {h, w});

        TotalLoss item_loss = total_loss(tape, head_scores, fused, item.gt, sample, weights);
        score_sum = b == 0 ? item_loss.score_term : add(tape, score_sum, item_loss.score_term);
        fuse_sum = b == 0 ? item_loss.fuse_term : add(tape, fuse_sum, item_loss.fuse_term);
        total_sum = b == 0 ? item_loss.total : add(tape, total_sum, item_loss.total);
      }
      const double inv_batch = 1.0 / static_cast<double>(batch);
      Tensor batch_total = mul_scalar(tape, total_sum, inv_batch);

      TraceRow row;
      row.step = step;
      row.loss_score = score_sum.value() * inv_batch;
      row.loss_fuse = fuse_sum.value() * inv_batch;
      row.total = batch_total.value();
      if (!std::isfinite(row.total)) throw TrainingDiverged(step);

      tape.backward(batch_total);
      clip_gradients(net.parameters(), optimizer.clip_norm);
      sgd_step(net.parameters(), lr, optimizer.momentum, optimizer.weight_decay);
      result.trace.push_back(row);
      ++step;
    }
  }
  return result;
}

inline std::string trace_to_csv(const std::vector<TraceRow>& trace) {
  std::string out = "step,loss_score,loss_fuse,total\n";
  char buf[160];
  for (const TraceRow& row : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", row.step, row.loss_score, row.loss_fuse, row.total);
    out += buf;
  }
  return out;
}

}  // namespace salfb
