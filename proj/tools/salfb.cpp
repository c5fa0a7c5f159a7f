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

// Batch front end: train / eval / aggregate / gradcheck / fixtures.
// Exit codes: 0 success, 1 validation failure, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "salfb/fixtures.hpp"
#include "salfb/gradcheck.hpp"
#include "salfb/io.hpp"
#include "salfb/network.hpp"
#include "salfb/parallel.hpp"
#include "salfb/pseudo.hpp"
#include "salfb/report.hpp"
#include "salfb/train.hpp"

namespace fs = std::filesystem;
using namespace salfb;

namespace {

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

int run_fixtures(const std::string& out_dir, std::size_t n, std::size_t hw, std::uint64_t seed, double sigma) {
  make_fixtures(out_dir, n, hw, seed, sigma);
  std::printf("wrote %zu fixtures (%zux%zu, seed %llu) to %s\n", n, hw, hw, static_cast<unsigned long long>(seed),
              out_dir.c_str());
  return 0;
}

int run_train(const std::string& config_path, const std::string& out_dir, int epochs, std::uint64_t seed,
              bool seed_given, bool no_feedback) {
  RunConfig cfg = load_run_config(config_path);
  if (seed_given) cfg.seed = seed;
  if (no_feedback) cfg.net.feedback_enabled = false;
  detail::check(!cfg.data_dir.empty(), "config: data.dir is required for training");

  std::vector<TrainItem> items;
  for (const FixtureItem& f : load_fixtures(cfg.data_dir)) items.push_back(to_train_item(f));

  FeedbackNet net(cfg.net, cfg.seed);
  TrainResult result;
  try {
    result = train(net, items, epochs, cfg.optimizer, cfg.loss, cfg.seed);
  } catch (const TrainingDiverged& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  fs::create_directories(out_dir);
  net.save_checkpoint(fs::path(out_dir) / "checkpoint.sfbn");
  detail::spew(fs::path(out_dir) / "trace.csv", trace_to_csv(result.trace));
  if (result.trace.empty()) {
    std::printf("trained 0 steps; wrote initial checkpoint to %s\n", out_dir.c_str());
  } else {
    std::printf("trained %zu steps over %d epochs; total loss %.6g -> %.6g\n", result.trace.size(), epochs,
                result.trace.front().total, result.trace.back().total);
  }
  return 0;
}

int run_eval(const std::string& pred, const std::string& gt, const std::string& fix, const std::string& metrics_csv,
             const std::string& baseline, std::uint64_t seed, int splits, const std::string& report_path,
             const std::string& dataset_id, const std::string& checkpoint_id, const std::string& timestamp) {
  EvalOptions opt;
  if (!metrics_csv.empty()) opt.metrics = split_csv(metrics_csv);
  opt.seed = seed;
  opt.auc_splits = splits;
  if (!baseline.empty()) opt.baseline = baseline;
  opt.threads = detail::env_thread_cap();
  opt.dataset_id = dataset_id.empty() ? pred : dataset_id;
  opt.checkpoint_id = checkpoint_id;
  opt.timestamp = timestamp;

  EvalReport report = evaluate_all(pred, gt, fix, opt);
  if (!report_path.empty()) detail::spew(report_path, report_to_json(report));

  for (const auto& [metric, value] : report.aggregate) std::printf("%-10s %.10g\n", metric.c_str(), value);
  for (const std::string& failure : report.failures) std::fprintf(stderr, "error: %s\n", failure.c_str());
  if (!report.complete()) {
    std::fprintf(stderr, "error: %zu of %zu ids failed; the report contains the completed rows\n",
                 report.failures.size(), report.failures.size() + report.per_image.size());
    return 2;
  }
  return 0;
}

int run_aggregate(const std::string& inputs_csv, double weight, const std::string& out_dir,
                  const std::string& manifest_path, const std::string& images_dir, double split_ratio,
                  std::uint64_t split_seed, const std::string& format_name) {
  const std::vector<std::string> dirs = split_csv(inputs_csv);
  detail::check(!dirs.empty(), "--inputs needs at least one annotator directory");
  detail::check(format_name == "pgm16" || format_name == "smap", "--format must be pgm16 or smap");
  const MapFormat format = format_name == "smap" ? MapFormat::smap : MapFormat::pgm16;
  detail::check(manifest_path.empty() || !images_dir.empty(), "--manifest requires --images");

  std::set<std::string> common;
  for (std::size_t d = 0; d < dirs.size(); ++d) {
    std::set<std::string> here;
    for (const auto& [id, files] : detail::ids_in_dir(dirs[d])) here.insert(id);
    if (d == 0) {
      common = std::move(here);
    } else {
      std::set<std::string> keep;
      for (const std::string& id : common) {
        if (here.count(id)) keep.insert(id);
      }
      common = std::move(keep);
    }
  }
  detail::check(!common.empty(), "no image ids shared by all annotator directories");

  fs::create_directories(out_dir);
  const std::string extension = format == MapFormat::smap ? ".smap" : ".pgm";
  int failures = 0;
  for (const std::string& id : common) {
    AnnotationSet set;
    set.image_id = id;
    for (const std::string& dir : dirs) {
      const auto file = detail::find_map_file(dir, id);
      if (!file) continue;
      set.annotator_ids.push_back(fs::path(dir).filename().string());
      set.maps.push_back(read_map(*file).values);
      set.weights.push_back(weight);
    }
    if (set.maps.size() != dirs.size()) {
      std::fprintf(stderr, "error: id '%s' lacks a readable map in some annotator directory\n", id.c_str());
      ++failures;
      continue;
    }
    for (const std::string& warning : validate_annotations(set)) {
      std::fprintf(stderr, "warning: %s\n", warning.c_str());
    }
    try {
      write_map(aggregate(set), fs::path(out_dir) / (id + extension), format);
    } catch (const ValidationError& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      ++failures;
    }
  }

  if (!manifest_path.empty()) {
    DatasetManifest manifest = build_manifest(images_dir, out_dir, split_ratio, split_seed);
    for (const std::string& warning : manifest.warnings) std::fprintf(stderr, "warning: %s\n", warning.c_str());
    detail::spew(manifest_path, manifest_to_json(manifest));
  }
  std::printf("aggregated %zu ids from %zu annotators into %s\n", common.size() - static_cast<std::size_t>(failures),
              dirs.size(), out_dir.c_str());
  return failures == 0 ? 0 : 2;
}

int run_gradcheck(const std::string& config_path, double tolerance, std::uint64_t seed, bool seed_given,
                  std::size_t samples, std::size_t hw, double step, const std::string& corrupt) {
  RunConfig cfg = load_run_config(config_path);
  if (seed_given) cfg.seed = seed;
  detail::check(hw >= 16 && hw <= 64 && hw % 16 == 0, "gradcheck input side must be 16, 32, 48 or 64");

  FeedbackNet net(cfg.net, cfg.seed);
  const auto fixtures = generate_fixtures(2, hw, derive_seed(cfg.seed, 0x67636678ULL));

  std::vector<TrainItem> items;
  for (const FixtureItem& f : fixtures) items.push_back(to_train_item(f));
  std::vector<FixationSample> fixed_samples;
  for (std::size_t i = 0; i < items.size(); ++i) {
    Rng stream = Rng(cfg.seed).fork("nonfix", 0, i);
    fixed_samples.push_back(sample_nonfixations(items[i].fixation_mask, stream));
  }

  Tensor input = Tensor::zeros({items.size(), 3, hw, hw});
  for (std::size_t b = 0; b < items.size(); ++b) {
    std::copy_n(items[b].image.values().data(), items[b].image.numel(),
                input.values().data() + b * items[b].image.numel());
  }

  auto objective = [&](Tape& tape) {
    PathwayScores ps = net.run(tape, input, Mode::eval);
    Tensor acc;
    for (std::size_t b = 0; b < items.size(); ++b) {
      std::vector<Tensor> heads;
      for (const Tensor& s : ps.scores) heads.push_back(reshape(tape, narrow(tape, s, 0, b, 1), {hw, hw}));
      Tensor fused = reshape(tape, narrow(tape, ps.fused, 0, b, 1), {hw, hw});
      TotalLoss item_loss = total_loss(tape, heads, fused, items[b].gt, fixed_samples[b], cfg.loss);
      acc = b == 0 ? item_loss.total : add(tape, acc, item_loss.total);
    }
    return mul_scalar(tape, acc, 1.0 / static_cast<double>(items.size()));
  };

  GradCheckOptions opt;
  opt.seed = cfg.seed;
  opt.samples_per_tensor = samples;
  opt.step = step;
  opt.corrupt_param = corrupt;
  GradCheckReport report = grad_check(objective, net.parameters(), opt);

  for (const ParamGradReport& p : report.params) {
    std::printf("%-24s %3zu coords   max rel err %.3e\n", p.name.c_str(), p.coords_checked, p.max_rel_err);
  }
  std::printf("worst: %s at %.3e (tolerance %.3e)\n", report.worst_param.c_str(), report.worst_rel_err, tolerance);
  if (!report.all_below(tolerance)) {
    std::fprintf(stderr, "error: gradient of '%s' exceeds tolerance: %.3e >= %.3e\n", report.worst_param.c_str(),
                 report.worst_rel_err, tolerance);
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feedback-recursive saliency toolkit"};
  app.require_subcommand(1);

  auto* fixtures_cmd = app.add_subcommand("fixtures", "generate a synthetic training corpus");
  std::string fx_out;
  std::size_t fx_n = 8, fx_hw = 32;
  std::uint64_t fx_seed = 1;
  double fx_sigma = 0.0;
  fixtures_cmd->add_option("--out", fx_out, "output directory")->required();
  fixtures_cmd->add_option("--n", fx_n, "number of images");
  fixtures_cmd->add_option("--hw", fx_hw, "image side (multiple of 16)");
  fixtures_cmd->add_option("--seed", fx_seed, "generator seed");
  fixtures_cmd->add_option("--sigma", fx_sigma, "ground-truth blur sigma in pixels (default hw/10)");

  auto* train_cmd = app.add_subcommand("train", "train on a fixture corpus");
  std::string tr_config, tr_out;
  int tr_epochs = 0;
  std::uint64_t tr_seed = 0;
  bool tr_no_feedback = false;
  train_cmd->add_option("--config", tr_config, "run configuration JSON")->required();
  train_cmd->add_option("--out", tr_out, "output directory for checkpoint and trace")->required();
  train_cmd->add_option("--epochs", tr_epochs, "number of epochs")->required();
  auto* tr_seed_opt = train_cmd->add_option("--seed", tr_seed, "override the config seed");
  train_cmd->add_flag("--no-feedback", tr_no_feedback, "train the forward-only ablation");

  auto* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
  std::string ev_pred, ev_gt, ev_fix, ev_metrics, ev_baseline, ev_report, ev_dataset, ev_checkpoint, ev_timestamp;
  std::uint64_t ev_seed = 0;
  int ev_splits = 100;
  eval_cmd->add_option("--pred", ev_pred, "prediction map directory")->required();
  eval_cmd->add_option("--gt", ev_gt, "ground-truth map directory")->required();
  eval_cmd->add_option("--fix", ev_fix, "fixation csv directory")->required();
  eval_cmd->add_option("--metrics", ev_metrics, "comma-separated metric names");
  eval_cmd->add_option("--baseline", ev_baseline, "baseline map for information gain");
  eval_cmd->add_option("--seed", ev_seed, "seed for the sampled-AUC splits");
  eval_cmd->add_option("--splits", ev_splits, "splits for auc_borji/sauc");
  eval_cmd->add_option("--report", ev_report, "write the report JSON here");
  eval_cmd->add_option("--dataset", ev_dataset, "dataset id recorded in the report");
  eval_cmd->add_option("--checkpoint", ev_checkpoint, "checkpoint id recorded in the report");
  eval_cmd->add_option("--timestamp", ev_timestamp, "timestamp recorded in the report (empty keeps runs reproducible)");

  auto* agg_cmd = app.add_subcommand("aggregate", "combine annotator maps into pseudo ground truth");
  std::string ag_inputs, ag_out, ag_manifest, ag_images, ag_format = "pgm16";
  double ag_weight = 0.2, ag_ratio = 0.8;
  std::uint64_t ag_seed = 0;
  agg_cmd->add_option("--inputs", ag_inputs, "comma-separated annotator directories")->required();
  agg_cmd->add_option("--weight", ag_weight, "per-annotator weight");
  agg_cmd->add_option("--out", ag_out, "output directory for pseudo maps")->required();
  agg_cmd->add_option("--manifest", ag_manifest, "write a dataset manifest here");
  agg_cmd->add_option("--images", ag_images, "image directory paired into the manifest");
  agg_cmd->add_option("--split-ratio", ag_ratio, "train fraction for the manifest split");
  agg_cmd->add_option("--split-seed", ag_seed, "seed for the manifest split");
  agg_cmd->add_option("--format", ag_format, "output map format: pgm16 or smap");

  auto* gc_cmd = app.add_subcommand("gradcheck", "verify analytic gradients against finite differences");
  std::string gc_config, gc_corrupt;
  double gc_tol = 1e-4;
  std::uint64_t gc_seed = 0;
  std::size_t gc_samples = 64, gc_hw = 32;
  double gc_step = 1e-6;
  gc_cmd->add_option("--config", gc_config, "run configuration JSON")->required();
  gc_cmd->add_option("--tolerance", gc_tol, "maximum allowed relative error");
  auto* gc_seed_opt = gc_cmd->add_option("--seed", gc_seed, "override the config seed");
  gc_cmd->add_option("--samples", gc_samples, "coordinates sampled per parameter");
  gc_cmd->add_option("--step", gc_step, "central-difference half width");
  gc_cmd->add_option("--hw", gc_hw, "fixture image side (at most 64)");
  gc_cmd->add_option("--corrupt", gc_corrupt, "debug: scale this parameter's analytic gradient by 2");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  try {
    if (*fixtures_cmd) return run_fixtures(fx_out, fx_n, fx_hw, fx_seed, fx_sigma);
    if (*train_cmd) return run_train(tr_config, tr_out, tr_epochs, tr_seed, tr_seed_opt->count() > 0, tr_no_feedback);
    if (*eval_cmd) {
      return run_eval(ev_pred, ev_gt, ev_fix, ev_metrics, ev_baseline, ev_seed, ev_splits, ev_report, ev_dataset,
                      ev_checkpoint, ev_timestamp);
    }
    if (*agg_cmd) {
      return run_aggregate(ag_inputs, ag_weight, ag_out, ag_manifest, ag_images, ag_ratio, ag_seed, ag_format);
    }
    if (*gc_cmd) {
      return run_gradcheck(gc_config, gc_tol, gc_seed, gc_seed_opt->count() > 0, gc_samples, gc_hw, gc_step,
                           gc_corrupt);
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
