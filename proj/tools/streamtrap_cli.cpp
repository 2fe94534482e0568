/*
 * Copyright (c) 2026 The streamtrap Authors.
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line front end: build, run, postprocess, metrics, decide, report,
// plus synth for generating a synthetic dataset to try the pipeline on.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "streamtrap.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

/// Flags shared by every experiment subcommand. Only flags the user passed
/// end up in the override layer.
struct Overrides {
  std::string config_file;
  std::optional<std::string> metadata, embeddings, text_head, out, recipe, baseline;
  std::optional<std::vector<std::string>> cameras, regimes, policies;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers, batch_size, min_interval_images, rare_threshold, min_images;
  std::optional<int> max_epochs, patience, rank;
  std::optional<double> max_lr, min_lr, weight_decay, test_fraction, min_confidence, temperature;
  std::optional<std::int64_t> window_days, min_span_days;
  std::optional<std::vector<double>> freeze_fractions, gammas, alphas;
  bool warm_start = false, append_rare = false, no_balance = false;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_file, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--metadata", metadata, "camera-trap metadata JSON");
    app->add_option("--embeddings", embeddings, "STEM1 image embedding store");
    app->add_option("--text-head", text_head, "STTH1 text head");
    app->add_option("-o,--out", out, "output root (STREAMTRAP_OUT wins when set)");
    app->add_option("--cameras", cameras, "camera allowlist");
    app->add_option("--seed", seed, "experiment seed");
    app->add_option("-j,--workers", workers, "parallel cameras");
    app->add_option("--regimes", regimes, "zero_shot accumulated oracle frozen");
    app->add_option("--recipe", recipe, "improved recipe, <loss>_<mode> (e.g. bsm_lora)");
    app->add_option("--baseline-recipe", baseline, "baseline recipe (e.g. ce_full)");
    app->add_option("--max-lr", max_lr);
    app->add_option("--min-lr", min_lr);
    app->add_option("--weight-decay", weight_decay);
    app->add_option("--batch-size", batch_size);
    app->add_option("--max-epochs", max_epochs);
    app->add_option("--patience", patience);
    app->add_option("--rank", rank, "low-rank adapter rank");
    app->add_option("--window-days", window_days);
    app->add_option("--min-interval-images", min_interval_images);
    app->add_option("--rare-threshold", rare_threshold);
    app->add_option("--test-fraction", test_fraction);
    app->add_option("--min-confidence", min_confidence);
    app->add_option("--min-images", min_images, "admission: camera needs more images than this");
    app->add_option("--min-span-days", min_span_days, "admission: minimum stream span");
    app->add_option("--freeze-fractions", freeze_fractions);
    app->add_option("--gammas", gammas, "calibration grid");
    app->add_option("--alphas", alphas, "interpolation grid");
    app->add_option("--temperature", temperature, "softmax temperature for MSP");
    app->add_option("--policies", policies, "decision policies to evaluate");
    app->add_flag("--warm-start", warm_start, "continue each step from the previous head");
    app->add_flag("--append-rare", append_rare, "score held-out rare images too");
    app->add_flag("--no-balance", no_balance, "keep the decision set unbalanced");
  }

  json layer() const {
    json j = json::object();
    const auto put = [&](const char* key, const auto& v) {
      if (v) j[key] = *v;
    };
    const auto put_in = [&](const char* group, const char* key, const auto& v) {
      if (v) j[group][key] = *v;
    };
    put("metadata_path", metadata);
    put("embeddings_path", embeddings);
    put("text_head_path", text_head);
    put("output_dir", out);
    put("cameras", cameras);
    put("seed", seed);
    put("workers", workers);
    put("regimes", regimes);
    put("recipe", recipe);
    put("baseline_recipe", baseline);
    put("freeze_fractions", freeze_fractions);
    put_in("train", "max_lr", max_lr);
    put_in("train", "min_lr", min_lr);
    put_in("train", "weight_decay", weight_decay);
    put_in("train", "batch_size", batch_size);
    put_in("train", "max_epochs", max_epochs);
    put_in("train", "patience", patience);
    put_in("train", "rank", rank);
    put_in("benchmark", "window_days", window_days);
    put_in("benchmark", "min_interval_images", min_interval_images);
    put_in("benchmark", "rare_threshold", rare_threshold);
    put_in("benchmark", "test_fraction", test_fraction);
    put_in("filter", "min_confidence", min_confidence);
    put_in("admission", "min_images", min_images);
    put_in("admission", "min_span_days", min_span_days);
    put_in("grids", "gammas", gammas);
    put_in("grids", "alphas", alphas);
    put_in("decision", "temperature", temperature);
    put_in("decision", "policies", policies);
    if (warm_start) j["warm_start"] = true;
    if (append_rare) j["append_rare_to_test"] = true;
    if (no_balance) j["decision"]["balance"] = false;
    return j;
  }

  streamtrap::ExperimentConfig resolve() const {
    std::vector<json> layers;
    if (!config_file.empty()) layers.push_back(streamtrap::read_json_file(config_file));
    layers.push_back(layer());
    return streamtrap::resolve_config(layers);
  }
};

void print_ok(const std::string& command, const streamtrap::ExperimentConfig& cfg, json extra = json::object()) {
  extra["status"] = "ok";
  extra["command"] = command;
  extra["config_hash"] = streamtrap::config_hash(cfg);
  extra["seed"] = cfg.seed;
  extra["artifact_dir"] = streamtrap::artifact_dir(cfg).string();
  std::cout << extra.dump(2) << std::endl;
}

int fail(const std::string& kind, const std::string& message) {
  std::cerr << json{{"status", "error"}, {"error", kind}, {"message", message}}.dump() << std::endl;
  return 1;
}

struct SynthOptions {
  std::string preset = "imbalance";
  std::string dir = "synthetic";
  std::size_t cameras = 3, intervals = 6, images = 260;
  std::uint64_t seed = 0;
};

void write_synthetic(const SynthOptions& o) {
  using namespace streamtrap;
  const auto data = generate_synthetic(synthetic_preset(synthetic_preset_from_string(o.preset), o.cameras, o.intervals, o.seed, o.images));
  fs::create_directories(o.dir);
  const fs::path dir = fs::absolute(o.dir);
  write_text(dir / "metadata.json", data.metadata().dump(1) + "\n");
  write_store(data.embeddings, (dir / "embeddings.stem").string());
  write_text_head(data.text_head, (dir / "text_head.stth").string());
  // Synthetic streams are shorter than the real admission rule expects, and
  // the head needs a larger step size than backbone fine-tuning uses.
  const json cfg{{"metadata_path", (dir / "metadata.json").string()},
                 {"embeddings_path", (dir / "embeddings.stem").string()},
                 {"text_head_path", (dir / "text_head.stth").string()},
                 {"output_dir", (dir / "out").string()},
                 {"admission", {{"min_images", 0}, {"min_span_days", 0}}},
                 {"train", {{"max_lr", 1e-2}, {"min_lr", 1e-2 / 60.0}}},
                 {"seed", o.seed}};
  write_text(dir / "config.json", cfg.dump(2) + "\n");
  std::cout << json{{"status", "ok"},
                    {"command", "synth"},
                    {"dir", dir.string()},
                    {"images", data.embeddings.rows()},
                    {"cameras", o.cameras},
                    {"config", (dir / "config.json").string()}}
                   .dump(2)
            << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streamtrap: streaming benchmarks and head adaptation for camera-trap embeddings"};
  app.require_subcommand(1);

  Overrides ov;
  auto* build = app.add_subcommand("build", "metadata -> per-camera streams, benchmarks and drop report");
  auto* run = app.add_subcommand("run", "run the configured regimes; writes results, checkpoints and the regime table");
  auto* post = app.add_subcommand("postprocess", "calibration / interpolation / selection sweeps (upper-bound gains)");
  auto* metrics = app.add_subcommand("metrics", "class shift, imbalance and confidence diagnostics");
  auto* decide = app.add_subcommand("decide", "adapt-or-skip decision set and policy evaluation");
  auto* all = app.add_subcommand("all", "build, run, postprocess, metrics, decide and report in sequence");
  for (auto* sc : {build, run, post, metrics, decide, all}) ov.attach(sc);

  std::string results_dir;
  auto* report = app.add_subcommand("report", "tables and plot data from an artifact directory");
  report->add_option("results_dir", results_dir, "<out>/<config-hash> directory")->required();

  SynthOptions so;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset plus a matching config");
  synth->add_option("--preset", so.preset, "imbalance | shift | stationary")->capture_default_str();
  synth->add_option("--dir", so.dir, "destination directory")->capture_default_str();
  synth->add_option("--cameras", so.cameras)->capture_default_str();
  synth->add_option("--intervals", so.intervals)->capture_default_str();
  synth->add_option("--images-per-interval", so.images)->capture_default_str();
  synth->add_option("--seed", so.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    using namespace streamtrap;
    if (*synth) {
      write_synthetic(so);
      return 0;
    }
    if (*report) {
      const auto files = cmd_report(results_dir);
      json list = json::array();
      for (const auto& f : files) list.push_back(f.string());
      std::cout << json{{"status", "ok"}, {"command", "report"}, {"written", list}}.dump(2) << std::endl;
      return 0;
    }
    const ExperimentConfig cfg = ov.resolve();
    if (*build || *all) {
      const auto out = cmd_build(cfg);
      if (*build) print_ok("build", cfg, {{"cameras", out.cameras}, {"kept_images", out.report.kept_images}});
    }
    if (*run || *all) {
      const auto out = cmd_run(cfg);
      json runs = json::array();
      for (const auto& r : out.runs) runs.push_back({{"camera_id", r.camera_id}, {"run", r.name()}, {"aggregate", r.aggregate}});
      if (*run) print_ok("run", cfg, {{"runs", runs}});
    }
    if (*post || *all) {
      const auto reports = cmd_postprocess(cfg);
      json rows = json::array();
      for (const auto& r : reports) rows.push_back({{"camera_id", r.camera_id}, {"mean_best_of_three", r.mean_best_of_three}});
      if (*post) print_ok("postprocess", cfg, {{"cameras", rows}});
    }
    if (*metrics || *all) {
      const auto summary = cmd_metrics(cfg);
      if (*metrics) print_ok("metrics", cfg, {{"summary", summary}});
    }
    if (*decide || *all) {
      const auto results = cmd_decide(cfg);
      json rows = json::array();
      for (const auto& r : results) rows.push_back(to_json(r));
      if (*decide) print_ok("decide", cfg, {{"policies", rows}});
    }
    if (*all) {
      const auto files = cmd_report(artifact_dir(cfg));
      print_ok("all", cfg, {{"reports", files.size()}});
    }
    return 0;
  } catch (const streamtrap::Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("io_error", e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail("parse_error", e.what());
  } catch (const std::exception& e) {
    return fail("internal_error", e.what());
  }
}
