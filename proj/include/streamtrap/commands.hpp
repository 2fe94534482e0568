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

#pragma once

#include <algorithm>
#include <cctype>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "streamtrap/config.hpp"
#include "streamtrap/decision.hpp"
#include "streamtrap/embedding_store.hpp"
#include "streamtrap/errors.hpp"
#include "streamtrap/head.hpp"
#include "streamtrap/intervals.hpp"
#include "streamtrap/metadata.hpp"
#include "streamtrap/postprocess.hpp"
#include "streamtrap/reports.hpp"
#include "streamtrap/shift_metrics.hpp"
#include "streamtrap/stream_engine.hpp"

namespace streamtrap {

namespace fs = std::filesystem;

/// Runs fn(0..n-1) on at most `workers` threads. Every item runs even if
/// others fail; the lowest-index failure is rethrown afterwards.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(workers, 1), std::max<std::size_t>(n, 1));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// File-system friendly form of a camera id.
inline std::string safe_name(const std::string& id) {
  std::string s;
  for (unsigned char c : id) s += (std::isalnum(c) || c == '-' || c == '_' || c == '.') ? static_cast<char>(c) : '_';
  if (s.empty() || s == "." || s == "..") s = "_" + s;
  return s;
}

/// Writes through a temporary file and a rename so readers never see a
/// partial artifact.
inline void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io_error", "cannot write '" + tmp.string() + "'");
    out << text;
    if (!out) throw Error("io_error", "write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string pretty(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline Stamp stamp_of(const ExperimentConfig& cfg) { return {config_hash(cfg), cfg.seed}; }

inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " path is not set");
  if (!fs::exists(path)) throw ConfigError(what + " '" + path + "' does not exist");
}

struct BuildOutput {
  fs::path dir;
  std::vector<std::string> cameras;  ///< cameras with a benchmark file
  DropReport report;
};

/// Metadata to per-camera streams and benchmarks, plus the drop report.
inline BuildOutput cmd_build(const ExperimentConfig& cfg) {
  require_file(cfg.metadata_path, "metadata");
  const fs::path dir = artifact_dir(cfg);
  const Stamp stamp = stamp_of(cfg);
  auto parsed = parse_metadata_file(cfg.metadata_path, cfg.filter);
  DropReport report = parsed.report;

  std::vector<CameraStream> streams;
  const std::set<std::string> allow(cfg.cameras.begin(), cfg.cameras.end());
  for (auto& s : parsed.streams) {
    if (!allow.empty() && !allow.count(s.camera_id)) {
      report.excluded_cameras[s.camera_id] = "not_in_allowlist";
      continue;
    }
    s = synthesize_sequences(std::move(s), std::chrono::seconds(cfg.sequence_gap_seconds));
    if (!admit_camera(s, cfg.admission)) {
      report.excluded_cameras[s.camera_id] = "admission";
      continue;
    }
    streams.push_back(std::move(s));
  }

  std::vector<IntervalBenchmark> benches(streams.size());
  parallel_for(streams.size(), cfg.workers, [&](std::size_t i) {
    benches[i] = build_benchmark(streams[i], cfg.benchmark);
    nlohmann::json doc = to_json(benches[i]);
    stamp.apply(doc);
    write_text(dir / "benchmarks" / (safe_name(streams[i].camera_id) + ".json"), pretty(doc));
    std::string lines;
    for (const auto& r : streams[i].records) {
      nlohmann::json row = to_json(r);
      stamp.apply(row);
      lines += row.dump() + "\n";
    }
    write_text(dir / "streams" / (safe_name(streams[i].camera_id) + ".jsonl"), lines);
  });

  BuildOutput out{dir, {}, report};
  for (const auto& b : benches) {
    out.cameras.push_back(b.camera_id);
    for (const auto& iv : b.intervals)
      if (!iv.usable) out.report.unusable_intervals[b.camera_id].push_back(iv.index);
  }
  nlohmann::json rep = to_json(out.report);
  stamp.apply(rep);
  rep["cameras"] = out.cameras;
  write_text(dir / "drop_report.json", pretty(rep));
  return out;
}

/// Benchmarks written by a previous build of the same configuration.
inline std::vector<IntervalBenchmark> load_benchmarks(const ExperimentConfig& cfg) {
  const fs::path dir = artifact_dir(cfg) / "benchmarks";
  if (!fs::is_directory(dir))
    throw ConfigError("no benchmarks under '" + dir.string() + "'; run `streamtrap build` with the same config first");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<IntervalBenchmark> out;
  for (const auto& f : files) {
    try {
      out.push_back(benchmark_from_json(nlohmann::json::parse(read_text(f))));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(f.string() + ": " + e.what());
    }
  }
  if (out.empty()) throw ConfigError("benchmark directory '" + dir.string() + "' is empty");
  return out;
}

struct Inputs {
  std::vector<IntervalBenchmark> benchmarks;
  EmbeddingMatrix store;
  TextHead text_head;
};

inline Inputs load_inputs(const ExperimentConfig& cfg) {
  require_file(cfg.embeddings_path, "embeddings");
  require_file(cfg.text_head_path, "text head");
  Inputs in;
  in.benchmarks = load_benchmarks(cfg);
  in.store = read_store(cfg.embeddings_path);
  in.text_head = read_text_head(cfg.text_head_path);
  require_same_dim(in.store.dim(), in.text_head.dim(), "embedding store vs text head");
  return in;
}

/// Engine options whose checkpoints live in <out>/<hash>/checkpoints/<camera>/<run>/<j>.sthd.
inline EngineOptions engine_options(const ExperimentConfig& cfg, const std::string& camera, const Recipe& recipe,
                                    const std::string& run_dir) {
  EngineOptions opt;
  opt.train = cfg.train;
  opt.train.loss = recipe.loss;
  opt.train.mode = recipe.mode;
  opt.train.seed = cfg.seed;
  opt.recipe = recipe.name();
  opt.warm_start = cfg.warm_start;
  opt.append_rare_to_test = cfg.append_rare_to_test;
  const fs::path ckpt = artifact_dir(cfg) / "checkpoints" / safe_name(camera) / run_dir;
  opt.load_checkpoint = [ckpt](int step) -> std::optional<AdaptedHead> {
    const fs::path p = ckpt / (std::to_string(step) + ".sthd");
    if (!fs::exists(p)) return std::nullopt;
    return read_head(p.string());
  };
  opt.save_checkpoint = [ckpt](const AdaptedHead& head, int step) {
    fs::create_directories(ckpt);
    const fs::path p = ckpt / (std::to_string(step) + ".sthd");
    const fs::path tmp = p.string() + ".tmp";
    write_head(head, tmp.string());
    fs::rename(tmp, p);
  };
  return opt;
}

inline std::string accumulated_dir(const Recipe& r) { return "accumulated_" + r.name(); }

/// The recipe's accumulated run, resumed from checkpoints when present.
inline RunResult accumulated_run(const ExperimentConfig& cfg, const StreamContext& ctx, const Recipe& recipe) {
  return run_accumulated(ctx, engine_options(cfg, ctx.benchmark().camera_id, recipe, accumulated_dir(recipe)));
}

inline bool wants(const ExperimentConfig& cfg, const std::string& regime) {
  return std::find(cfg.regimes.begin(), cfg.regimes.end(), regime) != cfg.regimes.end();
}

/// All configured regimes for one camera.
inline std::vector<RunResult> run_camera(const ExperimentConfig& cfg, const StreamContext& ctx) {
  std::vector<RunResult> runs;
  const std::string& cam = ctx.benchmark().camera_id;
  if (wants(cfg, "zero_shot")) runs.push_back(run_zero_shot(ctx, cfg.append_rare_to_test));
  std::optional<RunResult> star;
  if (wants(cfg, "accumulated") || wants(cfg, "frozen")) star = accumulated_run(cfg, ctx, cfg.recipe);
  if (wants(cfg, "accumulated")) {
    if (cfg.baseline.name() != cfg.recipe.name()) runs.push_back(accumulated_run(cfg, ctx, cfg.baseline));
    runs.push_back(*star);
  }
  if (wants(cfg, "oracle")) runs.push_back(run_oracle(ctx, engine_options(cfg, cam, cfg.recipe, "oracle_" + cfg.recipe.name())));
  if (wants(cfg, "frozen") && ctx.num_intervals() >= 2) {
    // Frozen heads are prefixes of the accumulated sequence; reuse them.
    EngineOptions opt = engine_options(cfg, cam, cfg.recipe, accumulated_dir(cfg.recipe));
    const auto heads = star->heads;
    opt.load_checkpoint = [heads](int step) -> std::optional<AdaptedHead> {
      if (step < 0 || static_cast<std::size_t>(step) >= heads.size()) return std::nullopt;
      return heads[static_cast<std::size_t>(step)];
    };
    opt.save_checkpoint = nullptr;
    for (double f : cfg.freeze_fractions) runs.push_back(run_frozen(ctx, opt, f));
  }
  return runs;
}

struct RunOutput {
  fs::path dir;
  std::vector<RunResult> runs;  ///< camera-major, in configured order
};

inline RunOutput cmd_run(const ExperimentConfig& cfg) {
  const Inputs in = load_inputs(cfg);
  const fs::path dir = artifact_dir(cfg);
  const Stamp stamp = stamp_of(cfg);
  std::vector<std::vector<RunResult>> per_camera(in.benchmarks.size());
  parallel_for(in.benchmarks.size(), cfg.workers, [&](std::size_t i) {
    const StreamContext ctx(in.benchmarks[i], in.store, in.text_head);
    per_camera[i] = run_camera(cfg, ctx);
  });

  RunOutput out{dir, {}};
  std::string rows;
  std::map<std::string, std::string> rows_by_regime;
  nlohmann::json summaries = nlohmann::json::array();
  std::vector<ComparisonColumn> columns;
  for (std::size_t i = 0; i < per_camera.size(); ++i) {
    std::map<std::string, IntervalAccuracies> accs;
    for (auto& run : per_camera[i]) {
      for (const auto& row : result_rows(run, stamp)) {
        rows += row.dump() + "\n";
        rows_by_regime[to_string(run.regime)] += row.dump() + "\n";
      }
      summaries.push_back(run_summary(run));
      for (const auto& s : run.per_interval) accs[run.name()][s.interval] = s.balanced_accuracy;
      out.runs.push_back(std::move(run));
    }
    columns.push_back(comparison_column(in.benchmarks[i].camera_id, accs, "accumulated:" + cfg.baseline.name(),
                                        "accumulated:" + cfg.recipe.name(), "oracle:" + cfg.recipe.name()));
  }
  write_text(dir / "results.jsonl", rows);
  for (const auto& [regime, text] : rows_by_regime) write_text(dir / "results" / (regime + ".jsonl"), text);
  nlohmann::json runs_doc{{"runs", summaries}};
  stamp.apply(runs_doc);
  write_text(dir / "runs.json", pretty(runs_doc));
  write_text(dir / "table_regimes.csv", comparison_csv(columns, stamp));

  nlohmann::json manifest{{"config", to_json(cfg)},
                          {"regimes", cfg.regimes},
                          {"baseline_recipe", cfg.baseline.name()},
                          {"recipe", cfg.recipe.name()},
                          {"cameras", nlohmann::json::array()}};
  for (const auto& b : in.benchmarks) manifest["cameras"].push_back(b.camera_id);
  stamp.apply(manifest);
  write_text(dir / "manifest.json", pretty(manifest));
  return out;
}

inline std::vector<GainsReport> cmd_postprocess(const ExperimentConfig& cfg) {
  const Inputs in = load_inputs(cfg);
  const Stamp stamp = stamp_of(cfg);
  std::vector<GainsReport> reports(in.benchmarks.size());
  parallel_for(in.benchmarks.size(), cfg.workers, [&](std::size_t i) {
    const StreamContext ctx(in.benchmarks[i], in.store, in.text_head);
    reports[i] = sweep_hyperparameters(ctx, accumulated_run(cfg, ctx, cfg.recipe), cfg.grids);
    nlohmann::json doc = to_json(reports[i]);
    doc["recipe"] = cfg.recipe.name();
    stamp.apply(doc);
    write_text(artifact_dir(cfg) / "postprocess" / (safe_name(in.benchmarks[i].camera_id) + ".json"), pretty(doc));
  });
  return reports;
}

/// Mean MSP and gap on each interval's test images, beside the accuracy.
inline nlohmann::json confidence_rows(const StreamContext& ctx, const AdaptedHead& head, std::size_t j, double temperature) {
  const Dataset test = ctx.gather(ctx.test_ids(j, false));
  const auto c = confidence_summary(head, test.samples, temperature);
  nlohmann::json row{{"interval", j}, {"mean_msp", c.mean_msp}, {"mean_gap", c.mean_gap}, {"test_size", test.size()}};
  if (!test.empty()) row["balanced_accuracy"] = evaluate_balanced_accuracy(head, test);
  return row;
}

inline nlohmann::json cmd_metrics(const ExperimentConfig& cfg) {
  const Inputs in = load_inputs(cfg);
  const Stamp stamp = stamp_of(cfg);
  const double tau = cfg.decision.temperature;
  std::vector<std::pair<double, double>> msp_vs_acc(in.benchmarks.size());
  std::vector<nlohmann::json> docs(in.benchmarks.size());
  parallel_for(in.benchmarks.size(), cfg.workers, [&](std::size_t i) {
    const auto& bench = in.benchmarks[i];
    const StreamContext ctx(bench, in.store, in.text_head);
    nlohmann::json doc{{"camera_id", bench.camera_id}, {"imbalance", to_json(bench.imbalance)}};
    std::vector<std::map<std::string, std::size_t>> hist;
    for (const auto& iv : bench.intervals) hist.push_back(iv.class_histogram);
    doc["tcds"] = hist.size() >= 2 ? to_json(tcds(to_histograms(hist), bench.camera_id)) : nlohmann::json(nullptr);

    nlohmann::json zs = nlohmann::json::array();
    double msp_sum = 0;
    std::size_t msp_n = 0;
    for (std::size_t j = 0; j < ctx.num_intervals(); ++j) {
      zs.push_back(confidence_rows(ctx, ctx.zero_shot_head(), j, tau));
      if (zs.back().contains("balanced_accuracy")) {
        msp_sum += zs.back()["mean_msp"].get<double>();
        ++msp_n;
      }
    }
    const RunResult zrun = run_zero_shot(ctx);
    msp_vs_acc[i] = {msp_n ? msp_sum / static_cast<double>(msp_n) : 0.0, zrun.aggregate};
    nlohmann::json acc = nlohmann::json::array();
    if (wants(cfg, "accumulated")) {
      const RunResult run = accumulated_run(cfg, ctx, cfg.recipe);
      for (std::size_t j = 0; j < run.heads.size(); ++j) acc.push_back(confidence_rows(ctx, run.heads[j], j + 1, tau));
    }
    doc["confidence"] = {{"temperature", tau}, {"zero_shot", zs}, {"accumulated", acc}};
    doc["zero_shot_aggregate"] = zrun.aggregate;
    stamp.apply(doc);
    write_text(artifact_dir(cfg) / "metrics" / (safe_name(bench.camera_id) + ".json"), pretty(doc));
    docs[i] = doc;
  });

  nlohmann::json summary{{"cameras", msp_vs_acc.size()}};
  if (msp_vs_acc.size() >= 3) {
    const auto r = pearson(msp_vs_acc);
    summary["msp_accuracy_pearson"] = r ? nlohmann::json(*r) : nlohmann::json(nullptr);
    if (!r) summary["msp_accuracy_pearson_note"] = "undefined: zero variance";
  } else {
    summary["msp_accuracy_pearson"] = nullptr;
    summary["msp_accuracy_pearson_note"] = "needs at least three cameras";
  }
  stamp.apply(summary);
  write_text(artifact_dir(cfg) / "metrics" / "summary.json", pretty(summary));
  return summary;
}

inline std::vector<PolicyResult> cmd_decide(const ExperimentConfig& cfg) {
  const Inputs in = load_inputs(cfg);
  const Stamp stamp = stamp_of(cfg);
  std::vector<std::unique_ptr<StreamContext>> contexts;
  std::vector<RunResult> runs(in.benchmarks.size());
  for (const auto& b : in.benchmarks) contexts.push_back(std::make_unique<StreamContext>(b, in.store, in.text_head));
  parallel_for(in.benchmarks.size(), cfg.workers,
               [&](std::size_t i) { runs[i] = accumulated_run(cfg, *contexts[i], cfg.recipe); });
  std::vector<DecisionSource> sources;
  for (std::size_t i = 0; i < runs.size(); ++i) sources.push_back({contexts[i].get(), &runs[i], cfg.decision.temperature});
  // Balancing needs both actions; with one, keep every instance and say so.
  auto instances = build_decision_set(sources, false, cfg.seed);
  bool balanced = false;
  std::string note;
  if (cfg.decision.balance) {
    std::size_t adapt = 0;
    for (const auto& inst : instances) adapt += inst.outcome.ground_truth() == Action::kAdapt;
    if (adapt > 0 && adapt < instances.size()) {
      instances = balance_decision_set(std::move(instances), cfg.seed);
      balanced = true;
    } else {
      note = std::string("every instance has ground truth '") + (adapt ? "adapt" : "skip") + "'; left unbalanced";
    }
  }

  std::string lines;
  for (const auto& inst : instances) {
    nlohmann::json row = to_json(inst);
    stamp.apply(row);
    lines += row.dump() + "\n";
  }
  write_text(artifact_dir(cfg) / "decision" / "instances.jsonl", lines);

  std::vector<Policy> policies;
  for (const auto& p : cfg.decision.policies) policies.push_back(policy_from_string(p));
  const auto results = evaluate_policies(instances, policies, cfg.seed);
  nlohmann::json doc{{"instances", instances.size()}, {"balanced", balanced}, {"policies", nlohmann::json::array()}};
  if (!note.empty()) doc["balance_note"] = note;
  for (const auto& r : results) doc["policies"].push_back(to_json(r));
  stamp.apply(doc);
  write_text(artifact_dir(cfg) / "decision" / "policies.json", pretty(doc));
  return results;
}

/// Tables and plot data derived from a finished artifact directory.
inline std::vector<fs::path> cmd_report(const fs::path& results_dir) {
  const fs::path manifest_path = results_dir / "manifest.json";
  const fs::path runs_path = results_dir / "runs.json";
  if (!fs::is_directory(results_dir) || !fs::exists(manifest_path) || !fs::exists(runs_path)) {
    throw ConfigError("no results in '" + results_dir.string() +
                      "'; point report at <out>/<config-hash>/ after `streamtrap build` and `streamtrap run`");
  }
  nlohmann::json manifest, runs_doc;
  try {
    manifest = nlohmann::json::parse(read_text(manifest_path));
    runs_doc = nlohmann::json::parse(read_text(runs_path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report inputs: ") + e.what());
  }
  if (!runs_doc.contains("runs") || runs_doc["runs"].empty())
    throw ConfigError("'" + runs_path.string() + "' lists no runs; rerun `streamtrap run` with at least one regime");
  const Stamp stamp{manifest.at("config_hash").get<std::string>(), manifest.at("seed").get<std::uint64_t>()};
  const std::string baseline = "accumulated:" + manifest.at("baseline_recipe").get<std::string>();
  const std::string star = "accumulated:" + manifest.at("recipe").get<std::string>();
  const std::string oracle = "oracle:" + manifest.at("recipe").get<std::string>();

  std::map<std::string, std::map<std::string, IntervalAccuracies>> accs;
  std::map<std::string, std::map<double, double>> frozen;
  std::set<double> fractions;
  std::ifstream results(results_dir / "results.jsonl");
  for (std::string line; std::getline(results, line);) {
    if (line.empty()) continue;
    const auto row = nlohmann::json::parse(line);
    accs[row.at("camera_id")][row.at("run")][row.at("interval").get<std::size_t>()] = row.at("balanced_accuracy").get<double>();
  }
  for (const auto& r : runs_doc["runs"]) {
    if (r.at("regime") == "frozen") {
      frozen[r.at("camera_id")][r.at("freeze_fraction").get<double>()] = r.at("aggregate").get<double>();
      fractions.insert(r.at("freeze_fraction").get<double>());
    }
  }

  const fs::path out = results_dir / "reports";
  std::vector<fs::path> written;
  const auto emit = [&](const std::string& name, const std::string& text) {
    write_text(out / name, text);
    written.push_back(out / name);
  };

  std::vector<ComparisonColumn> columns;
  for (const auto& [cam, runs] : accs) columns.push_back(comparison_column(cam, runs, baseline, star, oracle));
  emit("table_regimes.csv", comparison_csv(columns, stamp));

  std::string deltas = stamp.csv_comment() + "camera_id,zero_shot,accumulated,accumulated_star,oracle_star,oracle_minus_zero_shot,accum_star_minus_zero_shot\n";
  nlohmann::json delta_json = nlohmann::json::array();
  std::vector<double> zs_values;
  for (const auto& c : columns) {
    const auto d = [&](std::optional<double> a) -> std::optional<double> {
      if (!a || !c.zero_shot) return std::nullopt;
      return *a - *c.zero_shot;
    };
    deltas += c.camera_id + "," + format_percent(c.zero_shot) + "," + format_percent(c.accumulated) + "," +
              format_percent(c.accumulated_star) + "," + format_percent(c.oracle_star) + "," +
              format_percent(d(c.oracle_star)) + "," + format_percent(d(c.accumulated_star)) + "\n";
    const auto opt = [](std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    delta_json.push_back({{"camera_id", c.camera_id},
                          {"zero_shot", opt(c.zero_shot)},
                          {"oracle_star", opt(c.oracle_star)},
                          {"oracle_minus_zero_shot", opt(d(c.oracle_star))},
                          {"accum_star_minus_zero_shot", opt(d(c.accumulated_star))}});
    if (c.zero_shot) zs_values.push_back(100.0 * *c.zero_shot);
  }
  emit("oracle_vs_zero_shot.csv", deltas);
  nlohmann::json dj{{"cameras", delta_json}};
  stamp.apply(dj);
  emit("oracle_vs_zero_shot.json", pretty(dj));

  nlohmann::json zh = fixed_histogram(zs_values, 0, 100, 5);
  zh["unit"] = "balanced accuracy (%)";
  stamp.apply(zh);
  emit("zero_shot_histogram.json", pretty(zh));

  if (!frozen.empty()) {
    std::string csv = stamp.csv_comment() + "camera_id";
    for (double f : fractions) csv += "," + format_percent(f);
    csv += "\n";
    std::map<double, std::vector<double>> by_fraction;
    for (const auto& [cam, row] : frozen) {
      csv += cam;
      for (double f : fractions) {
        const auto it = row.find(f);
        csv += "," + (it == row.end() ? std::string() : format_percent(it->second));
        if (it != row.end()) by_fraction[f].push_back(it->second);
      }
      csv += "\n";
    }
    csv += "avg";
    for (double f : fractions) {
      double s = 0;
      for (double v : by_fraction[f]) s += v;
      csv += "," + format_percent(by_fraction[f].empty() ? std::nullopt : std::optional<double>(s / static_cast<double>(by_fraction[f].size())));
    }
    emit("freeze_study.csv", csv + "\n");
  }

  if (fs::is_directory(results_dir / "postprocess")) {
    std::string csv = stamp.csv_comment() + "camera_id,calibration,interpolation,selection,best_of_three,baseline,best_of_three_aggregate\n";
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(results_dir / "postprocess")) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const auto g = nlohmann::json::parse(read_text(f));
      const auto& m = g.at("mean_gain");
      csv += g.at("camera_id").get<std::string>() + "," + format_percent(m.at("calibration").get<double>()) + "," +
             format_percent(m.at("interpolation").get<double>()) + "," + format_percent(m.at("selection").get<double>()) +
             "," + format_percent(m.at("best_of_three").get<double>()) + "," +
             format_percent(g.at("baseline_aggregate").get<double>()) + "," +
             format_percent(g.at("best_of_three_aggregate").get<double>()) + "\n";
    }
    emit("postprocess_gains.csv", csv);
  }

  if (fs::is_directory(results_dir / "metrics")) {
    std::vector<double> tcds_values, top2;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(results_dir / "metrics"))
      if (e.path().filename() != "summary.json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const auto m = nlohmann::json::parse(read_text(f));
      if (!m.at("tcds").is_null()) tcds_values.push_back(m.at("tcds").at("tcds").get<double>());
      top2.push_back(m.at("imbalance").at("top2_fraction").get<double>());
    }
    nlohmann::json doc{{"tcds", fixed_histogram(tcds_values, 0, 2, 0.1)}, {"top2_fraction", fixed_histogram(top2, 0, 1, 0.05)}};
    stamp.apply(doc);
    emit("shift_histograms.json", pretty(doc));
  }

  if (fs::exists(results_dir / "decision" / "policies.json")) {
    const auto p = nlohmann::json::parse(read_text(results_dir / "decision" / "policies.json"));
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : p.at("policies")) {
      rows.push_back({{"policy", r.at("policy")},
                      {"balanced_accuracy",
                       {{"skip", r.at("skip_cases").at("balanced_accuracy")},
                        {"adapt", r.at("adapt_cases").at("balanced_accuracy")},
                        {"combined", r.at("combined").at("balanced_accuracy")}}},
                      {"binary_accuracy",
                       {{"skip", r.at("skip_cases").at("binary_accuracy")},
                        {"adapt", r.at("adapt_cases").at("binary_accuracy")},
                        {"combined", r.at("combined").at("binary_accuracy")}}}});
    }
    nlohmann::json doc{{"columns", {"skip", "adapt", "combined"}}, {"rows", rows}};
    stamp.apply(doc);
    emit("decision_heatmap.json", pretty(doc));
  }
  return written;
}

}  // namespace streamtrap
