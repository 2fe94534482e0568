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
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "streamtrap/errors.hpp"
#include "streamtrap/stream_engine.hpp"

namespace streamtrap {

/// Stamp carried by every emitted artifact.
struct Stamp {
  std::string config_hash;
  std::uint64_t seed = 0;

  void apply(nlohmann::json& j) const {
    j["config_hash"] = config_hash;
    j["seed"] = seed;
  }
  std::string csv_comment() const { return "# config_hash=" + config_hash + ",seed=" + std::to_string(seed) + "\n"; }
};

inline nlohmann::json to_json(const IntervalScore& s) {
  return {{"interval", s.interval},
          {"balanced_accuracy", s.balanced_accuracy},
          {"per_class", s.per_class},
          {"model_through", s.model_through},
          {"test_size", s.test_size}};
}

/// One results row per scored interval.
inline std::vector<nlohmann::json> result_rows(const RunResult& run, const Stamp& stamp) {
  std::vector<nlohmann::json> rows;
  for (const auto& s : run.per_interval) {
    nlohmann::json row = to_json(s);
    row["camera_id"] = run.camera_id;
    row["regime"] = to_string(run.regime);
    row["recipe"] = run.recipe;
    row["run"] = run.name();
    if (run.regime == Regime::kFrozen) row["freeze_fraction"] = run.freeze_fraction;
    stamp.apply(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json run_summary(const RunResult& run) {
  nlohmann::json j{{"camera_id", run.camera_id},
                   {"regime", to_string(run.regime)},
                   {"recipe", run.recipe},
                   {"run", run.name()},
                   {"aggregate", run.aggregate},
                   {"intervals", nlohmann::json::array()}};
  for (const auto& s : run.per_interval) j["intervals"].push_back(s.interval);
  if (run.regime == Regime::kFrozen) j["freeze_fraction"] = run.freeze_fraction;
  if (run.zero_shot_interval0) j["zero_shot_interval0"] = to_json(*run.zero_shot_interval0);
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& h : run.heads)
    heads.push_back({{"trained_through", h.provenance.trained_through}, {"seed", h.provenance.seed}, {"regime", h.provenance.regime}});
  j["head_checkpoints"] = heads;
  return j;
}

/// Per-interval accuracies of one run, keyed by interval.
using IntervalAccuracies = std::map<std::size_t, double>;

inline std::optional<double> mean_over(const IntervalAccuracies& acc, const std::set<std::size_t>& intervals) {
  double sum = 0;
  std::size_t n = 0;
  for (auto j : intervals) {
    if (auto it = acc.find(j); it != acc.end()) {
      sum += it->second;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

/// Per-camera columns of the ZS / Accum / Accum* / Oracle* comparison. All
/// four rows average over the intervals the baseline accumulated run scored,
/// so every delta compares like with like.
struct ComparisonColumn {
  std::string camera_id;
  std::optional<double> zero_shot, accumulated, accumulated_star, oracle_star;
};

inline ComparisonColumn comparison_column(const std::string& camera, const std::map<std::string, IntervalAccuracies>& runs,
                                          const std::string& baseline_run, const std::string& star_run,
                                          const std::string& oracle_run) {
  ComparisonColumn col;
  col.camera_id = camera;
  std::set<std::size_t> common;
  if (auto it = runs.find(baseline_run); it != runs.end())
    for (const auto& [j, v] : it->second) common.insert(j);
  else if (auto st = runs.find(star_run); st != runs.end())
    for (const auto& [j, v] : st->second) common.insert(j);
  const auto pick = [&](const std::string& name) -> std::optional<double> {
    const auto it = runs.find(name);
    if (it == runs.end()) return std::nullopt;
    if (common.empty()) {
      std::set<std::size_t> all;
      for (const auto& [j, v] : it->second) all.insert(j);
      return mean_over(it->second, all);
    }
    return mean_over(it->second, common);
  };
  col.zero_shot = pick("zero_shot");
  col.accumulated = pick(baseline_run);
  col.accumulated_star = pick(star_run);
  col.oracle_star = pick(oracle_run);
  return col;
}

inline std::string format_percent(std::optional<double> v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * *v);
  return buf;
}

inline std::string sign_flag(std::optional<double> delta) {
  if (!delta) return "";
  if (*delta > 0) return "pos";
  if (*delta < 0) return "neg";
  return "zero";
}

/// Table-shaped CSV: one column per camera plus Avg; every delta row
/// (relative to zero-shot) is followed by a row of sign flags.
inline std::string comparison_csv(const std::vector<ComparisonColumn>& cols, const Stamp& stamp) {
  std::string out = stamp.csv_comment() + "row";
  for (const auto& c : cols) out += "," + c.camera_id;
  out += ",avg\n";
  const auto avg = [&](auto get) -> std::optional<double> {
    double s = 0;
    std::size_t n = 0;
    for (const auto& c : cols)
      if (auto v = get(c)) {
        s += *v;
        ++n;
      }
    if (n == 0) return std::nullopt;
    return s / static_cast<double>(n);
  };
  const auto delta = [](std::optional<double> a, std::optional<double> zs) -> std::optional<double> {
    if (!a || !zs) return std::nullopt;
    return *a - *zs;
  };
  using Getter = std::optional<double> (*)(const ComparisonColumn&);
  const std::vector<std::pair<std::string, Getter>> rows{
      {"ZS", [](const ComparisonColumn& c) { return c.zero_shot; }},
      {"Accum", [](const ComparisonColumn& c) { return c.accumulated; }},
      {"Accum*", [](const ComparisonColumn& c) { return c.accumulated_star; }},
      {"Oracle*", [](const ComparisonColumn& c) { return c.oracle_star; }}};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& [name, get] = rows[r];
    out += name;
    for (const auto& c : cols) out += "," + format_percent(get(c));
    out += "," + format_percent(avg(get)) + "\n";
    if (r == 0) continue;
    std::vector<std::optional<double>> deltas;
    for (const auto& c : cols) deltas.push_back(delta(get(c), c.zero_shot));
    const auto avg_delta = delta(avg(get), avg(rows[0].second));
    out += "delta_" + name;
    for (const auto& d : deltas) out += "," + format_percent(d);
    out += "," + format_percent(avg_delta) + "\n";
    out += "delta_" + name + "_sign";
    for (const auto& d : deltas) out += "," + sign_flag(d);
    out += "," + sign_flag(avg_delta) + "\n";
  }
  return out;
}

/// Fixed-width histogram over [lo, hi]; the last bin is closed on the right
/// and values outside the range are clamped into the end bins.
inline nlohmann::json fixed_histogram(const std::vector<double>& values, double lo, double hi, double width) {
  const auto bins = static_cast<std::size_t>(std::llround((hi - lo) / width));
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    auto k = static_cast<long long>(std::floor((v - lo) / width + 1e-9));
    k = std::clamp<long long>(k, 0, static_cast<long long>(bins) - 1);
    ++counts[static_cast<std::size_t>(k)];
  }
  nlohmann::json edges = nlohmann::json::array();
  for (std::size_t k = 0; k <= bins; ++k) edges.push_back(lo + width * static_cast<double>(k));
  return {{"edges", edges}, {"counts", counts}};
}

}  // namespace streamtrap
