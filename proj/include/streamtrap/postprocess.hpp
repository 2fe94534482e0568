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
#include <cstddef>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "streamtrap/accuracy.hpp"
#include "streamtrap/errors.hpp"
#include "streamtrap/head.hpp"
#include "streamtrap/stream_engine.hpp"
#include "streamtrap/training.hpp"

namespace streamtrap {

/// Additive logit boost `gamma` for the labels in `targets`.
struct CalibrationSpec {
  double gamma = 0;
  std::set<std::string> targets;
};

/// Labels whose training count is below `threshold` (absent classes included).
inline std::set<std::string> absent_or_minority(const AdaptedHead& head, double threshold = 10) {
  std::set<std::string> out;
  for (std::size_t c = 0; c < head.labels.size(); ++c) {
    const double n = c < head.class_counts.size() ? head.class_counts[c] : 0.0;
    if (n < threshold) out.insert(head.labels[c]);
  }
  return out;
}

/// 1 for target classes, 0 otherwise, aligned with the head's labels.
inline Eigen::VectorXd calibration_mask(const AdaptedHead& head, const CalibrationSpec& spec) {
  if (!(spec.gamma >= 0)) throw ConfigError("calibration gamma must be >= 0");
  Eigen::VectorXd mask = Eigen::VectorXd::Zero(head.num_classes());
  for (const auto& label : spec.targets) {
    const auto it = std::find(head.labels.begin(), head.labels.end(), label);
    if (it == head.labels.end()) throw ValidationError("calibration target '" + label + "' is not in the vocabulary");
    mask(it - head.labels.begin()) = 1.0;
  }
  return mask;
}

/// argmax_c eta_c + gamma * [c in targets]; lowest index wins ties.
inline Eigen::Index calibrate_predict(const AdaptedHead& head, std::span<const float> z, const CalibrationSpec& spec) {
  const Eigen::VectorXd mask = calibration_mask(head, spec);
  return argmax(logits(head, z) + spec.gamma * mask);
}

inline std::vector<Prediction> calibrated_predictions(const AdaptedHead& head, const Dataset& data,
                                                      const CalibrationSpec& spec) {
  const Eigen::VectorXd boost = spec.gamma * calibration_mask(head, spec);
  Eigen::MatrixXd scores = score_matrix(head, data.samples);
  scores.colwise() += boost;
  std::vector<Prediction> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.push_back({static_cast<std::size_t>(data.labels[i]),
                   static_cast<std::size_t>(argmax(scores.col(static_cast<Eigen::Index>(i))))});
  }
  return out;
}

/// alpha * pretrained + (1 - alpha) * finetuned over effective weight
/// matrices. The endpoints return the corresponding input unchanged.
inline AdaptedHead interpolate_heads(const AdaptedHead& pretrained, const AdaptedHead& finetuned, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("interpolation alpha must lie in [0, 1]");
  if (pretrained.num_classes() != finetuned.num_classes() || pretrained.dim() != finetuned.dim() ||
      pretrained.labels != finetuned.labels) {
    throw DimensionError("cannot interpolate heads of different shapes or vocabularies");
  }
  if (alpha == 1.0) return pretrained;
  if (alpha == 0.0) return finetuned;
  const Eigen::MatrixXd a = pretrained.effective_weights();
  const Eigen::MatrixXd b = finetuned.effective_weights();
  AdaptedHead out = finetuned;
  out.adapter.reset();
  // Clamping keeps rounding from stepping outside the endpoints' range.
  out.weights = (alpha * a + (1.0 - alpha) * b).cwiseMax(a.cwiseMin(b)).cwiseMin(a.cwiseMax(b));
  return out;
}

struct ModelSelection {
  std::size_t index = 0;
  double accuracy = 0;
};

/// Checkpoint with the highest balanced accuracy on the probe; ties go to
/// the most recent one. Uses labels from the probe, so it is an oracle-style
/// diagnostic.
inline ModelSelection select_interval_model(const std::vector<AdaptedHead>& checkpoints, const Dataset& probe) {
  if (checkpoints.empty()) throw ValidationError("model selection needs at least one checkpoint");
  if (probe.empty()) throw ValidationError("model selection needs a non-empty probe set");
  ModelSelection best{0, -1};
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    const double acc = evaluate_balanced_accuracy(checkpoints[i], probe);
    if (acc >= best.accuracy) best = {i, acc};
  }
  return best;
}

inline std::vector<double> default_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
  return g;
}

struct SweepGrids {
  std::vector<double> gammas = default_grid();
  std::vector<double> alphas = default_grid();
  double minority_threshold = 10;
};

struct IntervalGain {
  std::size_t interval = 0;  ///< probe interval j+1
  int model_step = 0;        ///< j
  double baseline = 0;
  double best_gamma = 0;
  double calibration_gain = 0;
  double best_alpha = 0;
  double interpolation_gain = 0;
  std::size_t selected_checkpoint = 0;
  double selection_gain = 0;
  double best_of_three = 0;
};

struct GainsReport {
  std::string camera_id;
  std::vector<IntervalGain> intervals;
  double mean_calibration_gain = 0;
  double mean_interpolation_gain = 0;
  double mean_selection_gain = 0;
  double mean_best_of_three = 0;
  double baseline_aggregate = 0;
  double best_of_three_aggregate = 0;
};

/// Upper-bound study: for each accumulated step j, picks the calibration
/// gamma, interpolation alpha and historical checkpoint that maximize balanced
/// accuracy on the test split of interval j+1, and reports each gain over
/// the raw model_j.
inline GainsReport sweep_hyperparameters(const StreamContext& ctx, const RunResult& accumulated, const SweepGrids& grids = {}) {
  if (grids.gammas.empty() || grids.alphas.empty()) throw ConfigError("sweep grids must be non-empty");
  if (accumulated.regime != Regime::kAccumulated) throw ValidationError("sweep expects an accumulated run");
  GainsReport report;
  report.camera_id = accumulated.camera_id;
  const AdaptedHead& pretrained = ctx.zero_shot_head();

  for (std::size_t j = 0; j < accumulated.heads.size(); ++j) {
    const Dataset probe = ctx.gather(ctx.test_ids(j + 1, false));
    if (probe.empty()) continue;
    const AdaptedHead& model = accumulated.heads[j];
    IntervalGain g;
    g.interval = j + 1;
    g.model_step = static_cast<int>(j);
    g.baseline = balanced_accuracy(predictions_of(model, probe)).value;

    double best = -1;
    CalibrationSpec spec{0, absent_or_minority(model, grids.minority_threshold)};
    for (double gamma : grids.gammas) {
      spec.gamma = gamma;
      const double acc = balanced_accuracy(calibrated_predictions(model, probe, spec)).value;
      if (acc > best) {
        best = acc;
        g.best_gamma = gamma;
      }
    }
    g.calibration_gain = best - g.baseline;

    best = -1;
    for (double alpha : grids.alphas) {
      const double acc = evaluate_balanced_accuracy(interpolate_heads(pretrained, model, alpha), probe);
      if (acc > best) {
        best = acc;
        g.best_alpha = alpha;
      }
    }
    g.interpolation_gain = best - g.baseline;

    const std::vector<AdaptedHead> history(accumulated.heads.begin(), accumulated.heads.begin() + static_cast<std::ptrdiff_t>(j + 1));
    const auto sel = select_interval_model(history, probe);
    g.selected_checkpoint = sel.index;
    g.selection_gain = sel.accuracy - g.baseline;
    g.best_of_three = std::max({g.calibration_gain, g.interpolation_gain, g.selection_gain});
    report.intervals.push_back(g);
  }

  const double n = static_cast<double>(report.intervals.size());
  for (const auto& g : report.intervals) {
    report.mean_calibration_gain += g.calibration_gain / n;
    report.mean_interpolation_gain += g.interpolation_gain / n;
    report.mean_selection_gain += g.selection_gain / n;
    report.mean_best_of_three += g.best_of_three / n;
    report.baseline_aggregate += g.baseline / n;
    report.best_of_three_aggregate += (g.baseline + g.best_of_three) / n;
  }
  return report;
}

inline nlohmann::json to_json(const GainsReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& g : r.intervals) {
    rows.push_back({{"interval", g.interval},
                    {"model_step", g.model_step},
                    {"baseline", g.baseline},
                    {"calibration", {{"gain", g.calibration_gain}, {"gamma", g.best_gamma}}},
                    {"interpolation", {{"gain", g.interpolation_gain}, {"alpha", g.best_alpha}}},
                    {"selection", {{"gain", g.selection_gain}, {"checkpoint", g.selected_checkpoint}}},
                    {"best_of_three", g.best_of_three}});
  }
  return {{"camera_id", r.camera_id},
          {"oracle_hparam", true},
          {"intervals", rows},
          {"mean_gain",
           {{"calibration", r.mean_calibration_gain},
            {"interpolation", r.mean_interpolation_gain},
            {"selection", r.mean_selection_gain},
            {"best_of_three", r.mean_best_of_three}}},
          {"baseline_aggregate", r.baseline_aggregate},
          {"best_of_three_aggregate", r.best_of_three_aggregate}};
}

}  // namespace streamtrap
