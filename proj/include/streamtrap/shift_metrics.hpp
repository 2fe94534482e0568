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
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "streamtrap/errors.hpp"
#include "streamtrap/head.hpp"
#include "streamtrap/training.hpp"

namespace streamtrap {

using ClassHistogram = std::map<std::string, double>;

struct TcdsReport {
  std::string camera_id;
  std::vector<std::pair<std::size_t, double>> per_step;  ///< (j, L1 distance between p_j and p_{j+1})
  double tcds = 0;
};

inline ClassHistogram normalized(const ClassHistogram& counts) {
  double total = 0;
  for (const auto& [label, n] : counts) {
    if (!(n >= 0) || !std::isfinite(n)) throw ValidationError("class counts must be finite and >= 0");
    total += n;
  }
  if (!(total > 0)) throw ValidationError("interval histogram is empty");
  ClassHistogram p;
  for (const auto& [label, n] : counts) p[label] = n / total;
  return p;
}

/// L1 distance between two normalized class distributions.
inline double l1_shift(const ClassHistogram& p, const ClassHistogram& q) {
  std::set<std::string> labels;
  for (const auto& [l, v] : p) labels.insert(l);
  for (const auto& [l, v] : q) labels.insert(l);
  double d = 0;
  for (const auto& l : labels) {
    const auto a = p.find(l);
    const auto b = q.find(l);
    d += std::abs((a == p.end() ? 0.0 : a->second) - (b == q.end() ? 0.0 : b->second));
  }
  return d;
}

/// Mean L1 shift between consecutive intervals' class distributions.
inline TcdsReport tcds(const std::vector<ClassHistogram>& histograms, std::string camera_id = {}) {
  if (histograms.size() < 2) throw ValidationError("temporal class shift needs at least two intervals");
  TcdsReport r;
  r.camera_id = std::move(camera_id);
  ClassHistogram prev = normalized(histograms[0]);
  double sum = 0;
  for (std::size_t j = 0; j + 1 < histograms.size(); ++j) {
    ClassHistogram next = normalized(histograms[j + 1]);
    const double d = l1_shift(prev, next);
    r.per_step.emplace_back(j, d);
    sum += d;
    prev = std::move(next);
  }
  r.tcds = sum / static_cast<double>(r.per_step.size());
  return r;
}

template <typename Count>
std::vector<ClassHistogram> to_histograms(const std::vector<std::map<std::string, Count>>& counts) {
  std::vector<ClassHistogram> out;
  for (const auto& h : counts) {
    ClassHistogram d;
    for (const auto& [l, n] : h) d[l] = static_cast<double>(n);
    out.push_back(std::move(d));
  }
  return out;
}

/// Maximum softmax probability of logits / temperature.
inline double msp(const Eigen::VectorXd& eta, double temperature = 1.0) {
  if (!(temperature > 0)) throw ConfigError("temperature must be positive");
  const Eigen::VectorXd scaled = eta / temperature;
  return std::exp(scaled.maxCoeff() - log_sum_exp(scaled));
}

/// Difference between the two largest softmax probabilities.
inline double softmax_gap(const Eigen::VectorXd& eta, double temperature = 1.0) {
  if (!(temperature > 0)) throw ConfigError("temperature must be positive");
  if (eta.size() < 2) return 0.0;
  Eigen::VectorXd p = softmax(eta / temperature);
  std::sort(p.data(), p.data() + p.size(), std::greater<>());
  return p(0) - p(1);
}

struct ConfidenceSummary {
  std::vector<double> scores;  ///< per-image MSP
  double mean_msp = 0;
  double mean_gap = 0;
  double temperature = 1.0;
};

inline ConfidenceSummary confidence_summary(const AdaptedHead& head, const Eigen::MatrixXd& samples, double temperature = 1.0) {
  ConfidenceSummary s;
  s.temperature = temperature;
  if (samples.cols() == 0) return s;
  const Eigen::MatrixXd scores = score_matrix(head, samples);
  for (Eigen::Index i = 0; i < scores.cols(); ++i) {
    const Eigen::VectorXd col = scores.col(i);
    s.scores.push_back(msp(col, temperature));
    s.mean_msp += s.scores.back();
    s.mean_gap += softmax_gap(col, temperature);
  }
  s.mean_msp /= static_cast<double>(scores.cols());
  s.mean_gap /= static_cast<double>(scores.cols());
  return s;
}

/// Pearson correlation; nullopt when either coordinate has zero variance.
inline std::optional<double> pearson(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw ValidationError("correlation needs at least three points");
  const double n = static_cast<double>(points.size());
  double mx = 0, my = 0;
  for (const auto& [x, y] : points) {
    mx += x / n;
    my += y / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (const auto& [x, y] : points) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
    syy += (y - my) * (y - my);
  }
  if (sxx <= 0 || syy <= 0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline nlohmann::json to_json(const TcdsReport& r) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& [j, d] : r.per_step) steps.push_back({{"interval", j}, {"shift", d}});
  return {{"camera_id", r.camera_id}, {"per_step", steps}, {"tcds", r.tcds}};
}

}  // namespace streamtrap
