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
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "streamtrap/errors.hpp"
#include "streamtrap/head.hpp"
#include "streamtrap/rng.hpp"
#include "streamtrap/shift_metrics.hpp"
#include "streamtrap/stream_engine.hpp"
#include "streamtrap/training.hpp"

namespace streamtrap {

enum class Action { kSkip, kAdapt };

inline const char* to_string(Action a) { return a == Action::kAdapt ? "adapt" : "skip"; }

/// What a deployable policy may look at: label-free statistics of the new
/// interval plus zero-shot reference thresholds for the same interval.
struct DecisionFeatures {
  std::string camera_id;
  std::size_t interval = 0;            ///< j, the newly arrived interval
  double mean_msp = 0;                 ///< model_j on interval j images
  double mean_prototype_distance = 0;  ///< to the nearest class mean of intervals < j
  double msp_threshold = 0;            ///< zero-shot mean MSP on interval j
  double distance_threshold = 0;       ///< zero-shot mean distance to the nearest text vector
};

/// Labeled outcome; only the oracle policy and the evaluator read this.
struct DecisionOutcome {
  double skip_accuracy = 0;   ///< model_{j-1} on test(j+1)
  double adapt_accuracy = 0;  ///< model_j on test(j+1)

  Action ground_truth() const { return adapt_accuracy > skip_accuracy ? Action::kAdapt : Action::kSkip; }
  double accuracy_of(Action a) const { return a == Action::kAdapt ? adapt_accuracy : skip_accuracy; }
};

struct DecisionInstance {
  DecisionFeatures features;
  DecisionOutcome outcome;
};

enum class Policy { kRandom, kMspThreshold, kPrototypeDistance, kAlwaysAdapt, kAlwaysSkip, kOracle };

inline const std::vector<Policy>& all_policies() {
  static const std::vector<Policy> p{Policy::kRandom,      Policy::kMspThreshold, Policy::kPrototypeDistance,
                                     Policy::kAlwaysAdapt, Policy::kAlwaysSkip,   Policy::kOracle};
  return p;
}

inline const char* to_string(Policy p) {
  switch (p) {
    case Policy::kRandom: return "random";
    case Policy::kMspThreshold: return "msp_threshold";
    case Policy::kPrototypeDistance: return "prototype_distance";
    case Policy::kAlwaysAdapt: return "always_adapt";
    case Policy::kAlwaysSkip: return "always_skip";
    case Policy::kOracle: return "oracle";
  }
  return "?";
}

inline Policy policy_from_string(const std::string& s) {
  for (auto p : all_policies())
    if (s == to_string(p)) return p;
  throw ConfigError("unknown policy '" + s + "'");
}

/// Decision of a label-free policy. The oracle needs the outcome and goes
/// through decide_oracle() instead.
inline Action decide(Policy policy, const DecisionFeatures& f, Rng& rng) {
  switch (policy) {
    case Policy::kRandom: return rng.coin() ? Action::kAdapt : Action::kSkip;
    case Policy::kMspThreshold: return f.mean_msp < f.msp_threshold ? Action::kAdapt : Action::kSkip;
    case Policy::kPrototypeDistance:
      return f.mean_prototype_distance > f.distance_threshold ? Action::kAdapt : Action::kSkip;
    case Policy::kAlwaysAdapt: return Action::kAdapt;
    case Policy::kAlwaysSkip: return Action::kSkip;
    case Policy::kOracle: throw ConfigError("the oracle policy needs the labeled outcome; use decide_oracle()");
  }
  throw ConfigError("unknown policy");
}

inline Action decide_oracle(const DecisionOutcome& outcome) { return outcome.ground_truth(); }

/// Mean over samples of the L2 distance to the nearest prototype (columns).
inline double mean_nearest_distance(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& prototypes) {
  if (samples.cols() == 0 || prototypes.cols() == 0) return 0.0;
  double sum = 0;
  for (Eigen::Index i = 0; i < samples.cols(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < prototypes.cols(); ++c) best = std::min(best, (samples.col(i) - prototypes.col(c)).norm());
    sum += best;
  }
  return sum / static_cast<double>(samples.cols());
}

/// Class-mean embeddings (columns) of a labeled set; classes without samples
/// are omitted.
inline Eigen::MatrixXd class_prototypes(const Dataset& data, Eigen::Index num_classes) {
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(data.samples.rows(), num_classes);
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    sums.col(data.labels[i]) += data.samples.col(static_cast<Eigen::Index>(i));
    counts[static_cast<std::size_t>(data.labels[i])] += 1;
  }
  Eigen::MatrixXd out(data.samples.rows(), 0);
  for (Eigen::Index c = 0; c < num_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) continue;
    out.conservativeResize(Eigen::NoChange, out.cols() + 1);
    out.col(out.cols() - 1) = sums.col(c) / counts[static_cast<std::size_t>(c)];
  }
  return out;
}

struct DecisionSource {
  const StreamContext* context = nullptr;
  const RunResult* accumulated = nullptr;  ///< must keep heads for every step
  double temperature = 1.0;
};

/// Subsamples the majority action (seeded) down to the minority count,
/// keeping the surviving instances in their original order.
inline std::vector<DecisionInstance> balance_decision_set(std::vector<DecisionInstance> all, std::uint64_t seed = 0) {
  std::vector<std::size_t> adapt, skip;
  for (std::size_t i = 0; i < all.size(); ++i) (all[i].outcome.ground_truth() == Action::kAdapt ? adapt : skip).push_back(i);
  if (adapt.empty() || skip.empty()) throw ValidationError("cannot balance a decision set with only one action");
  auto& majority = adapt.size() > skip.size() ? adapt : skip;
  const std::size_t keep = std::min(adapt.size(), skip.size());
  Rng rng(derive_seed(seed, 0xba1));
  rng.shuffle(majority);
  majority.resize(keep);
  std::vector<std::size_t> chosen(adapt.begin(), adapt.end());
  chosen.insert(chosen.end(), skip.begin(), skip.end());
  std::sort(chosen.begin(), chosen.end());
  std::vector<DecisionInstance> out;
  for (auto i : chosen) out.push_back(std::move(all[i]));
  return out;
}

/// One Adapt-or-Skip instance per camera and interval j with 1 <= j <= n-2
/// whose next test split is non-empty and which has prior labeled data,
/// optionally balanced by balance_decision_set().
inline std::vector<DecisionInstance> build_decision_set(const std::vector<DecisionSource>& sources, bool balance = true,
                                                        std::uint64_t seed = 0) {
  std::vector<DecisionInstance> all;
  for (const auto& src : sources) {
    const StreamContext& ctx = *src.context;
    const RunResult& run = *src.accumulated;
    if (run.regime != Regime::kAccumulated) throw ValidationError("decision set needs accumulated runs");
    const AdaptedHead& zs = ctx.zero_shot_head();
    Eigen::MatrixXd text_vectors = zs.weights.transpose();
    for (std::size_t j = 1; j + 1 < ctx.num_intervals() && j < run.heads.size(); ++j) {
      const Dataset probe = ctx.gather(ctx.test_ids(j + 1, false));
      if (probe.empty()) continue;
      std::vector<std::string> prior_ids;
      for (std::size_t i = 0; i < j; ++i) {
        const auto& ids = ctx.benchmark().intervals[i].train_ids;
        prior_ids.insert(prior_ids.end(), ids.begin(), ids.end());
      }
      const Dataset prior = ctx.gather(prior_ids);
      if (prior.empty()) continue;

      const auto& iv = ctx.benchmark().intervals[j];
      std::vector<std::string> unlabeled = iv.train_ids;
      unlabeled.insert(unlabeled.end(), iv.test_ids.begin(), iv.test_ids.end());
      unlabeled.insert(unlabeled.end(), iv.rare_ids.begin(), iv.rare_ids.end());
      const Dataset current = ctx.gather(unlabeled);
      if (current.empty()) continue;

      DecisionInstance inst;
      inst.features.camera_id = ctx.benchmark().camera_id;
      inst.features.interval = j;
      inst.features.mean_msp = confidence_summary(run.heads[j], current.samples, src.temperature).mean_msp;
      inst.features.mean_prototype_distance =
          mean_nearest_distance(current.samples, class_prototypes(prior, zs.num_classes()));
      inst.features.msp_threshold = confidence_summary(zs, current.samples, src.temperature).mean_msp;
      inst.features.distance_threshold = mean_nearest_distance(current.samples, text_vectors);
      inst.outcome.skip_accuracy = evaluate_balanced_accuracy(run.heads[j - 1], probe);
      inst.outcome.adapt_accuracy = evaluate_balanced_accuracy(run.heads[j], probe);
      all.push_back(std::move(inst));
    }
  }
  if (all.empty()) throw ValidationError("no eligible decision instances (each camera needs at least three intervals)");
  return balance ? balance_decision_set(std::move(all), seed) : all;
}

struct CaseMetrics {
  double balanced_accuracy = 0;
  double binary_accuracy = 0;
  std::size_t count = 0;
};

struct PolicyResult {
  std::string policy;
  double balanced_accuracy = 0;  ///< mean accuracy of the chosen models
  double binary_accuracy = 0;    ///< fraction of correct actions
  CaseMetrics skip_cases;        ///< instances whose ground truth is Skip
  CaseMetrics adapt_cases;
  std::vector<Action> decisions;
};

inline PolicyResult evaluate_policy(const std::vector<DecisionInstance>& instances, Policy policy, std::uint64_t seed = 0) {
  PolicyResult r;
  r.policy = to_string(policy);
  Rng rng(derive_seed(seed, 0xdec, static_cast<std::uint64_t>(policy)));
  double sum_acc = 0, sum_correct = 0;
  for (const auto& inst : instances) {
    const Action a = policy == Policy::kOracle ? decide_oracle(inst.outcome) : decide(policy, inst.features, rng);
    r.decisions.push_back(a);
    const double acc = inst.outcome.accuracy_of(a);
    const bool correct = a == inst.outcome.ground_truth();
    sum_acc += acc;
    sum_correct += correct ? 1 : 0;
    auto& c = inst.outcome.ground_truth() == Action::kAdapt ? r.adapt_cases : r.skip_cases;
    c.balanced_accuracy += acc;
    c.binary_accuracy += correct ? 1 : 0;
    ++c.count;
  }
  if (!instances.empty()) {
    r.balanced_accuracy = sum_acc / static_cast<double>(instances.size());
    r.binary_accuracy = sum_correct / static_cast<double>(instances.size());
  }
  for (auto* c : {&r.skip_cases, &r.adapt_cases}) {
    if (c->count) {
      c->balanced_accuracy /= static_cast<double>(c->count);
      c->binary_accuracy /= static_cast<double>(c->count);
    }
  }
  return r;
}

inline std::vector<PolicyResult> evaluate_policies(const std::vector<DecisionInstance>& instances,
                                                   const std::vector<Policy>& policies = all_policies(),
                                                   std::uint64_t seed = 0) {
  std::vector<PolicyResult> out;
  for (auto p : policies) out.push_back(evaluate_policy(instances, p, seed));
  return out;
}

inline nlohmann::json to_json(const DecisionInstance& d) {
  return {{"camera_id", d.features.camera_id},
          {"interval", d.features.interval},
          {"features",
           {{"mean_msp", d.features.mean_msp},
            {"mean_prototype_distance", d.features.mean_prototype_distance},
            {"msp_threshold", d.features.msp_threshold},
            {"distance_threshold", d.features.distance_threshold}}},
          {"skip_accuracy", d.outcome.skip_accuracy},
          {"adapt_accuracy", d.outcome.adapt_accuracy},
          {"ground_truth", to_string(d.outcome.ground_truth())}};
}

inline DecisionInstance decision_from_json(const nlohmann::json& j) {
  try {
    DecisionInstance d;
    d.features.camera_id = j.at("camera_id").get<std::string>();
    d.features.interval = j.at("interval").get<std::size_t>();
    const auto& f = j.at("features");
    d.features.mean_msp = f.at("mean_msp").get<double>();
    d.features.mean_prototype_distance = f.at("mean_prototype_distance").get<double>();
    d.features.msp_threshold = f.at("msp_threshold").get<double>();
    d.features.distance_threshold = f.at("distance_threshold").get<double>();
    d.outcome.skip_accuracy = j.at("skip_accuracy").get<double>();
    d.outcome.adapt_accuracy = j.at("adapt_accuracy").get<double>();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("decision instance: ") + e.what());
  }
}

inline nlohmann::json to_json(const PolicyResult& r) {
  const auto cases = [](const CaseMetrics& c) {
    return nlohmann::json{{"balanced_accuracy", c.balanced_accuracy}, {"binary_accuracy", c.binary_accuracy}, {"count", c.count}};
  };
  return {{"policy", r.policy},
          {"combined", {{"balanced_accuracy", r.balanced_accuracy}, {"binary_accuracy", r.binary_accuracy}}},
          {"skip_cases", cases(r.skip_cases)},
          {"adapt_cases", cases(r.adapt_cases)}};
}

}  // namespace streamtrap
