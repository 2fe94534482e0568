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

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "streamtrap/errors.hpp"
#include "streamtrap/head.hpp"
#include "streamtrap/intervals.hpp"
#include "streamtrap/metadata.hpp"
#include "streamtrap/postprocess.hpp"
#include "streamtrap/training.hpp"

namespace streamtrap {

/// Loss and trainable-parameter choice for one family of heads.
struct Recipe {
  LossKind loss = LossKind::kCrossEntropy;
  TrainMode mode = TrainMode::kLinearFull;

  std::string name() const { return std::string(to_string(loss)) + "_" + to_string(mode); }
};

inline Recipe recipe_from_string(const std::string& s) {
  const auto cut = s.find('_');
  if (cut == std::string::npos) throw ConfigError("recipe '" + s + "' must look like <loss>_<mode>, e.g. bsm_lora");
  return {loss_kind_from_string(s.substr(0, cut)), train_mode_from_string(s.substr(cut + 1))};
}

struct DecisionConfig {
  bool balance = true;
  double temperature = 1.0;
  std::vector<std::string> policies{"random", "msp_threshold", "prototype_distance", "always_adapt", "always_skip", "oracle"};
};

/// Everything that determines an experiment's outputs. The worker count and
/// output root are operational and stay out of the hash.
struct ExperimentConfig {
  std::string metadata_path;
  std::string embeddings_path;
  std::string text_head_path;
  std::string output_dir = "streamtrap_out";
  std::size_t workers = 1;

  std::vector<std::string> cameras;  ///< allowlist; empty admits all
  FilterConfig filter;
  AdmissionConfig admission;
  BenchmarkConfig benchmark;
  std::int64_t sequence_gap_seconds = 3;

  std::vector<std::string> regimes{"zero_shot", "accumulated", "oracle", "frozen"};
  Recipe baseline{LossKind::kCrossEntropy, TrainMode::kLinearFull};
  Recipe recipe{LossKind::kBalancedSoftmax, TrainMode::kLowRank};
  TrainConfig train;
  bool warm_start = false;
  bool append_rare_to_test = false;
  std::vector<double> freeze_fractions{0.0, 0.25, 0.5, 0.75, 1.0};
  SweepGrids grids;
  DecisionConfig decision;
  std::uint64_t seed = 0;

  void validate() const {
    train.validate();
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (sequence_gap_seconds < 0) throw ConfigError("sequence_gap_seconds must be >= 0");
    if (benchmark.window_days < 1) throw ConfigError("benchmark.window_days must be >= 1");
    if (!(benchmark.split.test_fraction > 0 && benchmark.split.test_fraction < 1))
      throw ConfigError("benchmark.test_fraction must lie in (0, 1)");
    if (!(benchmark.crop_scale > 0)) throw ConfigError("benchmark.crop_scale must be positive");
    if (!(decision.temperature > 0)) throw ConfigError("decision.temperature must be positive");
    if (grids.gammas.empty() || grids.alphas.empty()) throw ConfigError("post-process grids must not be empty");
    for (double f : freeze_fractions)
      if (!(f >= 0 && f <= 1)) throw ConfigError("freeze fractions must lie in [0, 1]");
    for (const auto& r : regimes)
      if (r != "zero_shot" && r != "accumulated" && r != "oracle" && r != "frozen")
        throw ConfigError("unknown regime '" + r + "'");
  }
};

/// The hashed part of the configuration.
inline nlohmann::json results_config_json(const ExperimentConfig& c) {
  return {{"metadata_path", c.metadata_path},
          {"embeddings_path", c.embeddings_path},
          {"text_head_path", c.text_head_path},
          {"cameras", c.cameras},
          {"filter",
           {{"min_confidence", c.filter.min_confidence},
            {"single_species", c.filter.single_species},
            {"excluded_labels", c.filter.excluded_labels}}},
          {"admission", {{"min_images", c.admission.min_images}, {"min_span_days", c.admission.min_span_days}}},
          {"benchmark",
           {{"window_days", c.benchmark.window_days},
            {"min_interval_images", c.benchmark.min_interval_images},
            {"rare_threshold", c.benchmark.split.rare_threshold},
            {"test_fraction", c.benchmark.split.test_fraction},
            {"min_test_quota", c.benchmark.split.min_test_quota},
            {"crop_scale", c.benchmark.crop_scale}}},
          {"sequence_gap_seconds", c.sequence_gap_seconds},
          {"regimes", c.regimes},
          {"baseline_recipe", c.baseline.name()},
          {"recipe", c.recipe.name()},
          {"train",
           {{"max_lr", c.train.max_lr},
            {"min_lr", c.train.min_lr},
            {"weight_decay", c.train.weight_decay},
            {"t_max", c.train.t_max},
            {"batch_size", c.train.batch_size},
            {"max_epochs", c.train.max_epochs},
            {"patience", c.train.patience},
            {"beta1", c.train.beta1},
            {"beta2", c.train.beta2},
            {"epsilon", c.train.epsilon},
            {"rank", c.train.rank}}},
          // Recorded for forward compatibility; these losses are not implemented.
          {"reserved_losses", {{"cb_focal", {{"beta", 0.999}, {"gamma", 0.5}}}, {"cdt", {{"gamma", 0.3}}}}},
          {"warm_start", c.warm_start},
          {"append_rare_to_test", c.append_rare_to_test},
          {"freeze_fractions", c.freeze_fractions},
          {"grids",
           {{"gammas", c.grids.gammas}, {"alphas", c.grids.alphas}, {"minority_threshold", c.grids.minority_threshold}}},
          {"decision",
           {{"balance", c.decision.balance}, {"temperature", c.decision.temperature}, {"policies", c.decision.policies}}},
          {"seed", c.seed}};
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  auto j = results_config_json(c);
  j["output_dir"] = c.output_dir;
  j["workers"] = c.workers;
  return j;
}

namespace detail {

/// Recursively rejects keys in `layer` that the default document lacks.
inline void check_known_keys(const nlohmann::json& defaults, const nlohmann::json& layer, const std::string& where) {
  if (!layer.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (auto it = layer.begin(); it != layer.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!defaults.contains(it.key())) throw ConfigError("unknown config key '" + path + "'");
    if (defaults.at(it.key()).is_object() && it.key() != "reserved_losses") check_known_keys(defaults.at(it.key()), it.value(), path);
  }
}

}  // namespace detail

/// Applies JSON layers in order over the defaults; later layers win.
inline ExperimentConfig resolve_config(const std::vector<nlohmann::json>& layers) {
  const ExperimentConfig defaults;
  nlohmann::json merged = to_json(defaults);
  for (const auto& layer : layers) {
    if (layer.is_null()) continue;
    detail::check_known_keys(merged, layer, "");
    merged.merge_patch(layer);
  }
  ExperimentConfig c;
  try {
    c.metadata_path = merged.at("metadata_path").get<std::string>();
    c.embeddings_path = merged.at("embeddings_path").get<std::string>();
    c.text_head_path = merged.at("text_head_path").get<std::string>();
    c.output_dir = merged.at("output_dir").get<std::string>();
    c.workers = merged.at("workers").get<std::size_t>();
    c.cameras = merged.at("cameras").get<std::vector<std::string>>();
    const auto& f = merged.at("filter");
    c.filter.min_confidence = f.at("min_confidence").get<double>();
    c.filter.single_species = f.at("single_species").get<bool>();
    c.filter.excluded_labels = f.at("excluded_labels").get<std::vector<std::string>>();
    for (auto& l : c.filter.excluded_labels) l = normalize_label(l);
    const auto& a = merged.at("admission");
    c.admission.min_images = a.at("min_images").get<std::size_t>();
    c.admission.min_span_days = a.at("min_span_days").get<std::int64_t>();
    const auto& b = merged.at("benchmark");
    c.benchmark.window_days = b.at("window_days").get<std::int64_t>();
    c.benchmark.min_interval_images = b.at("min_interval_images").get<std::size_t>();
    c.benchmark.split.rare_threshold = b.at("rare_threshold").get<std::size_t>();
    c.benchmark.split.test_fraction = b.at("test_fraction").get<double>();
    c.benchmark.split.min_test_quota = b.at("min_test_quota").get<std::size_t>();
    c.benchmark.crop_scale = b.at("crop_scale").get<double>();
    c.sequence_gap_seconds = merged.at("sequence_gap_seconds").get<std::int64_t>();
    c.regimes = merged.at("regimes").get<std::vector<std::string>>();
    c.baseline = recipe_from_string(merged.at("baseline_recipe").get<std::string>());
    c.recipe = recipe_from_string(merged.at("recipe").get<std::string>());
    const auto& t = merged.at("train");
    c.train.max_lr = t.at("max_lr").get<double>();
    c.train.min_lr = t.at("min_lr").get<double>();
    c.train.weight_decay = t.at("weight_decay").get<double>();
    c.train.t_max = t.at("t_max").get<int>();
    c.train.batch_size = t.at("batch_size").get<std::size_t>();
    c.train.max_epochs = t.at("max_epochs").get<int>();
    c.train.patience = t.at("patience").get<int>();
    c.train.beta1 = t.at("beta1").get<double>();
    c.train.beta2 = t.at("beta2").get<double>();
    c.train.epsilon = t.at("epsilon").get<double>();
    c.train.rank = t.at("rank").get<int>();
    c.warm_start = merged.at("warm_start").get<bool>();
    c.append_rare_to_test = merged.at("append_rare_to_test").get<bool>();
    c.freeze_fractions = merged.at("freeze_fractions").get<std::vector<double>>();
    const auto& g = merged.at("grids");
    c.grids.gammas = g.at("gammas").get<std::vector<double>>();
    c.grids.alphas = g.at("alphas").get<std::vector<double>>();
    c.grids.minority_threshold = g.at("minority_threshold").get<double>();
    const auto& d = merged.at("decision");
    c.decision.balance = d.at("balance").get<bool>();
    c.decision.temperature = d.at("temperature").get<double>();
    c.decision.policies = d.at("policies").get<std::vector<std::string>>();
    c.seed = merged.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
  c.train.seed = c.seed;
  c.benchmark.seed = c.seed;
  c.validate();
  return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline std::string sha256_hex(const std::string& text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("internal_error", "SHA-256 digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

/// First 16 hex digits of the SHA-256 of the canonical result-affecting config.
inline std::string config_hash(const ExperimentConfig& c) { return sha256_hex(results_config_json(c).dump()).substr(0, 16); }

/// STREAMTRAP_OUT, when set, replaces the configured output root.
inline std::filesystem::path output_root(const ExperimentConfig& c) {
  if (const char* env = std::getenv("STREAMTRAP_OUT"); env && *env) return env;
  return c.output_dir;
}

inline std::filesystem::path artifact_dir(const ExperimentConfig& c) { return output_root(c) / config_hash(c); }

}  // namespace streamtrap
