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
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "streamtrap/embedding_store.hpp"
#include "streamtrap/errors.hpp"
#include "streamtrap/metadata.hpp"
#include "streamtrap/rng.hpp"

namespace streamtrap {

/// Per-camera recipe: one class-proportion vector per 30-day window.
struct SyntheticCamera {
  std::string camera_id;
  std::vector<std::vector<double>> interval_weights;
  std::size_t images_per_interval = 250;
};

/// Gaussian class clusters around orthonormal means, observed through a
/// text head whose vectors are perturbed copies of those means.
struct SyntheticConfig {
  std::vector<std::string> labels{"deer", "fox", "hare", "lynx", "otter"};
  std::uint32_t dim = 16;
  double separation = 1.0;         ///< length of each class mean
  double noise = 0.35;             ///< per-coordinate standard deviation
  double text_misalignment = 0.8;  ///< scale of the text-vector perturbation
  std::size_t max_sequence = 3;    ///< burst length drawn from 1..max_sequence
  bool normalize = true;
  std::int64_t window_days = 30;
  Timestamp start = Timestamp{std::chrono::sys_days{std::chrono::year{2020} / 1 / 1}};
  std::uint64_t seed = 0;
  std::vector<SyntheticCamera> cameras;
};

struct SyntheticDataset {
  std::vector<CameraStream> streams;
  EmbeddingMatrix embeddings;
  TextHead text_head;
  Eigen::MatrixXd class_means;  ///< d x C

  /// Camera-trap style document that parses back into `streams`.
  nlohmann::json metadata() const {
    nlohmann::json images = nlohmann::json::array(), annotations = nlohmann::json::array(),
                   detections = nlohmann::json::array(), categories = nlohmann::json::array();
    std::map<std::string, int> category_ids;
    for (const auto& label : text_head.labels()) {
      const int id = static_cast<int>(category_ids.size()) + 1;
      category_ids[label] = id;
      categories.push_back({{"id", id}, {"name", label}});
    }
    for (const auto& s : streams) {
      for (const auto& r : s.records) {
        images.push_back({{"id", r.image_id},
                          {"file_name", r.file_name},
                          {"location", r.camera_id},
                          {"datetime", format_timestamp(r.timestamp)},
                          {"seq_id", r.sequence_id},
                          {"frame_num", r.frame_index},
                          {"width", r.image_width},
                          {"height", r.image_height}});
        annotations.push_back({{"image_id", r.image_id}, {"category_id", category_ids.at(r.species)}});
        detections.push_back({{"image_id", r.image_id},
                              {"bbox", {r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h}},
                              {"conf", r.bbox_confidence}});
      }
    }
    return {{"images", images}, {"annotations", annotations}, {"categories", categories}, {"detections", detections}};
  }
};

/// Largest-remainder rounding of `weights` to integers summing to `total`.
inline std::vector<std::size_t> apportion(const std::vector<double>& weights, std::size_t total) {
  double sum = 0;
  for (double w : weights) {
    if (!(w >= 0)) throw ConfigError("class weights must be nonnegative");
    sum += w;
  }
  if (sum <= 0) throw ConfigError("class weights must not all be zero");
  std::vector<std::size_t> out(weights.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t c = 0; c < weights.size(); ++c) {
    const double exact = weights[c] / sum * static_cast<double>(total);
    out[c] = static_cast<std::size_t>(std::floor(exact));
    used += out[c];
    rem.emplace_back(-(exact - std::floor(exact)), c);
  }
  std::sort(rem.begin(), rem.end());
  for (std::size_t k = 0; used < total; ++k, ++used) ++out[rem[k % rem.size()].second];
  return out;
}

/// 9:1:...:1 proportions over `num_classes`.
inline std::vector<double> long_tail_weights(std::size_t num_classes, double head_ratio = 9.0) {
  std::vector<double> w(num_classes, 1.0);
  if (!w.empty()) w[0] = head_ratio;
  return w;
}

inline SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
  const std::size_t C = cfg.labels.size();
  const Eigen::Index d = cfg.dim;
  if (C == 0 || d == 0) throw ConfigError("synthetic data needs classes and a positive dimension");
  if (cfg.max_sequence == 0) throw ConfigError("max_sequence must be positive");

  Rng rng(derive_seed(cfg.seed, 0x5e7));
  Eigen::MatrixXd raw(d, static_cast<Eigen::Index>(C));
  for (Eigen::Index c = 0; c < raw.cols(); ++c)
    for (Eigen::Index k = 0; k < d; ++k) raw(k, c) = rng.normal();
  Eigen::MatrixXd means(d, raw.cols());
  if (static_cast<Eigen::Index>(C) <= d) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
    means = qr.householderQ() * Eigen::MatrixXd::Identity(d, raw.cols());
  } else {
    means = raw.colwise().normalized();
  }
  means *= cfg.separation;

  std::vector<float> text;
  for (std::size_t c = 0; c < C; ++c) {
    Eigen::VectorXd v = means.col(static_cast<Eigen::Index>(c)).normalized();
    for (Eigen::Index k = 0; k < d; ++k) v(k) += cfg.text_misalignment * rng.normal() / std::sqrt(static_cast<double>(d));
    v.normalize();
    for (Eigen::Index k = 0; k < d; ++k) text.push_back(static_cast<float>(v(k)));
  }

  SyntheticDataset out;
  out.class_means = means;
  out.text_head = TextHead(cfg.labels, cfg.dim, std::move(text));
  std::vector<std::string> ids;
  std::vector<float> data;
  const auto window = std::chrono::seconds(std::chrono::days(cfg.window_days));
  const std::int64_t window_secs = window.count();

  for (const auto& cam : cfg.cameras) {
    Rng crng(derive_seed(cfg.seed, fnv1a(cam.camera_id)));
    CameraStream stream;
    stream.camera_id = cam.camera_id;
    std::size_t image_counter = 0, sequence_counter = 0;
    for (std::size_t j = 0; j < cam.interval_weights.size(); ++j) {
      if (cam.interval_weights[j].size() != C) throw ConfigError("interval weights must list one value per class");
      const auto counts = apportion(cam.interval_weights[j], cam.images_per_interval);
      struct Burst {
        std::size_t cls, frames;
      };
      std::vector<Burst> bursts;
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t left = counts[c];
        while (left > 0) {
          const std::size_t n = std::min<std::size_t>(left, 1 + crng.below(cfg.max_sequence));
          bursts.push_back({c, n});
          left -= n;
        }
      }
      crng.shuffle(bursts);
      // Evenly spaced burst starts keep every frame inside its window; the
      // first burst of the stream sits exactly on the window origin.
      const std::int64_t slot = bursts.empty() ? 0 : (window_secs - 60) / static_cast<std::int64_t>(bursts.size());
      for (std::size_t b = 0; b < bursts.size(); ++b) {
        const Timestamp t0 = cfg.start + std::chrono::seconds(static_cast<std::int64_t>(j) * window_secs +
                                                              static_cast<std::int64_t>(b) * slot);
        char seq[64];
        std::snprintf(seq, sizeof seq, "%s_s%05zu", cam.camera_id.c_str(), sequence_counter++);
        for (std::size_t f = 0; f < bursts[b].frames; ++f) {
          ImageRecord r;
          char id[64];
          std::snprintf(id, sizeof id, "%s_%06zu", cam.camera_id.c_str(), image_counter++);
          r.image_id = id;
          r.camera_id = cam.camera_id;
          r.file_name = r.image_id + ".jpg";
          r.timestamp = t0 + std::chrono::seconds(static_cast<std::int64_t>(f));
          r.sequence_id = seq;
          r.frame_index = static_cast<std::uint32_t>(f);
          r.species = cfg.labels[bursts[b].cls];
          r.image_width = 640;
          r.image_height = 480;
          r.bbox = {static_cast<double>(100 + crng.below(300)), static_cast<double>(80 + crng.below(200)),
                    static_cast<double>(40 + crng.below(120)), static_cast<double>(30 + crng.below(100))};
          r.bbox_confidence = 0.81 + 0.19 * crng.uniform();
          stream.records.push_back(r);

          Eigen::VectorXd z = means.col(static_cast<Eigen::Index>(bursts[b].cls));
          for (Eigen::Index k = 0; k < d; ++k) z(k) += cfg.noise * crng.normal();
          if (cfg.normalize) z.normalize();
          ids.push_back(r.image_id);
          for (Eigen::Index k = 0; k < d; ++k) data.push_back(static_cast<float>(z(k)));
        }
      }
    }
    std::sort(stream.records.begin(), stream.records.end(), [](const ImageRecord& a, const ImageRecord& b) {
      return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.image_id < b.image_id;
    });
    std::set<std::string> vocab;
    for (const auto& r : stream.records) vocab.insert(r.species);
    stream.species_vocabulary.assign(vocab.begin(), vocab.end());
    out.streams.push_back(std::move(stream));
  }
  out.embeddings = EmbeddingMatrix(std::move(ids), cfg.dim, std::move(data), cfg.normalize);
  return out;
}

enum class SyntheticPreset { kImbalance, kShift, kStationary };

inline SyntheticPreset synthetic_preset_from_string(const std::string& s) {
  if (s == "imbalance") return SyntheticPreset::kImbalance;
  if (s == "shift") return SyntheticPreset::kShift;
  if (s == "stationary") return SyntheticPreset::kStationary;
  throw ConfigError("unknown synthetic preset '" + s + "' (expected imbalance, shift or stationary)");
}

/// Ready-made camera recipes.
///  - imbalance: the same 9:1:...:1 mix in every window.
///  - shift: the dominant class rotates each window, so consecutive class
///    distributions differ by 16/13 in L1 with five classes.
///  - stationary: a mild fixed long tail (3:2:1:1:1) in every window.
inline SyntheticConfig synthetic_preset(SyntheticPreset preset, std::size_t cameras, std::size_t intervals,
                                        std::uint64_t seed, std::size_t images_per_interval = 260) {
  SyntheticConfig cfg;
  cfg.seed = seed;
  const std::size_t C = cfg.labels.size();
  for (std::size_t k = 0; k < cameras; ++k) {
    SyntheticCamera cam;
    char id[32];
    std::snprintf(id, sizeof id, "cam%02zu", k);
    cam.camera_id = id;
    cam.images_per_interval = images_per_interval;
    for (std::size_t j = 0; j < intervals; ++j) {
      std::vector<double> w;
      switch (preset) {
        case SyntheticPreset::kImbalance: w = long_tail_weights(C); break;
        case SyntheticPreset::kShift:
          w.assign(C, 1.0);
          w[(j + k) % C] = 9.0;
          break;
        case SyntheticPreset::kStationary: w = {3, 2, 1, 1, 1}; break;
      }
      cam.interval_weights.push_back(std::move(w));
    }
    cfg.cameras.push_back(std::move(cam));
  }
  return cfg;
}

}  // namespace streamtrap
