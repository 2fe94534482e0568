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
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "streamtrap/accuracy.hpp"
#include "streamtrap/errors.hpp"
#include "streamtrap/head.hpp"
#include "streamtrap/intervals.hpp"
#include "streamtrap/rng.hpp"

namespace streamtrap {

enum class TrainMode { kLinearFull, kLowRank };

inline const char* to_string(TrainMode m) { return m == TrainMode::kLinearFull ? "full" : "lora"; }

inline TrainMode train_mode_from_string(const std::string& s) {
  if (s == "full" || s == "linear_full") return TrainMode::kLinearFull;
  if (s == "lora" || s == "low_rank") return TrainMode::kLowRank;
  throw ConfigError("unknown train mode '" + s + "' (expected full or lora)");
}

struct TrainConfig {
  double max_lr = 2.5e-5;
  double min_lr = 4.17e-7;
  double weight_decay = 1e-4;
  int t_max = 60;  ///< cosine period in epochs
  std::size_t batch_size = 32;
  int max_epochs = 60;
  int patience = 10;  ///< epochs without validation improvement before stopping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int rank = 8;
  LossKind loss = LossKind::kCrossEntropy;
  TrainMode mode = TrainMode::kLinearFull;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(min_lr > 0) || !(min_lr <= max_lr)) throw ConfigError("learning rates must satisfy 0 < min_lr <= max_lr");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (t_max < 1) throw ConfigError("t_max must be >= 1");
    if (max_epochs < 0 || patience < 1) throw ConfigError("max_epochs must be >= 0 and patience >= 1");
    if (rank < 1) throw ConfigError("rank must be >= 1");
    if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
  }
};

/// Cosine annealing between max_lr and min_lr with period t_max epochs.
inline double cosine_lr(const TrainConfig& cfg, int epoch) {
  const double phase = std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(cfg.t_max);
  return cfg.min_lr + 0.5 * (cfg.max_lr - cfg.min_lr) * (1.0 + std::cos(phase));
}

/// Adam with decoupled weight decay, for one parameter block.
class AdamW {
 public:
  AdamW(Eigen::Index rows, Eigen::Index cols, const TrainConfig& cfg)
      : m_(Eigen::MatrixXd::Zero(rows, cols)), v_(Eigen::MatrixXd::Zero(rows, cols)), cfg_(cfg) {}

  void step(Eigen::MatrixXd& param, const Eigen::MatrixXd& grad, double lr) {
    ++t_;
    param *= 1.0 - lr * cfg_.weight_decay;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    param.array() -= lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + cfg_.epsilon);
  }

 private:
  Eigen::MatrixXd m_, v_;
  TrainConfig cfg_;
  int t_ = 0;
};

/// Labeled embeddings, one column per sample.
struct Dataset {
  std::vector<std::string> ids;
  Eigen::MatrixXd samples;  ///< d x n
  std::vector<Eigen::Index> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  Eigen::VectorXd sample(std::size_t i) const { return samples.col(static_cast<Eigen::Index>(i)); }
};

/// Logits for every sample, one column each (C x n).
inline Eigen::MatrixXd score_matrix(const AdaptedHead& head, const Eigen::MatrixXd& samples) {
  require_same_dim(static_cast<std::size_t>(samples.rows()), static_cast<std::size_t>(head.dim()), "samples");
  if (!head.adapter) return head.weights * samples;
  const Eigen::MatrixXd adapted = samples + head.adapter->up * (head.adapter->down * samples);
  return head.weights * adapted;
}

inline std::vector<Prediction> predictions_of(const AdaptedHead& head, const Dataset& data) {
  std::vector<Prediction> out;
  out.reserve(data.size());
  const Eigen::MatrixXd scores = score_matrix(head, data.samples);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Eigen::VectorXd col = scores.col(static_cast<Eigen::Index>(i));
    out.push_back({static_cast<std::size_t>(data.labels[i]), static_cast<std::size_t>(argmax(col))});
  }
  return out;
}

inline double evaluate_balanced_accuracy(const AdaptedHead& head, const Dataset& data) {
  const auto preds = predictions_of(head, data);
  return balanced_accuracy(preds).value;
}

inline std::vector<double> class_counts_of(const Dataset& data, std::size_t num_classes) {
  std::vector<double> counts(num_classes, 0.0);
  for (auto l : data.labels) counts.at(static_cast<std::size_t>(l)) += 1.0;
  return counts;
}

struct TrainResult {
  AdaptedHead head;
  int epochs_run = 0;
  int best_epoch = -1;              ///< -1 when no validation set was used
  double best_validation = 0;
  std::vector<double> epoch_losses;  ///< mean training loss per epoch
};

/// Fits a head on frozen embeddings. Full mode trains the weight matrix;
/// low-rank mode freezes it and trains a residual adapter whose up factor
/// starts at zero. With a validation set, the head with the best validation
/// balanced accuracy is returned and training stops after `patience`
/// epochs scoring below that best. Ties keep the later head: a small
/// validation set saturates early, and stopping on a plateau would return
/// a barely trained head.
inline TrainResult train_head(const AdaptedHead& init, const Dataset& train, const Dataset& val, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw ConfigError("training set is empty");
  if (train.samples.rows() != init.dim()) {
    throw DimensionError("training embeddings have dimension " + std::to_string(train.samples.rows()) +
                         " but the head expects " + std::to_string(init.dim()));
  }

  TrainResult result;
  AdaptedHead head = init;
  head.loss = cfg.loss;
  head.class_counts = class_counts_of(train, static_cast<std::size_t>(head.num_classes()));
  head.provenance.seed = cfg.seed;
  if (cfg.max_epochs == 0) {
    result.head = std::move(head);
    return result;
  }

  const bool low_rank = cfg.mode == TrainMode::kLowRank;
  if (low_rank && !head.adapter) {
    if (cfg.rank > head.dim()) throw ConfigError("adapter rank exceeds embedding dimension");
    const Eigen::Index r = cfg.rank;
    Rng rng(derive_seed(cfg.seed, 0x10a));
    LowRankAdapter a;
    a.up = Eigen::MatrixXd::Zero(head.dim(), r);
    a.down.resize(r, head.dim());
    const double scale = 1.0 / static_cast<double>(r);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index k = 0; k < head.dim(); ++k) a.down(i, k) = rng.uniform(-scale, scale);
    head.adapter = std::move(a);
  } else if (!low_rank && head.adapter) {
    head.weights = head.effective_weights();
    head.adapter.reset();
  }

  AdamW opt_w(head.weights.rows(), head.weights.cols(), cfg);
  std::optional<AdamW> opt_up, opt_down;
  if (low_rank) {
    opt_up.emplace(head.adapter->up.rows(), head.adapter->up.cols(), cfg);
    opt_down.emplace(head.adapter->down.rows(), head.adapter->down.cols(), cfg);
  }

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  AdaptedHead best = head;
  double best_val = -1;
  int stale = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = cosine_lr(cfg, epoch);
    Rng rng(derive_seed(cfg.seed, 0xe90c, epoch));
    rng.shuffle(order);
    double epoch_loss = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - begin);
      HeadGradient grad = HeadGradient::zeros_like(head);
      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t i = order[b];
        const double loss = sample_loss_and_gradient(head, cfg.loss, train.sample(i), train.labels[i], grad, scale);
        if (!std::isfinite(loss)) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", sample '" +
                              (i < train.ids.size() ? train.ids[i] : std::to_string(i)) + "', lr " + std::to_string(lr));
        }
        epoch_loss += loss;
      }
      if (low_rank) {
        opt_up->step(head.adapter->up, grad.up, lr);
        opt_down->step(head.adapter->down, grad.down, lr);
      } else {
        opt_w.step(head.weights, grad.weights, lr);
      }
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(train.size()));
    result.epochs_run = epoch + 1;

    if (!val.empty()) {
      const double score = evaluate_balanced_accuracy(head, val);
      if (score >= best_val) {
        best_val = score;
        best = head;
        result.best_epoch = epoch;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        break;
      }
    }
  }
  if (!val.empty()) {
    result.head = std::move(best);
    result.best_validation = best_val;
  } else {
    result.head = std::move(head);
  }
  return result;
}

struct ValidationSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
};

/// Training ids and validation ids for one update.
///  - oracle: all training ids of every interval, minus two randomly held-out
///    images per class (fewer when a class has fewer than two);
///  - accumulated at interval j: training ids of intervals 0..j, validated on
///    the test split of interval j-1 (none for j = 0).
inline ValidationSplit make_validation(bool oracle_mode, const IntervalBenchmark& bench, std::size_t j,
                                       std::uint64_t seed = 0, std::size_t per_class = 2) {
  ValidationSplit out;
  if (!oracle_mode) {
    if (j >= bench.intervals.size()) throw ValidationError("interval index out of range");
    for (std::size_t i = 0; i <= j; ++i) {
      const auto& ids = bench.intervals[i].train_ids;
      out.train_ids.insert(out.train_ids.end(), ids.begin(), ids.end());
    }
    if (j > 0) out.val_ids = bench.intervals[j - 1].test_ids;
    return out;
  }
  std::map<std::string, std::vector<std::string>> by_class;
  std::vector<std::string> all;
  for (const auto& iv : bench.intervals) {
    for (const auto& id : iv.train_ids) {
      by_class[bench.label_of(id)].push_back(id);
      all.push_back(id);
    }
  }
  std::set<std::string> held;
  for (auto& [label, ids] : by_class) {
    Rng rng(derive_seed(seed, 0x7a1, fnv1a(label)));
    rng.shuffle(ids);
    for (std::size_t k = 0; k < std::min(per_class, ids.size()); ++k) held.insert(ids[k]);
  }
  for (const auto& id : all) (held.count(id) ? out.val_ids : out.train_ids).push_back(id);
  return out;
}

}  // namespace streamtrap
