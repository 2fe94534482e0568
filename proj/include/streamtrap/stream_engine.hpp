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
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "streamtrap/accuracy.hpp"
#include "streamtrap/embedding_store.hpp"
#include "streamtrap/errors.hpp"
#include "streamtrap/head.hpp"
#include "streamtrap/intervals.hpp"
#include "streamtrap/training.hpp"

namespace streamtrap {

enum class Regime { kZeroShot, kAccumulated, kOracle, kFrozen };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::kZeroShot: return "zero_shot";
    case Regime::kAccumulated: return "accumulated";
    case Regime::kOracle: return "oracle";
    case Regime::kFrozen: return "frozen";
  }
  return "?";
}

struct IntervalScore {
  std::size_t interval = 0;
  double balanced_accuracy = 0;
  std::map<std::string, double> per_class;
  int model_through = -1;  ///< last interval the scoring head was trained on; -1 = zero-shot
  std::size_t test_size = 0;
};

/// Record of which ids each head ingested and which test ids it was scored
/// on. `temporal` entries must also never ingest data from the evaluated
/// interval or later.
struct TrainingLedger {
  struct Entry {
    int step = -1;
    bool temporal = true;
    std::set<std::string> ingested;
    std::set<std::size_t> ingested_intervals;
    std::vector<std::pair<std::size_t, std::vector<std::string>>> evaluations;
  };
  std::vector<Entry> entries;

  /// Throws ValidationError on any overlap between ingested and evaluated ids.
  void verify() const {
    for (const auto& e : entries) {
      for (const auto& [interval, ids] : e.evaluations) {
        for (const auto& id : ids) {
          if (e.ingested.count(id)) {
            throw ValidationError("causality violation: step " + std::to_string(e.step) + " trained on test image '" +
                                  id + "' of interval " + std::to_string(interval));
          }
        }
        if (e.temporal && !e.ingested_intervals.empty() && *e.ingested_intervals.rbegin() >= interval) {
          throw ValidationError("causality violation: step " + std::to_string(e.step) + " ingested interval " +
                                std::to_string(*e.ingested_intervals.rbegin()) + " but is scored on interval " +
                                std::to_string(interval));
        }
      }
    }
  }
};

struct RunResult {
  std::string camera_id;
  Regime regime = Regime::kZeroShot;
  std::string recipe;           ///< e.g. "bsm_lora"; empty for zero-shot
  double freeze_fraction = 1.0;  ///< only meaningful for kFrozen
  std::vector<IntervalScore> per_interval;
  double aggregate = 0;  ///< mean balanced accuracy over per_interval
  std::optional<IntervalScore> zero_shot_interval0;  ///< accumulated runs only
  std::vector<AdaptedHead> heads;  ///< heads[j] = model trained through interval j (accumulated)
  TrainingLedger ledger;

  std::string name() const {
    std::string n = to_string(regime);
    if (regime == Regime::kFrozen) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "@%.2f", freeze_fraction);
      n += buf;
    }
    if (!recipe.empty()) n += ":" + recipe;
    return n;
  }

  const IntervalScore* score_for(std::size_t interval) const {
    for (const auto& s : per_interval)
      if (s.interval == interval) return &s;
    return nullptr;
  }
};

/// Mean balanced accuracy over the listed intervals that the run scored.
inline std::optional<double> aggregate_over(const RunResult& run, const std::set<std::size_t>& intervals) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& s : run.per_interval) {
    if (intervals.count(s.interval)) {
      sum += s.balanced_accuracy;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

using CheckpointLoader = std::function<std::optional<AdaptedHead>(int step)>;
using CheckpointSaver = std::function<void(const AdaptedHead&, int step)>;

struct EngineOptions {
  TrainConfig train;
  std::string recipe;
  bool warm_start = false;          ///< continue from the previous head instead of the zero-shot one
  bool append_rare_to_test = false;  ///< also score held-out rare images
  CheckpointLoader load_checkpoint;  ///< resume support; may be empty
  CheckpointSaver save_checkpoint;
};

/// Binds a benchmark to its embeddings and zero-shot head.
class StreamContext {
 public:
  StreamContext(const IntervalBenchmark& bench, const EmbeddingMatrix& store, const TextHead& head0)
      : bench_(bench), store_(store), head0_(AdaptedHead::from_text_head(head0)) {
    require_same_dim(store.dim(), head0.dim(), "embedding store vs text head");
    for (std::size_t c = 0; c < head0.labels().size(); ++c) label_index_[head0.labels()[c]] = static_cast<Eigen::Index>(c);
    head0_.provenance = {bench.camera_id, "zero_shot", -1, 0};

    std::vector<std::string> missing;
    std::set<std::string> unknown_labels;
    for (const auto& iv : bench.intervals) {
      for (const auto* list : {&iv.train_ids, &iv.test_ids, &iv.rare_ids}) {
        for (const auto& id : *list) {
          if (list != &iv.rare_ids && !store.contains(id)) missing.push_back(id);
          const auto& label = bench.label_of(id);
          if (!label_index_.count(label)) unknown_labels.insert(label);
        }
      }
    }
    if (!missing.empty()) {
      std::ostringstream msg;
      msg << "camera '" << bench.camera_id << "': " << missing.size() << " ids have no embedding:";
      for (std::size_t i = 0; i < missing.size(); ++i) msg << (i ? ", " : " ") << missing[i];
      throw ValidationError(msg.str());
    }
    if (!unknown_labels.empty()) {
      std::string msg = "camera '" + bench.camera_id + "': labels missing from the text head:";
      for (const auto& l : unknown_labels) msg += " " + l;
      throw ValidationError(msg);
    }
  }

  const IntervalBenchmark& benchmark() const { return bench_; }
  const EmbeddingMatrix& store() const { return store_; }
  const AdaptedHead& zero_shot_head() const { return head0_; }
  std::size_t num_intervals() const { return bench_.intervals.size(); }
  const std::vector<std::string>& vocabulary() const { return head0_.labels; }

  Eigen::Index label_index(const std::string& image_id) const { return label_index_.at(bench_.label_of(image_id)); }

  /// Gathers embeddings and labels; ids without an embedding are skipped.
  Dataset gather(const std::vector<std::string>& ids) const {
    Dataset d;
    for (const auto& id : ids) {
      if (store_.contains(id)) d.ids.push_back(id);
    }
    d.samples.resize(store_.dim(), static_cast<Eigen::Index>(d.ids.size()));
    for (std::size_t i = 0; i < d.ids.size(); ++i) {
      const auto row = store_.row(store_.find(d.ids[i]));
      for (std::size_t k = 0; k < row.size(); ++k) d.samples(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = row[k];
      d.labels.push_back(label_index(d.ids[i]));
    }
    return d;
  }

  std::vector<std::string> test_ids(std::size_t j, bool with_rare) const {
    auto ids = bench_.intervals.at(j).test_ids;
    if (with_rare) {
      const auto& rare = bench_.intervals.at(j).rare_ids;
      for (const auto& id : rare)
        if (store_.contains(id)) ids.push_back(id);
    }
    return ids;
  }

  /// Scores a head on interval j's test split; nullopt when the split is empty.
  std::optional<IntervalScore> score(const AdaptedHead& head, std::size_t j, bool with_rare = false) const {
    const Dataset test = gather(test_ids(j, with_rare));
    if (test.empty()) return std::nullopt;
    const auto preds = predictions_of(head, test);
    const auto ba = balanced_accuracy(preds);
    return IntervalScore{j, ba.value, per_class_by_label(ba, head.labels), head.provenance.trained_through, test.size()};
  }

 private:
  const IntervalBenchmark& bench_;
  const EmbeddingMatrix& store_;
  AdaptedHead head0_;
  std::map<std::string, Eigen::Index> label_index_;
};

namespace detail {

inline void finalize(RunResult& run) {
  double sum = 0;
  for (const auto& s : run.per_interval) sum += s.balanced_accuracy;
  run.aggregate = run.per_interval.empty() ? 0.0 : sum / static_cast<double>(run.per_interval.size());
  run.ledger.verify();
}

inline std::set<std::size_t> intervals_of(const StreamContext& ctx, const std::set<std::string>& ids) {
  std::set<std::size_t> out;
  for (const auto& iv : ctx.benchmark().intervals) {
    for (const auto* list : {&iv.train_ids, &iv.test_ids, &iv.rare_ids})
      for (const auto& id : *list)
        if (ids.count(id)) out.insert(iv.index);
  }
  return out;
}

/// Produces model_j for the accumulated protocol: trained on train(0..j),
/// validated on test(j-1). Returns the head and records its ingested ids.
inline AdaptedHead train_accumulated_step(const StreamContext& ctx, const EngineOptions& opt, std::size_t j,
                                          const AdaptedHead& previous, TrainingLedger::Entry& entry) {
  const int step = static_cast<int>(j);
  if (opt.load_checkpoint) {
    if (auto cached = opt.load_checkpoint(step)) {
      const auto split = make_validation(false, ctx.benchmark(), j);
      entry.ingested.insert(split.train_ids.begin(), split.train_ids.end());
      entry.ingested.insert(split.val_ids.begin(), split.val_ids.end());
      entry.ingested_intervals = intervals_of(ctx, entry.ingested);
      return *cached;
    }
  }
  const auto split = make_validation(false, ctx.benchmark(), j);
  const Dataset train = ctx.gather(split.train_ids);
  const Dataset val = ctx.gather(split.val_ids);
  entry.ingested.insert(train.ids.begin(), train.ids.end());
  entry.ingested.insert(val.ids.begin(), val.ids.end());
  entry.ingested_intervals = intervals_of(ctx, entry.ingested);

  AdaptedHead head;
  if (train.empty()) {
    head = previous;
  } else {
    TrainConfig cfg = opt.train;
    cfg.seed = derive_seed(opt.train.seed, j);
    const AdaptedHead& init = opt.warm_start ? previous : ctx.zero_shot_head();
    head = train_head(init, train, val, cfg).head;
    head.provenance.trained_through = step;
    head.provenance.seed = cfg.seed;
  }
  head.provenance.camera_id = ctx.benchmark().camera_id;
  head.provenance.regime = "accumulated";
  if (opt.save_checkpoint) opt.save_checkpoint(head, step);
  return head;
}

}  // namespace detail

/// Scores the untrained zero-shot head on every interval's test split.
inline RunResult run_zero_shot(const StreamContext& ctx, bool append_rare_to_test = false) {
  RunResult run;
  run.camera_id = ctx.benchmark().camera_id;
  run.regime = Regime::kZeroShot;
  TrainingLedger::Entry entry;
  for (std::size_t j = 0; j < ctx.num_intervals(); ++j) {
    if (auto s = ctx.score(ctx.zero_shot_head(), j, append_rare_to_test)) {
      entry.evaluations.emplace_back(j, ctx.test_ids(j, append_rare_to_test));
      run.per_interval.push_back(std::move(*s));
    }
  }
  run.ledger.entries.push_back(std::move(entry));
  detail::finalize(run);
  return run;
}

/// Streaming protocol: for j = 0..n-2, train on the training splits of
/// intervals 0..j and score on the test split of interval j+1. Interval 0's
/// test split is scored by the zero-shot head only and kept out of the
/// aggregate.
inline RunResult run_accumulated(const StreamContext& ctx, const EngineOptions& opt) {
  RunResult run;
  run.camera_id = ctx.benchmark().camera_id;
  run.regime = Regime::kAccumulated;
  run.recipe = opt.recipe;
  if (ctx.num_intervals() > 0) run.zero_shot_interval0 = ctx.score(ctx.zero_shot_head(), 0, opt.append_rare_to_test);

  AdaptedHead previous = ctx.zero_shot_head();
  for (std::size_t j = 0; j + 1 < ctx.num_intervals(); ++j) {
    TrainingLedger::Entry entry;
    entry.step = static_cast<int>(j);
    AdaptedHead head = detail::train_accumulated_step(ctx, opt, j, previous, entry);
    if (auto s = ctx.score(head, j + 1, opt.append_rare_to_test)) {
      entry.evaluations.emplace_back(j + 1, ctx.test_ids(j + 1, opt.append_rare_to_test));
      run.per_interval.push_back(std::move(*s));
    }
    run.ledger.entries.push_back(std::move(entry));
    run.heads.push_back(head);
    previous = std::move(head);
  }
  detail::finalize(run);
  return run;
}

/// Diagnostic upper bound: one head trained on every interval's training
/// split (two images per class held out for validation), scored on every
/// interval.
inline RunResult run_oracle(const StreamContext& ctx, const EngineOptions& opt) {
  RunResult run;
  run.camera_id = ctx.benchmark().camera_id;
  run.regime = Regime::kOracle;
  run.recipe = opt.recipe;

  TrainingLedger::Entry entry;
  entry.temporal = false;
  entry.step = static_cast<int>(ctx.num_intervals()) - 1;
  std::optional<AdaptedHead> cached;
  if (opt.load_checkpoint) cached = opt.load_checkpoint(entry.step);
  const auto split = make_validation(true, ctx.benchmark(), 0, opt.train.seed);
  const Dataset train = ctx.gather(split.train_ids);
  const Dataset val = ctx.gather(split.val_ids);
  entry.ingested.insert(train.ids.begin(), train.ids.end());
  entry.ingested.insert(val.ids.begin(), val.ids.end());

  AdaptedHead head;
  if (cached) {
    head = std::move(*cached);
  } else if (train.empty()) {
    head = ctx.zero_shot_head();
  } else {
    head = train_head(ctx.zero_shot_head(), train, val, opt.train).head;
    head.provenance.trained_through = entry.step;
  }
  head.provenance.camera_id = ctx.benchmark().camera_id;
  head.provenance.regime = "oracle";
  if (!cached && opt.save_checkpoint) opt.save_checkpoint(head, entry.step);

  for (std::size_t j = 0; j < ctx.num_intervals(); ++j) {
    if (auto s = ctx.score(head, j, opt.append_rare_to_test)) {
      entry.evaluations.emplace_back(j, ctx.test_ids(j, opt.append_rare_to_test));
      run.per_interval.push_back(std::move(*s));
    }
  }
  run.ledger.entries.push_back(std::move(entry));
  run.heads.push_back(std::move(head));
  detail::finalize(run);
  return run;
}

/// Number of accumulated updates performed before freezing.
inline std::size_t freeze_updates(double fraction, std::size_t num_intervals) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("freeze fraction must lie in [0, 1]");
  if (num_intervals < 2) return 0;
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(num_intervals - 1) + 1e-9));
}

/// Accumulated training halted after floor(fraction * (n-1)) updates; the
/// last head then scores every remaining interval. With no updates the
/// zero-shot head scores all intervals.
inline RunResult run_frozen(const StreamContext& ctx, const EngineOptions& opt, double fraction) {
  if (ctx.num_intervals() < 2) throw ValidationError("freeze study needs at least two intervals");
  RunResult run;
  run.camera_id = ctx.benchmark().camera_id;
  run.regime = Regime::kFrozen;
  run.recipe = opt.recipe;
  run.freeze_fraction = fraction;
  const std::size_t updates = freeze_updates(fraction, ctx.num_intervals());

  AdaptedHead head = ctx.zero_shot_head();
  TrainingLedger::Entry entry;
  for (std::size_t j = 0; j < updates; ++j) {
    TrainingLedger::Entry step_entry;
    step_entry.step = static_cast<int>(j);
    head = detail::train_accumulated_step(ctx, opt, j, head, step_entry);
    entry = std::move(step_entry);
    run.heads.push_back(head);
  }
  for (std::size_t j = updates; j < ctx.num_intervals(); ++j) {
    if (auto s = ctx.score(head, j, opt.append_rare_to_test)) {
      entry.evaluations.emplace_back(j, ctx.test_ids(j, opt.append_rare_to_test));
      run.per_interval.push_back(std::move(*s));
    }
  }
  run.ledger.entries.push_back(std::move(entry));
  detail::finalize(run);
  return run;
}

}  // namespace streamtrap
