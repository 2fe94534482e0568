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
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "streamtrap/errors.hpp"
#include "streamtrap/metadata.hpp"
#include "streamtrap/rng.hpp"

namespace streamtrap {

struct IntervalMember {
  std::string image_id;
  std::string sequence_id;
  std::string species;
  Timestamp timestamp{};
};

/// One chronological chunk of a camera stream, covering [start, end).
struct Interval {
  std::size_t index = 0;
  Timestamp start{};
  Timestamp end{};
  std::vector<IntervalMember> members;  ///< chronological
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::vector<std::string> rare_ids;
  std::map<std::string, std::size_t> class_histogram;
  bool usable = true;

  std::size_t size() const { return members.size(); }
};

struct SplitConfig {
  std::size_t rare_threshold = 10;  ///< classes with fewer samples are held out
  double test_fraction = 0.2;
  std::size_t min_test_quota = 2;
};

struct CropRect {
  int x = 0, y = 0, w = 0, h = 0;
  bool operator==(const CropRect&) const = default;
};

struct ImbalanceSummary {
  double top2_fraction = 0;
  std::size_t least2_count = 0;
  std::size_t total = 0;
  bool degenerate = false;  ///< fewer than two classes
};

struct BenchmarkConfig {
  std::int64_t window_days = 30;
  std::size_t min_interval_images = 200;
  SplitConfig split;
  double crop_scale = 1.5;
  std::uint64_t seed = 0;
};

struct IntervalBenchmark {
  std::string camera_id;
  std::vector<Interval> intervals;
  std::vector<std::string> vocabulary;
  std::map<std::string, CropRect> crop_specs;
  std::map<std::string, IntervalMember> records;  ///< every member, by image id
  ImbalanceSummary imbalance;

  const std::string& label_of(const std::string& image_id) const {
    const auto it = records.find(image_id);
    if (it == records.end()) throw ValidationError("benchmark has no record '" + image_id + "'");
    return it->second.species;
  }
};

inline std::map<std::string, std::size_t> histogram_of(const std::vector<IntervalMember>& members) {
  std::map<std::string, std::size_t> h;
  for (const auto& m : members) ++h[m.species];
  return h;
}

/// Groups consecutive per-window counts so each group holds at least
/// `min_images`: a short window merges into its successor and a short tail
/// merges backward into the last group. Returns inclusive window ranges.
inline std::vector<std::pair<std::size_t, std::size_t>> merge_window_counts(const std::vector<std::size_t>& counts,
                                                                            std::size_t min_images) {
  std::vector<std::pair<std::size_t, std::size_t>> groups;
  std::vector<std::size_t> sizes;
  std::size_t first = 0, pending = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    pending += counts[k];
    if (pending >= min_images) {
      groups.emplace_back(first, k);
      sizes.push_back(pending);
      first = k + 1;
      pending = 0;
    }
  }
  if (first < counts.size()) {
    if (groups.empty()) {
      groups.emplace_back(first, counts.size() - 1);
    } else {
      groups.back().second = counts.size() - 1;
    }
  }
  return groups;
}

/// Partitions a stream into fixed windows anchored at its first timestamp,
/// then merges windows below `min_images`.
inline std::vector<Interval> chunk_intervals(const CameraStream& stream,
                                             std::chrono::seconds window = std::chrono::days{30},
                                             std::size_t min_images = 200) {
  if (stream.records.empty()) throw ValidationError("camera '" + stream.camera_id + "': empty stream");
  if (window.count() <= 0) throw ConfigError("window length must be positive");

  const Timestamp origin = stream.records.front().timestamp;
  std::vector<std::size_t> window_of;
  window_of.reserve(stream.records.size());
  for (const auto& r : stream.records) {
    window_of.push_back(static_cast<std::size_t>((r.timestamp - origin) / window));
  }
  std::vector<std::size_t> counts(window_of.back() + 1, 0);
  for (auto w : window_of) ++counts[w];

  std::vector<Interval> out;
  std::size_t cursor = 0;
  for (const auto& [first, last] : merge_window_counts(counts, min_images)) {
    Interval iv;
    iv.index = out.size();
    iv.start = origin + window * static_cast<std::int64_t>(first);
    iv.end = origin + window * static_cast<std::int64_t>(last + 1);
    while (cursor < stream.records.size() && window_of[cursor] <= last) {
      const auto& r = stream.records[cursor++];
      iv.members.push_back({r.image_id, r.sequence_id, r.species, r.timestamp});
    }
    iv.class_histogram = histogram_of(iv.members);
    out.push_back(std::move(iv));
  }
  return out;
}

/// Per-class test quota: the smallest floor(fraction * count) over eligible
/// classes, never below `min_test_quota`.
inline std::size_t test_quota(const std::map<std::string, std::size_t>& eligible_counts, const SplitConfig& config) {
  std::size_t quota = std::numeric_limits<std::size_t>::max();
  for (const auto& [label, count] : eligible_counts) {
    quota = std::min(quota, static_cast<std::size_t>(std::floor(config.test_fraction * static_cast<double>(count))));
  }
  return std::max(quota, config.min_test_quota);
}

/// Splits an interval into train/test/rare. Classes under the rare threshold
/// are held out; the rest are split at sequence granularity, packing the
/// smallest sequences of each class into test until the shared quota is met.
/// A class always keeps at least one training sequence.
inline Interval split_interval(Interval interval, std::uint64_t seed, const SplitConfig& config = {}) {
  interval.class_histogram = histogram_of(interval.members);
  interval.train_ids.clear();
  interval.test_ids.clear();
  interval.rare_ids.clear();

  std::map<std::string, std::size_t> eligible;
  for (const auto& [label, count] : interval.class_histogram) {
    if (count >= config.rare_threshold) eligible.emplace(label, count);
  }
  if (eligible.empty()) {
    throw ValidationError("interval " + std::to_string(interval.index) + ": no class with at least " +
                          std::to_string(config.rare_threshold) + " samples");
  }
  const std::size_t quota = test_quota(eligible, config);

  // Sequences over eligible members only; rare members never enter train/test.
  std::map<std::string, std::vector<std::size_t>> sequences;
  for (std::size_t i = 0; i < interval.members.size(); ++i) {
    const auto& m = interval.members[i];
    if (eligible.count(m.species)) sequences[m.sequence_id.empty() ? "~" + m.image_id : m.sequence_id].push_back(i);
  }

  struct Sequence {
    std::string id;
    std::size_t size;
    std::map<std::string, std::size_t> labels;
  };
  std::map<std::string, std::vector<Sequence>> owned;  // owner class -> sequences
  for (const auto& [seq_id, idx] : sequences) {
    Sequence s{seq_id, idx.size(), {}};
    for (auto i : idx) ++s.labels[interval.members[i].species];
    const auto owner = std::max_element(s.labels.begin(), s.labels.end(),
                                        [](const auto& a, const auto& b) { return a.second < b.second; });
    owned[owner->first].push_back(std::move(s));
  }

  std::set<std::string> test_sequences;
  std::map<std::string, std::size_t> test_count;
  for (auto& [label, seqs] : owned) {
    Rng rng(derive_seed(seed, interval.index, fnv1a(label)));
    rng.shuffle(seqs);
    std::stable_sort(seqs.begin(), seqs.end(), [](const Sequence& a, const Sequence& b) { return a.size < b.size; });
    std::size_t remaining_train = 0;
    for (const auto& s : seqs) remaining_train += s.labels.at(label);
    for (const auto& s : seqs) {
      if (test_count[label] >= quota) break;
      const std::size_t own = s.labels.at(label);
      if (own >= remaining_train) break;
      test_sequences.insert(s.id);
      remaining_train -= own;
      for (const auto& [l, n] : s.labels) test_count[l] += n;
    }
  }

  for (const auto& m : interval.members) {
    if (!eligible.count(m.species)) {
      interval.rare_ids.push_back(m.image_id);
    } else if (test_sequences.count(m.sequence_id.empty() ? "~" + m.image_id : m.sequence_id)) {
      interval.test_ids.push_back(m.image_id);
    } else {
      interval.train_ids.push_back(m.image_id);
    }
  }
  interval.usable = true;
  return interval;
}

/// Enlarges the detection box by `scale` about its center and clamps it to
/// the image. The rectangle covers pixel columns floor(x0)..floor(x1) and
/// rows floor(y0)..floor(y1) inclusive.
inline CropRect crop_spec(const ImageRecord& record, double scale = 1.5) {
  const BBox& b = record.bbox;
  if (!(b.w > 0) || !(b.h > 0)) throw ValidationError("image '" + record.image_id + "': degenerate bounding box");
  const double cx = b.x + b.w / 2.0;
  const double cy = b.y + b.h / 2.0;
  const double half_w = b.w * scale / 2.0;
  const double half_h = b.h * scale / 2.0;
  const auto lo = [](double v, int limit) { return static_cast<int>(std::clamp(std::floor(v), 0.0, double(limit - 1))); };
  const int x0 = lo(cx - half_w, record.image_width);
  const int y0 = lo(cy - half_h, record.image_height);
  const int x1 = lo(cx + half_w, record.image_width);
  const int y1 = lo(cy + half_h, record.image_height);
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

inline ImbalanceSummary imbalance_from_counts(std::vector<std::size_t> counts) {
  ImbalanceSummary s;
  std::sort(counts.begin(), counts.end(), std::greater<>());
  for (auto c : counts) s.total += c;
  s.degenerate = counts.size() < 2;
  if (counts.empty() || s.total == 0) return s;
  const std::size_t k = std::min<std::size_t>(2, counts.size());
  std::size_t top = 0, least = 0;
  for (std::size_t i = 0; i < k; ++i) {
    top += counts[i];
    least += counts[counts.size() - 1 - i];
  }
  s.top2_fraction = static_cast<double>(top) / static_cast<double>(s.total);
  s.least2_count = least;
  return s;
}

/// Camera-level imbalance pooled over all intervals' histograms.
inline ImbalanceSummary imbalance_summary(const std::vector<Interval>& intervals) {
  std::map<std::string, std::size_t> pooled;
  for (const auto& iv : intervals) {
    for (const auto& [label, n] : iv.class_histogram) pooled[label] += n;
  }
  std::vector<std::size_t> counts;
  for (const auto& [label, n] : pooled) counts.push_back(n);
  return imbalance_from_counts(std::move(counts));
}

/// Sequence ids present in both the train and the test split.
inline std::vector<std::string> find_leaks(const Interval& interval) {
  std::map<std::string, std::string> seq_of;
  for (const auto& m : interval.members) seq_of[m.image_id] = m.sequence_id.empty() ? "~" + m.image_id : m.sequence_id;
  std::set<std::string> train_seqs, leaks;
  for (const auto& id : interval.train_ids) train_seqs.insert(seq_of.at(id));
  for (const auto& id : interval.test_ids) {
    if (train_seqs.count(seq_of.at(id))) leaks.insert(seq_of.at(id));
  }
  return {leaks.begin(), leaks.end()};
}

/// Checks the structural invariants of a benchmark; throws on violation.
inline void verify_benchmark(const IntervalBenchmark& bench, const SplitConfig& split = {}) {
  const auto fail = [&](const std::string& msg) { throw ValidationError("camera '" + bench.camera_id + "': " + msg); };
  for (std::size_t j = 0; j < bench.intervals.size(); ++j) {
    const auto& iv = bench.intervals[j];
    const std::string where = "interval " + std::to_string(j) + ": ";
    if (iv.index != j) fail(where + "index out of order");
    if (j > 0 && iv.start != bench.intervals[j - 1].end) fail(where + "does not abut its predecessor");
    std::set<std::string> seen;
    for (const auto* list : {&iv.train_ids, &iv.test_ids, &iv.rare_ids}) {
      for (const auto& id : *list) {
        if (!seen.insert(id).second) fail(where + "image '" + id + "' appears in two splits");
      }
    }
    std::size_t hist_total = 0;
    for (const auto& [label, n] : iv.class_histogram) hist_total += n;
    if (hist_total != seen.size() || hist_total != iv.members.size()) fail(where + "histogram does not match splits");
    if (!find_leaks(iv).empty()) fail(where + "sequence spans train and test");
    for (const auto* list : {&iv.train_ids, &iv.test_ids}) {
      for (const auto& id : *list) {
        if (iv.class_histogram.at(bench.label_of(id)) < split.rare_threshold) fail(where + "rare class in train/test");
      }
    }
  }
}

/// Chunks, splits and crops one admitted camera stream. Intervals with no
/// eligible class are kept with all members held out and `usable = false`.
inline IntervalBenchmark build_benchmark(const CameraStream& stream, const BenchmarkConfig& config = {}) {
  IntervalBenchmark bench;
  bench.camera_id = stream.camera_id;
  bench.vocabulary = stream.species_vocabulary;
  auto intervals = chunk_intervals(stream, std::chrono::days{config.window_days}, config.min_interval_images);
  for (auto& iv : intervals) {
    try {
      iv = split_interval(iv, config.seed, config.split);
    } catch (const ValidationError&) {
      iv.usable = false;
      iv.train_ids.clear();
      iv.test_ids.clear();
      iv.rare_ids.clear();
      for (const auto& m : iv.members) iv.rare_ids.push_back(m.image_id);
    }
    for (const auto& m : iv.members) bench.records.emplace(m.image_id, m);
  }
  bench.intervals = std::move(intervals);
  for (const auto& r : stream.records) bench.crop_specs.emplace(r.image_id, crop_spec(r, config.crop_scale));
  bench.imbalance = imbalance_summary(bench.intervals);
  return bench;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const ImbalanceSummary& s) {
  return {{"top2_fraction", s.top2_fraction}, {"least2_count", s.least2_count}, {"total", s.total},
          {"degenerate", s.degenerate}};
}

inline nlohmann::json to_json(const IntervalBenchmark& bench) {
  nlohmann::json intervals = nlohmann::json::array();
  for (const auto& iv : bench.intervals) {
    intervals.push_back({{"index", iv.index},
                         {"start", format_timestamp(iv.start)},
                         {"end", format_timestamp(iv.end)},
                         {"usable", iv.usable},
                         {"histogram", iv.class_histogram},
                         {"train_ids", iv.train_ids},
                         {"test_ids", iv.test_ids},
                         {"rare_ids", iv.rare_ids}});
  }
  nlohmann::json records = nlohmann::json::object();
  for (const auto& [id, m] : bench.records) {
    records[id] = {{"species", m.species}, {"sequence_id", m.sequence_id}, {"timestamp", format_timestamp(m.timestamp)}};
  }
  nlohmann::json crops = nlohmann::json::object();
  for (const auto& [id, c] : bench.crop_specs) crops[id] = {c.x, c.y, c.w, c.h};
  return {{"camera_id", bench.camera_id}, {"vocabulary", bench.vocabulary}, {"intervals", intervals},
          {"records", records},           {"crop_specs", crops},            {"imbalance", to_json(bench.imbalance)}};
}

inline IntervalBenchmark benchmark_from_json(const nlohmann::json& j) {
  IntervalBenchmark bench;
  const auto ts = [](const nlohmann::json& v) {
    auto t = parse_timestamp(v.get<std::string>());
    if (!t) throw ParseError("benchmark: bad timestamp " + v.dump());
    return *t;
  };
  try {
    bench.camera_id = j.at("camera_id").get<std::string>();
    bench.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    for (const auto& [id, r] : j.at("records").items()) {
      bench.records.emplace(id, IntervalMember{id, r.at("sequence_id").get<std::string>(),
                                               r.at("species").get<std::string>(), ts(r.at("timestamp"))});
    }
    for (const auto& [id, c] : j.at("crop_specs").items()) {
      bench.crop_specs.emplace(id, CropRect{c.at(0).get<int>(), c.at(1).get<int>(), c.at(2).get<int>(), c.at(3).get<int>()});
    }
    for (const auto& jv : j.at("intervals")) {
      Interval iv;
      iv.index = jv.at("index").get<std::size_t>();
      iv.start = ts(jv.at("start"));
      iv.end = ts(jv.at("end"));
      iv.usable = jv.at("usable").get<bool>();
      iv.class_histogram = jv.at("histogram").get<std::map<std::string, std::size_t>>();
      iv.train_ids = jv.at("train_ids").get<std::vector<std::string>>();
      iv.test_ids = jv.at("test_ids").get<std::vector<std::string>>();
      iv.rare_ids = jv.at("rare_ids").get<std::vector<std::string>>();
      for (const auto* list : {&iv.train_ids, &iv.test_ids, &iv.rare_ids}) {
        for (const auto& id : *list) {
          const auto it = bench.records.find(id);
          if (it == bench.records.end()) throw ParseError("benchmark: interval lists unknown image '" + id + "'");
          iv.members.push_back(it->second);
        }
      }
      std::sort(iv.members.begin(), iv.members.end(), [](const IntervalMember& a, const IntervalMember& b) {
        return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.image_id < b.image_id;
      });
      bench.intervals.push_back(std::move(iv));
    }
    const auto& im = j.at("imbalance");
    bench.imbalance = {im.at("top2_fraction").get<double>(), im.at("least2_count").get<std::size_t>(),
                       im.at("total").get<std::size_t>(), im.at("degenerate").get<bool>()};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("benchmark: ") + e.what());
  }
  return bench;
}

}  // namespace streamtrap
