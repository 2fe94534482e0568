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

// Small builders shared by the unit and acceptance tests.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>
#include <set>
#include <vector>

#include <unistd.h>

#include "streamtrap.hpp"

namespace testkit {

using namespace streamtrap;

inline Timestamp at(int year, unsigned month, unsigned day, int hour = 0, int minute = 0, int second = 0) {
  using namespace std::chrono;
  return Timestamp{sys_days{std::chrono::year{year} / month / day}} + hours{hour} + minutes{minute} + seconds{second};
}

inline ImageRecord record(const std::string& id, const std::string& camera, Timestamp t, const std::string& species,
                          const std::string& sequence = "") {
  ImageRecord r;
  r.image_id = id;
  r.camera_id = camera;
  r.file_name = id + ".jpg";
  r.timestamp = t;
  r.sequence_id = sequence.empty() ? id : sequence;
  r.species = species;
  r.bbox = {10, 10, 20, 20};
  r.bbox_confidence = 0.9;
  r.image_width = 640;
  r.image_height = 480;
  return r;
}

/// A random camera stream: bursts of 1-5 frames with random species drawn
/// from a skewed distribution, spread over `windows` 30-day windows.
inline CameraStream random_stream(std::uint64_t seed, std::size_t windows = 3, std::size_t bursts_per_window = 40) {
  Rng rng(seed);
  CameraStream s;
  s.camera_id = "rnd" + std::to_string(seed);
  const std::vector<std::string> labels{"a", "b", "c", "d", "e", "f"};
  const std::size_t num_labels = 2 + rng.below(labels.size() - 1);
  std::size_t img = 0, seq = 0;
  const Timestamp origin = at(2021, 3, 1);
  for (std::size_t w = 0; w < windows; ++w) {
    const std::size_t bursts = bursts_per_window / 2 + rng.below(bursts_per_window);
    for (std::size_t b = 0; b < bursts; ++b) {
      // Squaring a uniform index skews toward the first labels.
      const double u = rng.uniform();
      const std::string species = labels[static_cast<std::size_t>(u * u * static_cast<double>(num_labels))];
      const auto offset = std::chrono::seconds(static_cast<std::int64_t>(w) * 30 * 86400 +
                                               static_cast<std::int64_t>(rng.below(29 * 86400)));
      const std::string seq_id = "q" + std::to_string(seq++);
      const std::size_t frames = 1 + rng.below(5);
      for (std::size_t f = 0; f < frames; ++f) {
        auto r = record("i" + std::to_string(img++), s.camera_id, origin + offset + std::chrono::seconds(f), species, seq_id);
        r.frame_index = static_cast<std::uint32_t>(f);
        s.records.push_back(r);
      }
    }
  }
  std::sort(s.records.begin(), s.records.end(), [](const ImageRecord& a, const ImageRecord& b) {
    return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.image_id < b.image_id;
  });
  std::set<std::string> vocab;
  for (const auto& r : s.records) vocab.insert(r.species);
  s.species_vocabulary.assign(vocab.begin(), vocab.end());
  return s;
}

/// Train config used for synthetic-stream experiments: the default schedule
/// shape with a step size suited to a head on unit-norm embeddings.
inline TrainConfig synthetic_train_config() {
  TrainConfig cfg;
  cfg.max_lr = 1e-2;
  cfg.min_lr = 1e-2 / 60.0;
  return cfg;
}

/// Benchmarks, store and head for a synthetic dataset, built end to end.
struct SyntheticBench {
  SyntheticDataset data;
  std::vector<IntervalBenchmark> benchmarks;
};

inline SyntheticBench synthetic_bench(const SyntheticConfig& cfg, BenchmarkConfig bc = {}) {
  SyntheticBench out;
  out.data = generate_synthetic(cfg);
  bc.seed = cfg.seed;
  for (const auto& s : out.data.streams) out.benchmarks.push_back(build_benchmark(s, bc));
  return out;
}

/// Fresh directory removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("streamtrap_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace testkit
