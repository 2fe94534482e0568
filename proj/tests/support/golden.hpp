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

// Hand-derived golden fixture: build it end to end and list every place the
// artifacts differ from the expected document.

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "streamtrap.hpp"

namespace golden {

using namespace streamtrap;
namespace fs = std::filesystem;

inline nlohmann::json load(const fs::path& p) { return read_json_file(p.string()); }

/// Config for the fixture with artifacts under `out_dir`.
inline ExperimentConfig config(const fs::path& fixture_dir, const fs::path& out_dir) {
  nlohmann::json paths{{"metadata_path", (fixture_dir / "golden_metadata.json").string()},
                       {"output_dir", out_dir.string()}};
  return resolve_config({load(fixture_dir / "golden_config.json"), paths});
}

inline std::map<std::string, std::size_t> label_counts(const IntervalBenchmark& b, const std::vector<std::string>& ids) {
  std::map<std::string, std::size_t> out;
  for (const auto& id : ids) ++out[b.label_of(id)];
  return out;
}

/// Compares a finished build against golden_expected.json.
inline std::vector<std::string> mismatches(const ExperimentConfig& cfg, const BuildOutput& built,
                                           const fs::path& fixture_dir) {
  std::vector<std::string> bad;
  const auto expect = [&](bool ok, const std::string& what) {
    if (!ok) bad.push_back(what);
  };
  const nlohmann::json want = load(fixture_dir / "golden_expected.json");

  const auto& wr = want.at("drop_report");
  const nlohmann::json got_report = load(built.dir / "drop_report.json");
  for (const char* key : {"total_images", "kept_images", "dropped", "excluded_cameras", "cameras"})
    expect(got_report.at(key) == wr.at(key), std::string("drop_report.") + key + ": got " + got_report.at(key).dump());
  expect(got_report.at("config_hash") == config_hash(cfg), "drop_report lacks the config hash");

  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(built.dir / "benchmarks")) files += e.path().extension() == ".json";
  expect(files == want.at("cameras").size(), "benchmark files: " + std::to_string(files));

  std::map<std::string, IntervalBenchmark> benches;
  for (auto& b : load_benchmarks(cfg)) benches[b.camera_id] = std::move(b);

  for (const auto& [cam, w] : want.at("cameras").items()) {
    const auto it = benches.find(cam);
    if (it == benches.end()) {
      bad.push_back(cam + ": no benchmark");
      continue;
    }
    const IntervalBenchmark& b = it->second;
    expect(b.vocabulary == w.at("vocabulary").get<std::vector<std::string>>(), cam + ": vocabulary");
    const auto& wi = w.at("imbalance");
    const double top2 = wi.at("top2_fraction_num").get<double>() / wi.at("total").get<double>();
    expect(std::abs(b.imbalance.top2_fraction - top2) < 1e-12, cam + ": top2 fraction " + std::to_string(b.imbalance.top2_fraction));
    expect(b.imbalance.total == wi.at("total").get<std::size_t>(), cam + ": imbalance total");
    expect(b.imbalance.least2_count == wi.at("least2_count").get<std::size_t>(), cam + ": least2 count");

    const auto& wivs = w.at("intervals");
    if (b.intervals.size() != wivs.size()) {
      bad.push_back(cam + ": " + std::to_string(b.intervals.size()) + " intervals");
      continue;
    }
    for (std::size_t j = 0; j < wivs.size(); ++j) {
      const auto& iv = b.intervals[j];
      const auto& wj = wivs[j];
      const std::string at = cam + "[" + std::to_string(j) + "]";
      expect(format_timestamp(iv.start) == wj.at("start"), at + ": start " + format_timestamp(iv.start));
      expect(format_timestamp(iv.end) == wj.at("end"), at + ": end " + format_timestamp(iv.end));
      expect(nlohmann::json(iv.class_histogram) == wj.at("histogram"), at + ": histogram");
      expect(nlohmann::json(label_counts(b, iv.train_ids)) == wj.at("train"), at + ": train counts");
      expect(nlohmann::json(label_counts(b, iv.test_ids)) == wj.at("test"), at + ": test counts");
      auto rare = iv.rare_ids;
      std::sort(rare.begin(), rare.end());
      expect(nlohmann::json(rare) == wj.at("rare_ids"), at + ": rare ids " + nlohmann::json(rare).dump());
      expect(iv.usable, at + ": unusable");

      // Whole sequences land on one side of the split.
      std::map<std::string, std::set<int>> side;
      for (const auto& id : iv.train_ids) side[b.records.at(id).sequence_id].insert(0);
      for (const auto& id : iv.test_ids) side[b.records.at(id).sequence_id].insert(1);
      for (const auto& [seq, s] : side) expect(s.size() == 1, at + ": sequence " + seq + " straddles the split");
    }

    if (w.contains("crops")) {
      for (const auto& [id, box] : w.at("crops").items()) {
        const auto c = b.crop_specs.find(id);
        if (c == b.crop_specs.end()) {
          bad.push_back(cam + ": no crop for " + id);
          continue;
        }
        const std::vector<int> got{c->second.x, c->second.y, c->second.w, c->second.h};
        expect(nlohmann::json(got) == box, cam + ": crop " + id + " " + nlohmann::json(got).dump());
      }
    }
    if (w.contains("sequences")) {
      for (const auto& [a, other] : w.at("sequences").items()) {
        const auto ra = b.records.find(a), rb = b.records.find(other.get<std::string>());
        expect(ra != b.records.end() && rb != b.records.end() && ra->second.sequence_id == rb->second.sequence_id,
               cam + ": " + a + " should share a sequence with " + other.get<std::string>());
      }
    }
    if (w.contains("distinct_lynx_sequences")) {
      std::set<std::string> seqs;
      for (const auto& [id, m] : b.records)
        if (m.species == "lynx") seqs.insert(m.sequence_id);
      expect(seqs.size() == w.at("distinct_lynx_sequences").get<std::size_t>(),
             cam + ": " + std::to_string(seqs.size()) + " lynx sequences");
    }
  }
  return bad;
}

}  // namespace golden
