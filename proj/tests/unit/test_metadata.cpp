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

#include <gtest/gtest.h>

#include <sstream>

#include "fixtures.hpp"
#include "streamtrap/metadata.hpp"

using namespace streamtrap;
using nlohmann::json;

namespace {

json image(const std::string& id, const std::string& cam, const std::string& dt, int w = 640, int h = 480) {
  return {{"id", id}, {"location", cam}, {"datetime", dt}, {"file_name", id + ".jpg"}, {"width", w}, {"height", h}};
}

json doc_with(const std::vector<json>& images, const std::vector<json>& anns, const std::vector<json>& dets) {
  return {{"images", images},
          {"annotations", anns},
          {"detections", dets},
          {"categories", json::array({{{"id", 1}, {"name", "Red Fox "}}, {{"id", 2}, {"name", "deer"}}, {{"id", 3}, {"name", "human"}}})}};
}

json ann(const std::string& id, int cat) { return {{"image_id", id}, {"category_id", cat}}; }
json det(const std::string& id, double conf, std::vector<double> box = {10, 10, 50, 40}) {
  return {{"image_id", id}, {"bbox", box}, {"conf", conf}};
}

}  // namespace

TEST(Timestamps, AcceptsCommonLayouts) {
  const auto base = testkit::at(2020, 6, 1, 12, 30, 5);
  EXPECT_EQ(parse_timestamp("2020-06-01 12:30:05"), base);
  EXPECT_EQ(parse_timestamp("2020:06:01 12:30:05"), base);
  EXPECT_EQ(parse_timestamp("2020-06-01T12:30:05Z"), base);
  EXPECT_EQ(parse_timestamp("2020-06-01T12:30:05.750"), base);
  EXPECT_EQ(parse_timestamp("2020-06-01T14:30:05+02:00"), base);
  EXPECT_FALSE(parse_timestamp("yesterday"));
  EXPECT_FALSE(parse_timestamp("2020-13-01 00:00:00"));
  EXPECT_EQ(format_timestamp(base), "2020-06-01T12:30:05Z");
}

TEST(ParseMetadata, ThreeValidImagesGiveOneSortedStream) {
  const auto doc = doc_with({image("c", "A", "2020-01-01 00:00:09"), image("a", "A", "2020-01-01 00:00:01"),
                             image("b", "A", "2020-01-01 00:00:05")},
                            {ann("a", 1), ann("b", 1), ann("c", 2)}, {det("a", 0.9), det("b", 0.9), det("c", 0.95)});
  const auto out = parse_metadata(doc);
  ASSERT_EQ(out.streams.size(), 1u);
  const auto& s = out.streams[0];
  EXPECT_EQ(s.camera_id, "A");
  ASSERT_EQ(s.records.size(), 3u);
  EXPECT_EQ(s.records[0].image_id, "a");
  EXPECT_EQ(s.records[1].image_id, "b");
  EXPECT_EQ(s.records[2].image_id, "c");
  EXPECT_EQ(s.records[0].species, "red fox");
  EXPECT_EQ(s.species_vocabulary, (std::vector<std::string>{"deer", "red fox"}));
  EXPECT_EQ(out.report.kept_images, 3u);
}

TEST(ParseMetadata, TwoSpeciesImageIsDropped) {
  const auto doc = doc_with({image("a", "A", "2020-01-01 00:00:00")}, {ann("a", 1), ann("a", 2)}, {det("a", 0.9)});
  const auto out = parse_metadata(doc);
  EXPECT_TRUE(out.streams.empty());
  EXPECT_EQ(out.report.dropped.at(drop_reason::kMultiSpecies), 1u);
}

TEST(ParseMetadata, ConfidenceMustExceedPointEight) {
  const auto doc = doc_with({image("lo", "A", "2020-01-01 00:00:00"), image("hi", "A", "2020-01-01 00:00:10"),
                             image("edge", "A", "2020-01-01 00:00:20")},
                            {ann("lo", 1), ann("hi", 1), ann("edge", 1)}, {det("lo", 0.75), det("hi", 0.85), det("edge", 0.8)});
  const auto out = parse_metadata(doc);
  ASSERT_EQ(out.streams.size(), 1u);
  ASSERT_EQ(out.streams[0].records.size(), 1u);
  EXPECT_EQ(out.streams[0].records[0].image_id, "hi");
  EXPECT_EQ(out.report.dropped.at(drop_reason::kLowConfidence), 2u);
}

TEST(ParseMetadata, DropReasonsAreCounted) {
  json no_cam = {{"id", "nc"}, {"datetime", "2020-01-01 00:00:00"}, {"width", 10}, {"height", 10}};
  const auto doc = doc_with({no_cam, image("nt", "A", "not a date"), image("nl", "A", "2020-01-01 00:00:00"),
                             image("hu", "A", "2020-01-01 00:00:00"), image("nd", "A", "2020-01-01 00:00:00"),
                             image("dg", "A", "2020-01-01 00:00:00"), image("ok", "A", "2020-01-01 00:00:00")},
                            {ann("nc", 1), ann("nt", 1), ann("hu", 3), ann("nd", 1), ann("dg", 1), ann("ok", 2)},
                            {det("nc", 0.9), det("nt", 0.9), det("hu", 0.9), det("dg", 0.9, {700, 10, 50, 40}), det("ok", 0.9)});
  const auto out = parse_metadata(doc);
  EXPECT_EQ(out.report.total_images, 7u);
  EXPECT_EQ(out.report.kept_images, 1u);
  EXPECT_EQ(out.report.dropped.at(drop_reason::kMissingCamera), 1u);
  EXPECT_EQ(out.report.dropped.at(drop_reason::kMissingTimestamp), 1u);
  EXPECT_EQ(out.report.dropped.at(drop_reason::kMissingLabel), 1u);
  EXPECT_EQ(out.report.dropped.at(drop_reason::kExcludedLabel), 1u);
  EXPECT_EQ(out.report.dropped.at(drop_reason::kNoDetection), 1u);
  EXPECT_EQ(out.report.dropped.at(drop_reason::kDegenerateBox), 1u);
}

TEST(ParseMetadata, BoxIsClampedToImage) {
  const auto doc = doc_with({image("a", "A", "2020-01-01 00:00:00", 100, 80)}, {ann("a", 1)}, {det("a", 0.9, {-10, 60, 50, 40})});
  const auto r = parse_metadata(doc).streams.at(0).records.at(0);
  EXPECT_EQ(r.bbox, (BBox{0, 60, 40, 20}));
}

TEST(ParseMetadata, HighestConfidenceAnimalDetectionWins) {
  json d1 = det("a", 0.95, {1, 1, 5, 5});
  d1["category"] = "2";  // person class in detector output
  const auto doc = doc_with({image("a", "A", "2020-01-01 00:00:00")}, {ann("a", 1)},
                            {d1, det("a", 0.85, {2, 2, 6, 6}), det("a", 0.9, {3, 3, 7, 7})});
  const auto r = parse_metadata(doc).streams.at(0).records.at(0);
  EXPECT_EQ(r.bbox, (BBox{3, 3, 7, 7}));
  EXPECT_DOUBLE_EQ(r.bbox_confidence, 0.9);
}

TEST(ParseMetadata, DuplicateIdIsValidationError) {
  const auto doc = doc_with({image("a", "A", "2020-01-01 00:00:00"), image("a", "A", "2020-01-01 00:00:01")}, {}, {});
  EXPECT_THROW(parse_metadata(doc), ValidationError);
}

TEST(ParseMetadata, MalformedTextReportsLineAndRecordContext) {
  try {
    parse_metadata_text("{\n  \"images\": [\n    {\"id\": 1,,}\n  ]\n}");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  try {
    parse_metadata(json{{"images", json::array({json::object()})}, {"annotations", json::array()},
                        {"categories", json::array()}, {"detections", json::array()}});
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("images[0]"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_metadata(json{{"images", json::array()}}), ParseError);
}

TEST(ParseMetadata, OutputIsDeterministic) {
  const auto doc = doc_with({image("b", "B", "2020-01-01 00:00:00"), image("a", "A", "2020-01-01 00:00:00")},
                            {ann("a", 1), ann("b", 2)}, {det("a", 0.9), det("b", 0.9)});
  const auto x = parse_metadata(doc), y = parse_metadata(doc);
  ASSERT_EQ(x.streams.size(), 2u);
  EXPECT_EQ(x.streams[0].camera_id, "A");
  EXPECT_EQ(stream_to_jsonl(x.streams[0]) + stream_to_jsonl(x.streams[1]),
            stream_to_jsonl(y.streams[0]) + stream_to_jsonl(y.streams[1]));
}

// Random documents: re-filtering the parsed output changes nothing, and no
// surviving record breaks a filter.
TEST(ParseMetadataProperty, FilteringIsIdempotentAndSound) {
  Rng rng(99);
  const FilterConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<json> images, anns, dets;
    const int n = 1 + static_cast<int>(rng.below(30));
    for (int i = 0; i < n; ++i) {
      const std::string id = "t" + std::to_string(i);
      images.push_back(image(id, rng.coin() ? "A" : "B", "2020-01-0" + std::to_string(1 + rng.below(9)) + " 00:00:00"));
      const int labels = static_cast<int>(rng.below(3));
      for (int k = 0; k < labels; ++k) anns.push_back(ann(id, 1 + static_cast<int>(rng.below(3))));
      if (rng.below(5) != 0) dets.push_back(det(id, rng.uniform(), {rng.uniform(-20, 650), rng.uniform(-20, 490), rng.uniform(0, 80), rng.uniform(0, 80)}));
    }
    const auto out = parse_metadata(doc_with(images, anns, dets), cfg);
    std::size_t kept = 0;
    for (const auto& s : out.streams) {
      kept += s.records.size();
      EXPECT_EQ(stream_to_jsonl(apply_record_filters(s, cfg)), stream_to_jsonl(s));
      for (const auto& r : s.records) {
        EXPECT_GT(r.bbox_confidence, 0.8);
        EXPECT_NE(r.species, "human");
        EXPECT_GE(r.bbox.x, 0);
        EXPECT_LE(r.bbox.x + r.bbox.w, r.image_width);
        EXPECT_LE(r.bbox.y + r.bbox.h, r.image_height);
      }
      for (std::size_t i = 1; i < s.records.size(); ++i) EXPECT_LE(s.records[i - 1].timestamp, s.records[i].timestamp);
    }
    std::size_t dropped = 0;
    for (const auto& [k, v] : out.report.dropped) dropped += v;
    EXPECT_EQ(kept + dropped, static_cast<std::size_t>(n));
  }
}

TEST(SynthesizeSequences, ThreeSecondRule) {
  const auto t = testkit::at(2020, 1, 1);
  CameraStream s{"A", {testkit::record("1", "A", t, "deer", ""), testkit::record("2", "A", t + std::chrono::seconds(2), "deer", ""),
                       testkit::record("3", "A", t + std::chrono::seconds(10), "deer", "")}, {"deer"}};
  for (auto& r : s.records) r.sequence_id.clear();
  const auto out = synthesize_sequences(s);
  EXPECT_EQ(out.records[0].sequence_id, out.records[1].sequence_id);
  EXPECT_NE(out.records[1].sequence_id, out.records[2].sequence_id);
  EXPECT_EQ(out.records[0].frame_index, 0u);
  EXPECT_EQ(out.records[1].frame_index, 1u);
  EXPECT_EQ(out.records[2].frame_index, 0u);
}

TEST(SynthesizeSequences, LargeGapsSplitEveryRecord) {
  const auto t = testkit::at(2020, 1, 1);
  CameraStream s{"A", {}, {}};
  for (int i = 0; i < 5; ++i) s.records.push_back(testkit::record(std::to_string(i), "A", t + std::chrono::seconds(4 * i), "deer"));
  for (auto& r : s.records) r.sequence_id.clear();
  const auto out = synthesize_sequences(s);
  std::set<std::string> ids;
  for (const auto& r : out.records) ids.insert(r.sequence_id);
  EXPECT_EQ(ids.size(), 5u);
}

TEST(SynthesizeSequences, ExistingSequencesAreKept) {
  const auto t = testkit::at(2020, 1, 1);
  CameraStream s{"A", {}, {}};
  for (int i = 0; i < 4; ++i) {
    auto r = testkit::record(std::to_string(i), "A", t + std::chrono::seconds(100 * i), "deer", "seqX");
    r.frame_index = static_cast<std::uint32_t>(i);
    s.records.push_back(r);
  }
  const auto out = synthesize_sequences(s);
  EXPECT_EQ(stream_to_jsonl(out), stream_to_jsonl(s));
  EXPECT_TRUE(synthesize_sequences(CameraStream{}).records.empty());
}

TEST(SynthesizeSequencesProperty, EveryRecordGetsExactlyOneSequence) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto s = testkit::random_stream(seed, 2, 20);
    Rng rng(seed);
    for (auto& r : s.records)
      if (rng.coin()) r.sequence_id.clear();
    const auto out = synthesize_sequences(s);
    ASSERT_EQ(out.records.size(), s.records.size());
    for (std::size_t i = 0; i < out.records.size(); ++i) {
      EXPECT_FALSE(out.records[i].sequence_id.empty());
      if (!s.records[i].sequence_id.empty()) {
        EXPECT_EQ(out.records[i].sequence_id, s.records[i].sequence_id);
      }
    }
  }
}

TEST(AdmitCamera, ThresholdsOnCountAndSpan) {
  const auto make = [](std::size_t n, int days) {
    CameraStream s{"A", {}, {}};
    const auto t = testkit::at(2020, 1, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const auto offset = std::chrono::seconds(static_cast<std::int64_t>(days) * 86400 * static_cast<std::int64_t>(i) /
                                               static_cast<std::int64_t>(n - 1));
      s.records.push_back(testkit::record(std::to_string(i), "A", t + offset, "deer"));
    }
    return s;
  };
  EXPECT_FALSE(admit_camera(make(900, 240)));
  EXPECT_FALSE(admit_camera(make(1500, 150)));
  EXPECT_TRUE(admit_camera(make(1500, 210)));
  EXPECT_FALSE(admit_camera(make(1000, 400)));  // needs more than 1000
  EXPECT_TRUE(admit_camera(make(1001, 180)));
  EXPECT_FALSE(admit_camera(CameraStream{}));
}

TEST(StreamJsonl, RoundTrips) {
  const auto s = testkit::random_stream(5, 2, 10);
  std::istringstream in(stream_to_jsonl(s));
  const auto back = stream_from_jsonl(in);
  EXPECT_EQ(stream_to_jsonl(back), stream_to_jsonl(s));
  EXPECT_EQ(back.species_vocabulary, s.species_vocabulary);
}
