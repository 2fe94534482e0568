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
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "streamtrap/errors.hpp"

namespace streamtrap {

using Timestamp = std::chrono::sys_seconds;

// ---------------------------------------------------------------------------
// Timestamps
// ---------------------------------------------------------------------------

namespace detail {

inline bool read_int(std::string_view s, std::size_t& pos, std::size_t digits, int& out) {
  if (pos + digits > s.size()) return false;
  const auto* first = s.data() + pos;
  auto [ptr, ec] = std::from_chars(first, first + digits, out);
  if (ec != std::errc{} || ptr != first + digits) return false;
  pos += digits;
  return true;
}

inline bool expect(std::string_view s, std::size_t& pos, std::string_view allowed) {
  if (pos >= s.size() || allowed.find(s[pos]) == std::string_view::npos) return false;
  ++pos;
  return true;
}

}  // namespace detail

/// Parses `YYYY-MM-DD HH:MM:SS` and its common variants: a `T` separator,
/// EXIF-style `YYYY:MM:DD`, fractional seconds (truncated), and a trailing
/// `Z` or `+HH:MM` / `-HHMM` offset. Values without an offset are UTC.
inline std::optional<Timestamp> parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);

  std::size_t pos = 0;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  if (!detail::read_int(text, pos, 4, y) || !detail::expect(text, pos, "-:/") ||
      !detail::read_int(text, pos, 2, mo) || !detail::expect(text, pos, "-:/") ||
      !detail::read_int(text, pos, 2, d)) {
    return std::nullopt;
  }
  if (pos < text.size()) {
    if (!detail::expect(text, pos, "T ") || !detail::read_int(text, pos, 2, h) ||
        !detail::expect(text, pos, ":") || !detail::read_int(text, pos, 2, mi) ||
        !detail::expect(text, pos, ":") || !detail::read_int(text, pos, 2, sec)) {
      return std::nullopt;
    }
  }
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
  }
  int offset_minutes = 0;
  if (pos < text.size()) {
    if (text[pos] == 'Z' || text[pos] == 'z') {
      ++pos;
    } else if (text[pos] == '+' || text[pos] == '-') {
      const int sign = text[pos] == '-' ? -1 : 1;
      ++pos;
      int oh = 0, om = 0;
      if (!detail::read_int(text, pos, 2, oh)) return std::nullopt;
      if (pos < text.size() && text[pos] == ':') ++pos;
      if (pos < text.size() && !detail::read_int(text, pos, 2, om)) return std::nullopt;
      if (oh > 23 || om > 59) return std::nullopt;
      offset_minutes = sign * (oh * 60 + om);
    }
  }
  if (pos != text.size()) return std::nullopt;
  if (h > 23 || mi > 59 || sec > 60) return std::nullopt;

  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return Timestamp{sys_days{ymd}} + hours{h} + minutes{mi} + seconds{sec} - minutes{offset_minutes};
}

/// Formats as `YYYY-MM-DDTHH:MM:SSZ`.
inline std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const auto day_point = floor<days>(t);
  const year_month_day ymd{day_point};
  const hh_mm_ss hms{t - day_point};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

// ---------------------------------------------------------------------------
// Records and streams
// ---------------------------------------------------------------------------

/// Lowercase, whitespace-trimmed species label.
inline std::string normalize_label(std::string_view label) {
  while (!label.empty() && std::isspace(static_cast<unsigned char>(label.front()))) label.remove_prefix(1);
  while (!label.empty() && std::isspace(static_cast<unsigned char>(label.back()))) label.remove_suffix(1);
  std::string out(label);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

/// Pixel-space box: origin and extent.
struct BBox {
  double x = 0, y = 0, w = 0, h = 0;
  bool operator==(const BBox&) const = default;
};

struct ImageRecord {
  std::string image_id;
  std::string camera_id;
  std::string file_name;
  Timestamp timestamp{};
  std::string sequence_id;  ///< empty until assigned by metadata or synthesize_sequences()
  std::uint32_t frame_index = 0;
  std::string species;
  BBox bbox;
  double bbox_confidence = 0;
  int image_width = 0;
  int image_height = 0;

  bool operator==(const ImageRecord&) const = default;
};

struct CameraStream {
  std::string camera_id;
  std::vector<ImageRecord> records;  ///< sorted by (timestamp, image_id)
  std::vector<std::string> species_vocabulary;

  bool operator==(const CameraStream&) const = default;
};

inline void sort_chronologically(std::vector<ImageRecord>& records) {
  std::sort(records.begin(), records.end(), [](const ImageRecord& a, const ImageRecord& b) {
    return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.image_id < b.image_id;
  });
}

inline std::vector<std::string> vocabulary_of(const std::vector<ImageRecord>& records) {
  std::set<std::string> labels;
  for (const auto& r : records) labels.insert(r.species);
  return {labels.begin(), labels.end()};
}

struct FilterConfig {
  double min_confidence = 0.8;  ///< detections must be strictly above
  bool single_species = true;
  std::vector<std::string> excluded_labels{"human", "person", "vehicle", "car", "empty"};
};

struct AdmissionConfig {
  std::size_t min_images = 1000;  ///< camera needs strictly more images
  std::int64_t min_span_days = 180;
};

/// Counts of dropped records per reason, plus cameras excluded at admission.
struct DropReport {
  std::size_t total_images = 0;
  std::size_t kept_images = 0;
  std::map<std::string, std::size_t> dropped;
  std::map<std::string, std::string> excluded_cameras;
  std::map<std::string, std::vector<std::size_t>> unusable_intervals;

  void drop(const std::string& reason) { ++dropped[reason]; }
};

namespace drop_reason {
inline constexpr const char* kMissingCamera = "missing_camera";
inline constexpr const char* kMissingTimestamp = "missing_timestamp";
inline constexpr const char* kMissingLabel = "missing_label";
inline constexpr const char* kExcludedLabel = "excluded_label";
inline constexpr const char* kMultiSpecies = "multi_species";
inline constexpr const char* kMissingImageSize = "missing_image_size";
inline constexpr const char* kNoDetection = "no_detection";
inline constexpr const char* kLowConfidence = "low_confidence";
inline constexpr const char* kDegenerateBox = "degenerate_box";
}  // namespace drop_reason

struct ParsedMetadata {
  std::vector<CameraStream> streams;  ///< sorted by camera_id
  DropReport report;
};

namespace detail {

inline std::string id_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  return {};
}

inline std::string record_context(std::string_view array, std::size_t index) {
  return std::string(array) + "[" + std::to_string(index) + "]";
}

inline const nlohmann::json& require_array(const nlohmann::json& doc, const char* key) {
  if (!doc.contains(key) || !doc.at(key).is_array()) {
    throw ParseError(std::string("document: missing '") + key + "' array");
  }
  return doc.at(key);
}

inline bool is_excluded(const std::string& label, const FilterConfig& config) {
  return std::find(config.excluded_labels.begin(), config.excluded_labels.end(), label) !=
         config.excluded_labels.end();
}

/// Clamps a box to the image; returns false when nothing is left.
inline bool clamp_box(BBox& box, int width, int height) {
  const double x0 = std::clamp(box.x, 0.0, static_cast<double>(width));
  const double y0 = std::clamp(box.y, 0.0, static_cast<double>(height));
  const double x1 = std::clamp(box.x + box.w, 0.0, static_cast<double>(width));
  const double y1 = std::clamp(box.y + box.h, 0.0, static_cast<double>(height));
  box = {x0, y0, x1 - x0, y1 - y0};
  return box.w > 0 && box.h > 0;
}

inline bool is_animal_detection(const nlohmann::json& det) {
  if (!det.contains("category")) return true;
  const auto& c = det.at("category");
  const std::string s = c.is_string() ? normalize_label(c.get<std::string>()) : c.dump();
  return s == "1" || s == "animal";
}

}  // namespace detail

/// Builds per-camera chronological streams from a COCO camera-trap style
/// document, applying the image-level filters. Dropped records are counted
/// per reason in the returned report.
inline ParsedMetadata parse_metadata(const nlohmann::json& doc, const FilterConfig& config = {}) {
  using detail::record_context;
  if (!doc.is_object()) throw ParseError("document: top level must be an object");
  const auto& images = detail::require_array(doc, "images");
  const auto& annotations = detail::require_array(doc, "annotations");
  const auto& categories = detail::require_array(doc, "categories");
  const auto& detections = detail::require_array(doc, "detections");

  std::map<std::string, std::string> category_names;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    const auto& c = categories[i];
    if (!c.is_object() || !c.contains("id") || !c.contains("name") || !c.at("name").is_string()) {
      throw ParseError(record_context("categories", i) + ": expected {id, name}");
    }
    category_names[detail::id_string(c.at("id"))] = normalize_label(c.at("name").get<std::string>());
  }

  std::map<std::string, std::vector<std::string>> labels_by_image;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& a = annotations[i];
    if (!a.is_object() || !a.contains("image_id")) {
      throw ParseError(record_context("annotations", i) + ": missing image_id");
    }
    const char* key = a.contains("category_id") ? "category_id" : "category";
    if (!a.contains(key)) throw ParseError(record_context("annotations", i) + ": missing category");
    const auto cat = category_names.find(detail::id_string(a.at(key)));
    if (cat == category_names.end()) {
      throw ParseError(record_context("annotations", i) + ": unknown category " + a.at(key).dump());
    }
    labels_by_image[detail::id_string(a.at("image_id"))].push_back(cat->second);
  }

  struct Detection {
    BBox box;
    double conf;
  };
  std::map<std::string, Detection> best_detection;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const auto& d = detections[i];
    if (!d.is_object() || !d.contains("image_id") || !d.contains("bbox") || !d.contains("conf")) {
      throw ParseError(record_context("detections", i) + ": expected {image_id, bbox, conf}");
    }
    const auto& b = d.at("bbox");
    if (!b.is_array() || b.size() != 4 || !std::all_of(b.begin(), b.end(), [](auto& v) { return v.is_number(); })) {
      throw ParseError(record_context("detections", i) + ": bbox must be [x, y, w, h]");
    }
    if (!d.at("conf").is_number()) throw ParseError(record_context("detections", i) + ": conf must be a number");
    const double conf = d.at("conf").get<double>();
    if (!(conf >= 0.0 && conf <= 1.0)) {
      throw ValidationError(record_context("detections", i) + ": conf outside [0, 1]");
    }
    if (!detail::is_animal_detection(d)) continue;
    const std::string image_id = detail::id_string(d.at("image_id"));
    Detection det{{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()}, conf};
    auto it = best_detection.find(image_id);
    if (it == best_detection.end() || conf > it->second.conf) best_detection[image_id] = det;
  }

  ParsedMetadata out;
  std::set<std::string> seen_ids;
  std::map<std::string, std::vector<ImageRecord>> by_camera;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    if (!img.is_object() || !img.contains("id")) throw ParseError(record_context("images", i) + ": missing id");
    const std::string image_id = detail::id_string(img.at("id"));
    if (image_id.empty()) throw ParseError(record_context("images", i) + ": id must be a string or integer");
    if (!seen_ids.insert(image_id).second) {
      throw ValidationError(record_context("images", i) + ": duplicate image id '" + image_id + "'");
    }
    ++out.report.total_images;

    ImageRecord rec;
    rec.image_id = image_id;
    if (img.contains("file_name") && img.at("file_name").is_string()) rec.file_name = img.at("file_name");

    const char* camera_key = img.contains("location") ? "location" : "camera_id";
    if (!img.contains(camera_key) || detail::id_string(img.at(camera_key)).empty()) {
      out.report.drop(drop_reason::kMissingCamera);
      continue;
    }
    rec.camera_id = detail::id_string(img.at(camera_key));

    std::optional<Timestamp> ts;
    if (img.contains("datetime") && img.at("datetime").is_string()) {
      ts = parse_timestamp(img.at("datetime").get<std::string>());
    }
    if (!ts) {
      out.report.drop(drop_reason::kMissingTimestamp);
      continue;
    }
    rec.timestamp = *ts;

    const auto labels_it = labels_by_image.find(image_id);
    if (labels_it == labels_by_image.end() || labels_it->second.empty()) {
      out.report.drop(drop_reason::kMissingLabel);
      continue;
    }
    const std::set<std::string> labels(labels_it->second.begin(), labels_it->second.end());
    if (std::any_of(labels.begin(), labels.end(), [&](const auto& l) { return detail::is_excluded(l, config); })) {
      out.report.drop(drop_reason::kExcludedLabel);
      continue;
    }
    if (labels.size() > 1 && config.single_species) {
      out.report.drop(drop_reason::kMultiSpecies);
      continue;
    }
    rec.species = *labels.begin();
    if (rec.species.empty()) {
      out.report.drop(drop_reason::kMissingLabel);
      continue;
    }

    if (!img.contains("width") || !img.contains("height") || !img.at("width").is_number_integer() ||
        !img.at("height").is_number_integer() || img.at("width").get<int>() <= 0 ||
        img.at("height").get<int>() <= 0) {
      out.report.drop(drop_reason::kMissingImageSize);
      continue;
    }
    rec.image_width = img.at("width").get<int>();
    rec.image_height = img.at("height").get<int>();

    const auto det = best_detection.find(image_id);
    if (det == best_detection.end()) {
      out.report.drop(drop_reason::kNoDetection);
      continue;
    }
    if (!(det->second.conf > config.min_confidence)) {
      out.report.drop(drop_reason::kLowConfidence);
      continue;
    }
    rec.bbox = det->second.box;
    rec.bbox_confidence = det->second.conf;
    if (!detail::clamp_box(rec.bbox, rec.image_width, rec.image_height)) {
      out.report.drop(drop_reason::kDegenerateBox);
      continue;
    }

    for (const char* key : {"seq_id", "sequence_id"}) {
      if (img.contains(key) && !detail::id_string(img.at(key)).empty()) {
        rec.sequence_id = detail::id_string(img.at(key));
        break;
      }
    }
    if (img.contains("frame_num") && img.at("frame_num").is_number_integer() && img.at("frame_num").get<long>() >= 0) {
      rec.frame_index = img.at("frame_num").get<std::uint32_t>();
    }

    ++out.report.kept_images;
    by_camera[rec.camera_id].push_back(std::move(rec));
  }

  for (auto& [camera, records] : by_camera) {
    sort_chronologically(records);
    CameraStream stream{camera, std::move(records), {}};
    stream.species_vocabulary = vocabulary_of(stream.records);
    out.streams.push_back(std::move(stream));
  }
  return out;
}

/// Parses metadata text; malformed JSON is reported with line and column.
inline ParsedMetadata parse_metadata_text(const std::string& text, const FilterConfig& config = {}) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ParseError("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + e.what());
  }
  return parse_metadata(doc, config);
}

inline ParsedMetadata parse_metadata_file(const std::string& path, const FilterConfig& config = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open metadata file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_metadata_text(ss.str(), config);
}

/// Re-applies the record-level filters to an already built stream.
inline CameraStream apply_record_filters(const CameraStream& stream, const FilterConfig& config = {}) {
  CameraStream out{stream.camera_id, {}, {}};
  for (const auto& r : stream.records) {
    if (r.species.empty() || detail::is_excluded(r.species, config)) continue;
    if (!(r.bbox_confidence > config.min_confidence)) continue;
    if (!(r.bbox.w > 0 && r.bbox.h > 0)) continue;
    out.records.push_back(r);
  }
  sort_chronologically(out.records);
  out.species_vocabulary = vocabulary_of(out.records);
  return out;
}

/// Groups records lacking a sequence id into pseudo-sequences: consecutive
/// such records at most `gap` apart share one synthesized id. Frame indices
/// follow chronological order within each synthesized sequence.
inline CameraStream synthesize_sequences(CameraStream stream, std::chrono::seconds gap = std::chrono::seconds{3}) {
  std::size_t next_id = 0;
  std::optional<Timestamp> previous;
  std::string current;
  std::uint32_t frame = 0;
  for (auto& r : stream.records) {
    if (!r.sequence_id.empty()) continue;
    if (!previous || r.timestamp - *previous > gap) {
      current = "~" + stream.camera_id + "/pseq" + std::to_string(next_id++);
      frame = 0;
    }
    r.sequence_id = current;
    r.frame_index = frame++;
    previous = r.timestamp;
  }
  return stream;
}

/// True iff the camera has strictly more than `min_images` records and its
/// first-to-last span is at least `min_span_days` days.
inline bool admit_camera(const CameraStream& stream, const AdmissionConfig& config = {}) {
  if (stream.records.size() <= config.min_images || stream.records.empty()) return false;
  const auto span = stream.records.back().timestamp - stream.records.front().timestamp;
  return span >= std::chrono::days{config.min_span_days};
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const ImageRecord& r) {
  return nlohmann::json{{"image_id", r.image_id},
                        {"camera_id", r.camera_id},
                        {"file_name", r.file_name},
                        {"timestamp", format_timestamp(r.timestamp)},
                        {"sequence_id", r.sequence_id},
                        {"frame_index", r.frame_index},
                        {"species", r.species},
                        {"bbox", {r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h}},
                        {"bbox_confidence", r.bbox_confidence},
                        {"image_size", {r.image_width, r.image_height}}};
}

inline ImageRecord record_from_json(const nlohmann::json& j) {
  ImageRecord r;
  try {
    r.image_id = j.at("image_id").get<std::string>();
    r.camera_id = j.at("camera_id").get<std::string>();
    r.file_name = j.value("file_name", std::string{});
    const auto ts = parse_timestamp(j.at("timestamp").get<std::string>());
    if (!ts) throw ParseError("bad timestamp for record '" + r.image_id + "'");
    r.timestamp = *ts;
    r.sequence_id = j.at("sequence_id").get<std::string>();
    r.frame_index = j.at("frame_index").get<std::uint32_t>();
    r.species = j.at("species").get<std::string>();
    const auto& b = j.at("bbox");
    r.bbox = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
    r.bbox_confidence = j.at("bbox_confidence").get<double>();
    r.image_width = j.at("image_size").at(0).get<int>();
    r.image_height = j.at("image_size").at(1).get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("stream record: ") + e.what());
  }
  return r;
}

/// JSON lines, one record per line.
inline std::string stream_to_jsonl(const CameraStream& stream) {
  std::string out;
  for (const auto& r : stream.records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline CameraStream stream_from_jsonl(std::istream& in) {
  CameraStream stream;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      stream.records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!stream.records.empty()) stream.camera_id = stream.records.front().camera_id;
  sort_chronologically(stream.records);
  stream.species_vocabulary = vocabulary_of(stream.records);
  return stream;
}

inline nlohmann::json to_json(const DropReport& report) {
  nlohmann::json unusable = nlohmann::json::object();
  for (const auto& [camera, intervals] : report.unusable_intervals) unusable[camera] = intervals;
  return nlohmann::json{{"total_images", report.total_images},
                        {"kept_images", report.kept_images},
                        {"dropped", report.dropped},
                        {"excluded_cameras", report.excluded_cameras},
                        {"unusable_intervals", unusable}};
}

}  // namespace streamtrap
