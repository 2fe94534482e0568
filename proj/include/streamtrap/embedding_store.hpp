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
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "streamtrap/errors.hpp"

namespace streamtrap {

// Container layout (all integers little-endian):
//   magic[5] | u32 version | u32 count | u32 dim | u8 flag
//   count x (u16 length | UTF-8 id bytes)
//   count x dim float32 values, row-major
inline constexpr std::string_view kEmbeddingMagic = "STEM1";
inline constexpr std::string_view kTextHeadMagic = "STTH1";
inline constexpr std::string_view kHeadCheckpointMagic = "STHD1";
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr double kNormTolerance = 1e-4;

/// Little-endian byte sink.
class ByteWriter {
 public:
  void raw(std::string_view bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str16(std::string_view s) {
    if (s.size() > 0xffff) throw FormatError("string longer than 65535 bytes");
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s);
  }

  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

/// Little-endian byte source; every read is bounds-checked.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::string_view raw(std::size_t n) {
    if (n > data_.size() - pos_) throw FormatError("truncated payload at byte " + std::to_string(pos_));
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(raw(1)[0]); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(little(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(little(4)); }
  std::uint64_t u64() { return little(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str16() { return std::string(raw(u16())); }

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::uint64_t little(std::size_t n) {
    const auto bytes = raw(n);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
    return v;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for '" + path + "'");
}

/// Dense row-major float32 matrix with one row per image id.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::vector<std::string> ids, std::uint32_t dim, std::vector<float> data, bool normalized)
      : ids_(std::move(ids)), dim_(dim), data_(std::move(data)), normalized_(normalized) {
    validate();
  }

  const std::vector<std::string>& ids() const { return ids_; }
  std::uint32_t dim() const { return dim_; }
  std::size_t rows() const { return ids_.size(); }
  bool normalized() const { return normalized_; }
  const std::vector<float>& data() const { return data_; }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  /// Row index of an id, or npos.
  std::size_t find(const std::string& id) const {
    const auto it = index_.find(id);
    return it == index_.end() ? npos : it->second;
  }
  bool contains(const std::string& id) const { return find(id) != npos; }

  bool operator==(const EmbeddingMatrix& o) const {
    return ids_ == o.ids_ && dim_ == o.dim_ && normalized_ == o.normalized_ &&
           std::equal(data_.begin(), data_.end(), o.data_.begin(), o.data_.end(),
                      [](float a, float b) { return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b); });
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  void validate() {
    if (dim_ == 0) throw ValidationError("embedding dimension must be positive");
    if (data_.size() != ids_.size() * dim_) throw ValidationError("embedding data size does not match count x dim");
    index_.clear();
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (!index_.emplace(ids_[i], i).second) throw ValidationError("duplicate embedding id '" + ids_[i] + "'");
    }
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      double sq = 0;
      for (float v : row(i)) {
        if (!std::isfinite(v)) throw ValidationError("non-finite value in embedding row '" + ids_[i] + "'");
        sq += static_cast<double>(v) * v;
      }
      if (normalized_ && std::abs(std::sqrt(sq) - 1.0) > kNormTolerance) {
        throw ValidationError("row '" + ids_[i] + "' has norm " + std::to_string(std::sqrt(sq)) +
                              " but the matrix is flagged normalized");
      }
    }
  }

  std::vector<std::string> ids_;
  std::uint32_t dim_ = 0;
  std::vector<float> data_;
  bool normalized_ = false;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Zero-shot class head: one L2-normalized text embedding per label.
class TextHead {
 public:
  TextHead() = default;
  TextHead(std::vector<std::string> labels, std::uint32_t dim, std::vector<float> vectors)
      : matrix_(std::move(labels), dim, std::move(vectors), true) {
    std::set<std::string> unique(matrix_.ids().begin(), matrix_.ids().end());
    if (unique.size() != matrix_.ids().size()) throw ValidationError("text head labels must be unique");
  }

  const std::vector<std::string>& labels() const { return matrix_.ids(); }
  std::uint32_t dim() const { return matrix_.dim(); }
  std::size_t num_classes() const { return matrix_.rows(); }
  std::span<const float> vector(std::size_t c) const { return matrix_.row(c); }
  const EmbeddingMatrix& matrix() const { return matrix_; }

  bool operator==(const TextHead&) const = default;

 private:
  EmbeddingMatrix matrix_;
};

namespace detail {

inline std::string encode_container(std::string_view magic, const EmbeddingMatrix& m) {
  ByteWriter w;
  w.raw(magic);
  w.u32(kContainerVersion);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(m.dim());
  w.u8(m.normalized() ? 1 : 0);
  for (const auto& id : m.ids()) w.str16(id);
  for (float v : m.data()) w.f32(v);
  return w.bytes();
}

inline EmbeddingMatrix decode_container(std::string_view magic, std::string_view bytes) {
  ByteReader r(bytes);
  if (bytes.size() < magic.size() || r.raw(magic.size()) != magic) {
    throw FormatError("bad magic: expected '" + std::string(magic) + "'");
  }
  const std::uint32_t version = r.u32();
  if (version != kContainerVersion) throw FormatError("unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  const std::uint32_t dim = r.u32();
  const std::uint8_t flag = r.u8();
  if (dim == 0) throw FormatError("dimension must be positive");
  if (flag > 1) throw FormatError("normalized flag must be 0 or 1");
  // Each id needs at least its 2-byte length prefix.
  if (static_cast<std::uint64_t>(count) * 2 > r.remaining()) throw FormatError("truncated id table");
  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) ids.push_back(r.str16());
  const std::uint64_t values = static_cast<std::uint64_t>(count) * dim;
  if (values * 4 != r.remaining()) {
    throw FormatError(values * 4 > r.remaining() ? "truncated payload" : "trailing bytes after payload");
  }
  std::vector<float> data;
  data.reserve(values);
  for (std::uint64_t i = 0; i < values; ++i) {
    const float v = r.f32();
    if (!std::isfinite(v)) throw FormatError("non-finite value at element " + std::to_string(i));
    data.push_back(v);
  }
  try {
    return EmbeddingMatrix(std::move(ids), dim, std::move(data), flag == 1);
  } catch (const ValidationError& e) {
    throw FormatError(e.what());
  }
}

}  // namespace detail

inline std::string encode_store(const EmbeddingMatrix& m) { return detail::encode_container(kEmbeddingMagic, m); }
inline EmbeddingMatrix decode_store(std::string_view bytes) { return detail::decode_container(kEmbeddingMagic, bytes); }

inline void write_store(const EmbeddingMatrix& m, const std::string& path) { write_file_bytes(path, encode_store(m)); }
inline EmbeddingMatrix read_store(const std::string& path) { return decode_store(read_file_bytes(path)); }

inline std::string encode_text_head(const TextHead& head) {
  return detail::encode_container(kTextHeadMagic, head.matrix());
}

inline TextHead decode_text_head(std::string_view bytes) {
  auto m = detail::decode_container(kTextHeadMagic, bytes);
  if (!m.normalized()) throw FormatError("text head must be flagged normalized");
  std::vector<std::string> labels = m.ids();
  std::vector<float> data = m.data();
  try {
    return TextHead(std::move(labels), m.dim(), std::move(data));
  } catch (const ValidationError& e) {
    throw FormatError(e.what());
  }
}

inline void write_text_head(const TextHead& head, const std::string& path) {
  write_file_bytes(path, encode_text_head(head));
}
inline TextHead read_text_head(const std::string& path) { return decode_text_head(read_file_bytes(path)); }

inline void require_same_dim(std::size_t a, std::size_t b, std::string_view what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": dimension " + std::to_string(a) + " does not match " + std::to_string(b));
  }
}

/// Index of the text vector with the largest inner product; the lowest
/// index wins ties.
inline std::size_t zero_shot_predict(const TextHead& head, std::span<const float> embedding) {
  require_same_dim(embedding.size(), head.dim(), "zero-shot embedding");
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < head.num_classes(); ++c) {
    const auto w = head.vector(c);
    double score = 0;
    for (std::size_t k = 0; k < w.size(); ++k) score += static_cast<double>(w[k]) * embedding[k];
    if (score > best_score) {
      best_score = score;
      best = c;
    }
  }
  return best;
}

inline const std::string& zero_shot_label(const TextHead& head, std::span<const float> embedding) {
  return head.labels()[zero_shot_predict(head, embedding)];
}

}  // namespace streamtrap
