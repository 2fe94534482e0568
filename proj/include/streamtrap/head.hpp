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

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "streamtrap/embedding_store.hpp"
#include "streamtrap/errors.hpp"

namespace streamtrap {

enum class LossKind { kCrossEntropy, kBalancedSoftmax };

inline const char* to_string(LossKind k) { return k == LossKind::kCrossEntropy ? "ce" : "bsm"; }

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "ce" || s == "cross_entropy") return LossKind::kCrossEntropy;
  if (s == "bsm" || s == "balanced_softmax") return LossKind::kBalancedSoftmax;
  throw ConfigError("unknown loss '" + s + "' (expected ce or bsm)");
}

/// Residual low-rank map on the embedding: z' = z + up * (down * z).
/// `up` is d x r, `down` is r x d.
struct LowRankAdapter {
  Eigen::MatrixXd up;
  Eigen::MatrixXd down;

  Eigen::Index rank() const { return down.rows(); }
};

struct Provenance {
  std::string camera_id;
  std::string regime;
  int trained_through = -1;  ///< last interval whose training data was used; -1 = untrained
  std::uint64_t seed = 0;

  bool operator==(const Provenance&) const = default;
};

/// Linear classifier over frozen embeddings, optionally with a low-rank
/// residual adapter in front of it.
struct AdaptedHead {
  std::vector<std::string> labels;
  Eigen::MatrixXd weights;  ///< C x d
  std::optional<LowRankAdapter> adapter;
  LossKind loss = LossKind::kCrossEntropy;
  std::vector<double> class_counts;  ///< training count per label, aligned with `labels`
  Provenance provenance;

  Eigen::Index num_classes() const { return weights.rows(); }
  Eigen::Index dim() const { return weights.cols(); }

  /// W (I + up * down): the single matrix equivalent to weights + adapter.
  Eigen::MatrixXd effective_weights() const {
    if (!adapter) return weights;
    return weights + (weights * adapter->up) * adapter->down;
  }

  static AdaptedHead from_text_head(const TextHead& text) {
    AdaptedHead h;
    h.labels = text.labels();
    h.weights.resize(static_cast<Eigen::Index>(text.num_classes()), text.dim());
    for (std::size_t c = 0; c < text.num_classes(); ++c) {
      const auto v = text.vector(c);
      for (std::size_t k = 0; k < v.size(); ++k) h.weights(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k)) = v[k];
    }
    h.class_counts.assign(text.num_classes(), 0.0);
    return h;
  }
};

inline Eigen::VectorXd to_vector(std::span<const float> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

/// Adapted embedding z' (identity when no adapter is attached).
inline Eigen::VectorXd adapt_embedding(const AdaptedHead& head, const Eigen::VectorXd& z) {
  require_same_dim(static_cast<std::size_t>(z.size()), static_cast<std::size_t>(head.dim()), "head input");
  if (!head.adapter) return z;
  return z + head.adapter->up * (head.adapter->down * z);
}

/// Class scores eta = W z'.
inline Eigen::VectorXd logits(const AdaptedHead& head, const Eigen::VectorXd& z) {
  return head.weights * adapt_embedding(head, z);
}

inline Eigen::VectorXd logits(const AdaptedHead& head, std::span<const float> z) { return logits(head, to_vector(z)); }

/// Index of the largest entry; the lowest index wins ties.
inline Eigen::Index argmax(const Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

inline Eigen::Index predict(const AdaptedHead& head, const Eigen::VectorXd& z) { return argmax(logits(head, z)); }

/// log sum_c exp(v_c), skipping -inf entries.
inline double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  double s = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::exp(v(i) - m);
  return m + std::log(s);
}

/// Stable softmax.
inline Eigen::VectorXd softmax(const Eigen::VectorXd& v) {
  const double lse = log_sum_exp(v);
  Eigen::VectorXd p(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) p(i) = std::exp(v(i) - lse);
  return p;
}

struct LossValue {
  double loss = 0;
  Eigen::VectorXd dlogits;  ///< gradient of the loss w.r.t. the logits
};

/// Log class priors for balanced softmax: log n_c, or -inf for classes with
/// no training samples (they drop out of the normalizer).
inline Eigen::VectorXd log_priors(std::span<const double> counts) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(counts.size()));
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (!(counts[c] >= 0) || !std::isfinite(counts[c])) throw ConfigError("class counts must be finite and >= 0");
    out(static_cast<Eigen::Index>(c)) = counts[c] > 0 ? std::log(counts[c]) : -std::numeric_limits<double>::infinity();
  }
  return out;
}

inline LossValue cross_entropy(const Eigen::VectorXd& eta, Eigen::Index label) {
  if (label < 0 || label >= eta.size()) throw ValidationError("label index outside the vocabulary");
  LossValue out;
  out.loss = log_sum_exp(eta) - eta(label);
  out.dlogits = softmax(eta);
  out.dlogits(label) -= 1.0;
  return out;
}

/// Balanced softmax: -log(n_y e^{eta_y} / sum_c n_c e^{eta_c}). Classes with
/// n_c = 0 are excluded from the sum; n_y must be positive.
inline LossValue balanced_softmax(const Eigen::VectorXd& eta, Eigen::Index label, std::span<const double> counts) {
  if (label < 0 || label >= eta.size()) throw ValidationError("label index outside the vocabulary");
  require_same_dim(counts.size(), static_cast<std::size_t>(eta.size()), "class counts");
  if (!(counts[static_cast<std::size_t>(label)] > 0)) {
    throw ConfigError("balanced softmax: target class has zero training count");
  }
  const Eigen::VectorXd shifted = eta + log_priors(counts);
  LossValue out;
  out.loss = log_sum_exp(shifted) - shifted(label);
  out.dlogits = softmax(shifted);
  out.dlogits(label) -= 1.0;
  return out;
}

inline LossValue loss_value(LossKind kind, const Eigen::VectorXd& eta, Eigen::Index label, std::span<const double> counts) {
  return kind == LossKind::kCrossEntropy ? cross_entropy(eta, label) : balanced_softmax(eta, label, counts);
}

inline double bsm_loss(const AdaptedHead& head, std::span<const float> z, Eigen::Index label) {
  return balanced_softmax(logits(head, z), label, head.class_counts).loss;
}

/// Gradients with the same shapes as the trainable parts of a head.
struct HeadGradient {
  Eigen::MatrixXd weights;
  Eigen::MatrixXd up;
  Eigen::MatrixXd down;

  static HeadGradient zeros_like(const AdaptedHead& head) {
    HeadGradient g;
    g.weights = Eigen::MatrixXd::Zero(head.weights.rows(), head.weights.cols());
    if (head.adapter) {
      g.up = Eigen::MatrixXd::Zero(head.adapter->up.rows(), head.adapter->up.cols());
      g.down = Eigen::MatrixXd::Zero(head.adapter->down.rows(), head.adapter->down.cols());
    }
    return g;
  }
};

/// Adds the parameter gradient of one sample, given dL/d(eta), to `grad`.
///   dW = g z'^T;  dz' = W^T g;  d(up) = dz' (down z)^T;  d(down) = up^T dz' z^T
inline void accumulate_gradient(const AdaptedHead& head, const Eigen::VectorXd& z, const Eigen::VectorXd& dlogits,
                                HeadGradient& grad, double scale = 1.0) {
  if (!head.adapter) {
    grad.weights.noalias() += scale * dlogits * z.transpose();
    return;
  }
  const auto& a = *head.adapter;
  const Eigen::VectorXd hidden = a.down * z;
  const Eigen::VectorXd adapted = z + a.up * hidden;
  grad.weights.noalias() += scale * dlogits * adapted.transpose();
  const Eigen::VectorXd dz = head.weights.transpose() * dlogits;
  grad.up.noalias() += scale * dz * hidden.transpose();
  grad.down.noalias() += scale * (a.up.transpose() * dz) * z.transpose();
}

/// Loss and parameter gradient for a single sample.
inline double sample_loss_and_gradient(const AdaptedHead& head, LossKind kind, const Eigen::VectorXd& z, Eigen::Index label,
                                       HeadGradient& grad, double scale = 1.0) {
  const LossValue lv = loss_value(kind, logits(head, z), label, head.class_counts);
  accumulate_gradient(head, z, lv.dlogits, grad, scale);
  return lv.loss;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------
//
// STHD1 uses the container header (magic, u32 version, u32 count = classes,
// u32 dim, u8 flag = adapter present) and label table, followed by:
//   C x d float64 weights
//   [u32 rank | d x r float64 up | r x d float64 down]   if flag = 1
//   C x float64 class counts
//   u8 loss kind | u32 length + UTF-8 provenance JSON

inline std::string encode_head(const AdaptedHead& head) {
  ByteWriter w;
  w.raw(kHeadCheckpointMagic);
  w.u32(kContainerVersion);
  w.u32(static_cast<std::uint32_t>(head.num_classes()));
  w.u32(static_cast<std::uint32_t>(head.dim()));
  w.u8(head.adapter ? 1 : 0);
  for (const auto& l : head.labels) w.str16(l);
  const auto put = [&](const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index k = 0; k < m.cols(); ++k) w.f64(m(i, k));
  };
  put(head.weights);
  if (head.adapter) {
    w.u32(static_cast<std::uint32_t>(head.adapter->rank()));
    put(head.adapter->up);
    put(head.adapter->down);
  }
  for (double n : head.class_counts) w.f64(n);
  w.u8(head.loss == LossKind::kCrossEntropy ? 0 : 1);
  const std::string prov = nlohmann::json{{"camera_id", head.provenance.camera_id},
                                          {"regime", head.provenance.regime},
                                          {"trained_through", head.provenance.trained_through},
                                          {"seed", head.provenance.seed}}
                               .dump();
  w.u32(static_cast<std::uint32_t>(prov.size()));
  w.raw(prov);
  return w.bytes();
}

inline AdaptedHead decode_head(std::string_view bytes) {
  ByteReader r(bytes);
  if (bytes.size() < kHeadCheckpointMagic.size() || r.raw(kHeadCheckpointMagic.size()) != kHeadCheckpointMagic) {
    throw FormatError("bad magic: expected 'STHD1'");
  }
  if (const auto v = r.u32(); v != kContainerVersion) throw FormatError("unsupported version " + std::to_string(v));
  const auto classes = static_cast<Eigen::Index>(r.u32());
  const auto dim = static_cast<Eigen::Index>(r.u32());
  const std::uint8_t flag = r.u8();
  if (dim == 0 || flag > 1) throw FormatError("bad head header");
  AdaptedHead head;
  for (Eigen::Index c = 0; c < classes; ++c) head.labels.push_back(r.str16());
  const auto get = [&](Eigen::Index rows, Eigen::Index cols) {
    if (static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols) * 8 > r.remaining()) {
      throw FormatError("truncated payload");
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index k = 0; k < cols; ++k) {
        m(i, k) = r.f64();
        if (!std::isfinite(m(i, k))) throw FormatError("non-finite head parameter");
      }
    return m;
  };
  head.weights = get(classes, dim);
  if (flag) {
    const auto rank = static_cast<Eigen::Index>(r.u32());
    if (rank == 0 || rank > dim) throw FormatError("adapter rank must be in [1, dim]");
    LowRankAdapter a;
    a.up = get(dim, rank);
    a.down = get(rank, dim);
    head.adapter = std::move(a);
  }
  for (Eigen::Index c = 0; c < classes; ++c) head.class_counts.push_back(r.f64());
  const std::uint8_t loss = r.u8();
  if (loss > 1) throw FormatError("unknown loss kind");
  head.loss = loss == 0 ? LossKind::kCrossEntropy : LossKind::kBalancedSoftmax;
  const std::uint32_t len = r.u32();
  const auto prov_text = r.raw(len);
  if (r.remaining() != 0) throw FormatError("trailing bytes after head payload");
  try {
    const auto prov = nlohmann::json::parse(prov_text);
    head.provenance = {prov.at("camera_id").get<std::string>(), prov.at("regime").get<std::string>(),
                       prov.at("trained_through").get<int>(), prov.at("seed").get<std::uint64_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad provenance: ") + e.what());
  }
  return head;
}

inline void write_head(const AdaptedHead& head, const std::string& path) { write_file_bytes(path, encode_head(head)); }
inline AdaptedHead read_head(const std::string& path) { return decode_head(read_file_bytes(path)); }

/// Bitwise equality of every parameter.
inline bool identical(const AdaptedHead& a, const AdaptedHead& b) { return encode_head(a) == encode_head(b); }

}  // namespace streamtrap
