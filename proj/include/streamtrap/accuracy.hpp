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

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "streamtrap/errors.hpp"

namespace streamtrap {

struct Prediction {
  std::size_t truth = 0;
  std::size_t predicted = 0;
};

struct BalancedAccuracy {
  double value = 0;
  std::map<std::size_t, double> per_class;  ///< recall of each class present in the input
};

/// Mean per-class recall over the classes that occur as ground truth.
inline BalancedAccuracy balanced_accuracy(std::span<const Prediction> predictions) {
  if (predictions.empty()) throw ValidationError("balanced accuracy of an empty prediction set");
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> tally;  // class -> (correct, total)
  for (const auto& p : predictions) {
    auto& [correct, total] = tally[p.truth];
    ++total;
    if (p.predicted == p.truth) ++correct;
  }
  BalancedAccuracy out;
  double sum = 0;
  for (const auto& [cls, ct] : tally) {
    const double recall = static_cast<double>(ct.first) / static_cast<double>(ct.second);
    out.per_class[cls] = recall;
    sum += recall;
  }
  out.value = sum / static_cast<double>(tally.size());
  return out;
}

/// Per-class recall keyed by label name.
inline std::map<std::string, double> per_class_by_label(const BalancedAccuracy& ba,
                                                        const std::vector<std::string>& vocabulary) {
  std::map<std::string, double> out;
  for (const auto& [cls, acc] : ba.per_class) out[cls < vocabulary.size() ? vocabulary[cls] : std::to_string(cls)] = acc;
  return out;
}

}  // namespace streamtrap
