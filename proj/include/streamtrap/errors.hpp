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

#include <stdexcept>
#include <string>
#include <string_view>

namespace streamtrap {

/// Base class for every error raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI's error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& message) : Error("parse_error", message) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message) : Error("validation_error", message) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message) : Error("format_error", message) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& message) : Error("dimension_mismatch", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config_error", message) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& message) : Error("training_error", message) {}
};

}  // namespace streamtrap
