/*
 * Copyright 2026 The comatch Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef COMATCH_ERRORS_HPP
#define COMATCH_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace comatch {

/// Machine-readable error categories, mirrored in CLI exit codes.
enum class ErrorCategory {
  config,      // bad or inconsistent configuration
  validation,  // precondition on an argument violated
  dimension,   // tensor shape mismatch
  state,       // operation called in the wrong object state
  io,          // file missing/unreadable/unwritable
  format,      // file present but malformed
  numeric,     // NaN/Inf or other numerical failure
};

inline const char* to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::validation: return "validation";
    case ErrorCategory::dimension: return "dimension";
    case ErrorCategory::state: return "state";
    case ErrorCategory::io: return "io";
    case ErrorCategory::format: return "format";
    case ErrorCategory::numeric: return "numeric";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}
  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorCategory::config, m) {}
};
struct ValidationError : Error {
  explicit ValidationError(const std::string& m) : Error(ErrorCategory::validation, m) {}
};
struct DimensionError : Error {
  explicit DimensionError(const std::string& m) : Error(ErrorCategory::dimension, m) {}
};
struct StateError : Error {
  explicit StateError(const std::string& m) : Error(ErrorCategory::state, m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorCategory::io, m) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& m) : Error(ErrorCategory::format, m) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error(ErrorCategory::numeric, m) {}
};

}  // namespace comatch

#endif  // COMATCH_ERRORS_HPP
