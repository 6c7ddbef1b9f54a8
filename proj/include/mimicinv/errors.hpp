// Copyright 2026 The mimicinv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MIMICINV_ERRORS_HPP
#define MIMICINV_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mimicinv {

/// Tensor extents do not compose (operands, layer chain, file shape table).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf appeared in a computed value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed binary or text input (parameter files, IDX, netpbm).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value. `field()` carries the JSON path of the
/// offending entry when known.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& field, const std::string& what)
      : std::invalid_argument(field.empty() ? what : field + ": " + what),
        field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Misuse of an autodiff tape (second backward, foreign variable).
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace mimicinv

#endif  // MIMICINV_ERRORS_HPP
