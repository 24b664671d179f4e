// Copyright 2026 The crspin Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace crspin {

/// Malformed configuration document (syntax level).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration value violates an invariant. `path` is the dotted field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::runtime_error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Argument outside a formula's domain (e.g. Raman model with T <= dT).
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what, std::size_t index = npos)
      : std::domain_error(what), index_(index) {}
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  /// Offending sample index, or npos when not tied to a data row.
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The generator has more than one stationary state.
class DegenerateSteadyState : public std::runtime_error {
 public:
  explicit DegenerateSteadyState(std::size_t null_dim)
      : std::runtime_error("steady state is not unique (null space dimension " +
                           std::to_string(null_dim) + ")"),
        null_dim_(null_dim) {}
  std::size_t null_dimension() const noexcept { return null_dim_; }

 private:
  std::size_t null_dim_;
};

}  // namespace crspin
