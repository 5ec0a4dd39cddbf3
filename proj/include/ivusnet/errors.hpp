// Copyright 2026 The ivusnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file
// except in compliance with the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License
// is distributed on an "AS IS" BASIS WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ivus {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor/image shapes that do not fit an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API precondition (non-scalar loss, empty model list, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid architecture, training, augmentation or generator settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary file. Carries the byte offset where decoding stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Malformed text input (manifests). Carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Ellipse fitting could not produce an ellipse.
class FitError : public Error {
 public:
  using Error::Error;
};

/// A mask had no foreground where one was required.
class EmptyRegionError : public Error {
 public:
  using Error::Error;
};

}  // namespace ivus
