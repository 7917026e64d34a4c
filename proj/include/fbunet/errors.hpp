// Copyright 2026 The fbunet Authors
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

#ifndef FBUNET_ERRORS_HPP_
#define FBUNET_ERRORS_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fbunet
{

/// Tensor dimensions do not satisfy an operation's shape contract.
class ShapeError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// An API was used out of order (e.g. a second round without stored state).
class ContractError : public std::logic_error
{
public:
  using std::logic_error::logic_error;
};

/// Invalid configuration; the message names the offending field.
class ConfigError : public std::runtime_error
{
public:
  ConfigError(std::string field, const std::string & message)
  : std::runtime_error(field + ": " + message), field_(std::move(field))
  {
  }
  const std::string & field() const noexcept { return field_; }

private:
  std::string field_;
};

/// Dataset content violates an invariant (label out of range, absent class).
class DataError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Malformed file. `offset` is the byte position where parsing failed.
class FormatError : public std::runtime_error
{
public:
  FormatError(const std::string & message, std::uint64_t offset)
  : std::runtime_error(message + " (at byte " + std::to_string(offset) + ")"),
    message_(message),
    offset_(offset)
  {
  }
  const std::string & message() const noexcept { return message_; }
  std::uint64_t offset() const noexcept { return offset_; }

private:
  std::string message_;
  std::uint64_t offset_;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

}  // namespace fbunet

#endif  // FBUNET_ERRORS_HPP_
