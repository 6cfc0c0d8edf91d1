// Copyright 2026 The entailtune Authors.
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
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace entail {

enum class ErrorKind {
  kInvalidArgument,
  kParse,
  kSchema,
  kIo,
  kRejected,
  kMissingArtifact,
  kConfig,
  kState,
};

const char* error_kind_name(ErrorKind kind);

// Base error for the library. Carries a machine-readable kind so the CLI can
// emit structured error documents.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised while reading line-delimited files. `line` is 1-based; `field` is
// empty for syntax errors.
class DataError : public Error {
 public:
  DataError(ErrorKind kind, std::size_t line, std::string field,
            const std::string& message)
      : Error(kind, message), line_(line), field_(std::move(field)) {}

  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

// Half-open [begin, end) interval over characters or tokens.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool contains(std::size_t pos) const { return pos >= begin && pos < end; }
  bool intersects(std::size_t b, std::size_t e) const {
    return b < end && begin < e;
  }
  friend bool operator==(const Span&, const Span&) = default;
};

// Seeded generator with platform-independent derived distributions.
// std::mt19937_64 output is fully specified by the standard; the standard
// distributions are not, so sampling helpers are implemented here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Mixes a base seed with a stream tag so stages and workers get independent
// streams from one global seed.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

// Collapses whitespace runs to single spaces and strips both ends.
std::string normalize_whitespace(std::string_view text);

std::vector<std::string> split_whitespace(std::string_view text);

std::string to_lower_ascii(std::string_view text);

}  // namespace entail
