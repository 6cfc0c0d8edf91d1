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

// Tokenization of prompted pairs and masked-hypothesis instance creation.
//
// Every maskable token in scope is replaced by [MASK] independently with
// probability beta; there is no random-token or keep branch. Special tokens
// and the connective between premise and hypothesis are never maskable.

#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "entail/common.h"
#include "entail/prompt.h"
#include "entail/tokenizer.h"
#include "json.hpp"

namespace entail {

inline constexpr std::size_t kDefaultMaxLen = 256;

enum class MaskScope { kHypothesisOnly, kFullPrompt };

const char* scope_name(MaskScope scope);
std::optional<MaskScope> parse_scope(std::string_view name);

struct MaskConfig {
  double beta = 0.8;
  MaskScope scope = MaskScope::kHypothesisOnly;
  std::uint64_t seed = 0;

  // Throws kConfig unless 0 <= beta <= 1.
  void validate() const;
};

enum class TruncationPolicy {
  // Drop premise tokens adjacent to the connective; the premise head, the
  // connective and the whole hypothesis are kept.
  kPremiseTail,
  // Plain right truncation of the whole prompt.
  kRight,
};

class InstanceRejected : public Error {
 public:
  enum class Reason { kHypothesisTruncated, kNothingMasked };

  InstanceRejected(Reason reason, const std::string& message)
      : Error(ErrorKind::kRejected, message), reason_(reason) {}

  Reason reason() const { return reason_; }

 private:
  Reason reason_;
};

// [CLS] premise connective hypothesis [SEP] as token ids, with the token
// extents of premise and hypothesis. Positions between the two spans hold
// the connective.
struct TokenizedPrompt {
  std::vector<int> ids;
  Span premise;
  Span hypothesis;
};

// A token belongs to the hypothesis span iff its character extent
// intersects the hypothesis character span.
TokenizedPrompt tokenize_with_span(
    const PromptedText& prompted, const Tokenizer& tokenizer,
    std::size_t max_len = kDefaultMaxLen,
    TruncationPolicy policy = TruncationPolicy::kPremiseTail);

struct PromptedInstance {
  std::vector<int> token_ids;  // with [MASK] substituted
  Span hypothesis;
  std::vector<std::size_t> mask_positions;  // ascending
  std::vector<int> labels;                  // original ids, aligned
  std::size_t attention_length = 0;

  friend bool operator==(const PromptedInstance&, const PromptedInstance&) = default;
};

// Positions eligible for masking under `scope`.
std::vector<std::size_t> maskable_positions(const TokenizedPrompt& tokens,
                                            MaskScope scope,
                                            const Tokenizer& tokenizer);

PromptedInstance mask_hypothesis(const TokenizedPrompt& tokens,
                                 const MaskConfig& config, Rng& rng,
                                 const Tokenizer& tokenizer);

// Token ids with every mask replaced by its label.
std::vector<int> unmasked_ids(const PromptedInstance& instance);

nlohmann::json to_json(const PromptedInstance& instance);
PromptedInstance instance_from_json(const nlohmann::json& record);

}  // namespace entail
