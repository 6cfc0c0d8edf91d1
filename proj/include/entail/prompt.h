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

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "entail/common.h"
#include "entail/ingestion.h"
#include "json.hpp"

namespace entail {

inline constexpr std::string_view kEntailConnective = " entails that ";
// Matches the tokenizer's separator token so the concatenated form encodes
// as `premise [SEP] hypothesis`.
inline constexpr std::string_view kSeparatorConnective = " [SEP] ";

enum class PairOrigin { kNli, kRetrieval };

const char* origin_name(PairOrigin origin);

// What a retrieval example contributes as hypothesis.
enum class HypothesisForm { kClaim, kQuestion };

enum class PromptStrategy { kPrompt, kConcat };

const char* strategy_name(PromptStrategy strategy);
std::optional<PromptStrategy> parse_strategy(std::string_view name);

class EntailmentPair {
 public:
  // Throws kInvalidArgument when either side is empty.
  EntailmentPair(std::string premise, std::string hypothesis, PairOrigin origin);

  const std::string& premise() const { return premise_; }
  const std::string& hypothesis() const { return hypothesis_; }
  PairOrigin origin() const { return origin_; }

  friend bool operator==(const EntailmentPair&, const EntailmentPair&) = default;

 private:
  std::string premise_;
  std::string hypothesis_;
  PairOrigin origin_;
};

struct PromptedText {
  std::string text;
  Span premise;
  Span hypothesis;

  std::string_view premise_text() const {
    return std::string_view(text).substr(premise.begin, premise.size());
  }
  std::string_view hypothesis_text() const {
    return std::string_view(text).substr(hypothesis.begin, hypothesis.size());
  }
  friend bool operator==(const PromptedText&, const PromptedText&) = default;
};

// One pair per positive passage, all sharing the claim (or raw question)
// hypothesis.
std::vector<EntailmentPair> unify(const QAExample& example,
                                  HypothesisForm form = HypothesisForm::kClaim);
// Entail-labelled pairs only; other labels yield nothing.
std::vector<EntailmentPair> unify(const NLIExample& example);

// "<premise> entails that <hypothesis>"
PromptedText assemble(const EntailmentPair& pair);
// "<premise> [SEP] <hypothesis>"
PromptedText assemble_concat(const EntailmentPair& pair);
PromptedText assemble(const EntailmentPair& pair, PromptStrategy strategy);

// Pool of all pairs from both sources in input order: QA first, then NLI.
std::vector<EntailmentPair> unify_all(const std::vector<QAExample>& qa,
                                      const std::vector<NLIExample>& nli,
                                      HypothesisForm form);

nlohmann::json to_json(const EntailmentPair& pair);
EntailmentPair pair_from_json(const nlohmann::json& record, std::size_t line = 0);
nlohmann::json to_json(const PromptedText& prompted);
// Validates that the spans are disjoint and in bounds.
PromptedText prompted_from_json(const nlohmann::json& record, std::size_t line = 0);

}  // namespace entail
