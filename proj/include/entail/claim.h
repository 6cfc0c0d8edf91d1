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

// Rule-based rewriting of interrogative questions into declarative
// existence claims ("when did X happen?" -> "There exists a known time when
// X happen.").

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace entail {

enum class QuestionCategory { kWhen, kWhy, kWho, kWhere, kDoes, kHow, kOther };

const char* category_name(QuestionCategory category);
std::optional<QuestionCategory> parse_category(std::string_view name);

struct ExistenceClaim {
  std::string text;
  QuestionCategory category = QuestionCategory::kOther;
  std::string source_question;
};

// Dispatches on the first whitespace token, case-insensitively. Yes/no
// questions led by an auxiliary ("does", "is", "can", ...) are kDoes.
QuestionCategory classify_question(std::string_view question);

ExistenceClaim question_to_claim(std::string_view question);

// Lower-cased word tokens of `question` that carry content: the leading
// wh-word and its auxiliary (when the category template consumes them),
// stopwords and punctuation are removed.
std::vector<std::string> content_words(std::string_view question);

// Lower-cased alphanumeric word tokens; punctuation separates words.
std::vector<std::string> word_tokens(std::string_view text);

bool is_stopword(std::string_view lower_word);

}  // namespace entail
