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

#include "entail/claim.h"

#include <algorithm>
#include <array>
#include <cctype>

#include "entail/common.h"

namespace entail {

namespace {

constexpr std::array<std::string_view, 13> kAuxiliaries = {
    "did", "do", "does", "was", "were", "is",  "are",
    "will", "can", "could", "has", "have", "had"};

constexpr std::array<std::string_view, 42> kStopwords = {
    "a",     "an",    "the",  "of",   "in",   "on",    "at",   "to",
    "for",   "by",    "with", "from", "and",  "or",    "as",   "is",
    "are",   "was",   "were", "be",   "been", "did",   "do",   "does",
    "has",   "have",  "had",  "will", "can",  "could", "it",   "its",
    "this",  "that",  "there", "what", "which", "who", "when", "where",
    "why",   "how"};

bool is_auxiliary(std::string_view lower) {
  return std::find(kAuxiliaries.begin(), kAuxiliaries.end(), lower) !=
         kAuxiliaries.end();
}

// Question with whitespace normalized and trailing ?/./! removed.
std::string strip_terminal(std::string_view question) {
  std::string q = normalize_whitespace(question);
  while (!q.empty() && (q.back() == '?' || q.back() == '.' || q.back() == '!' ||
                        q.back() == ' ')) {
    q.pop_back();
  }
  return q;
}

// Number of leading whitespace tokens the category template consumes.
std::size_t consumed_prefix(QuestionCategory category,
                            const std::vector<std::string>& words) {
  switch (category) {
    case QuestionCategory::kDoes:
    case QuestionCategory::kOther:
      return 0;
    default:
      break;
  }
  if (words.size() >= 2 && is_auxiliary(to_lower_ascii(words[1]))) return 2;
  return 1;
}

std::string_view template_prefix(QuestionCategory category) {
  switch (category) {
    case QuestionCategory::kWhen:
      return "There exists a known time when";
    case QuestionCategory::kWhy:
      return "There exists a known reason why";
    case QuestionCategory::kWho:
      return "There exists a known person who";
    case QuestionCategory::kWhere:
      return "There exists a known place where";
    case QuestionCategory::kDoes:
      return "It is known whether";
    case QuestionCategory::kHow:
      return "There exists a known way how";
    case QuestionCategory::kOther:
      return "There exists a known answer to the question:";
  }
  return "";
}

}  // namespace

const char* category_name(QuestionCategory category) {
  switch (category) {
    case QuestionCategory::kWhen:
      return "When";
    case QuestionCategory::kWhy:
      return "Why";
    case QuestionCategory::kWho:
      return "Who";
    case QuestionCategory::kWhere:
      return "Where";
    case QuestionCategory::kDoes:
      return "Does";
    case QuestionCategory::kHow:
      return "How";
    case QuestionCategory::kOther:
      return "Other";
  }
  return "Other";
}

std::optional<QuestionCategory> parse_category(std::string_view name) {
  for (auto c : {QuestionCategory::kWhen, QuestionCategory::kWhy,
                 QuestionCategory::kWho, QuestionCategory::kWhere,
                 QuestionCategory::kDoes, QuestionCategory::kHow,
                 QuestionCategory::kOther}) {
    if (name == category_name(c)) return c;
  }
  return std::nullopt;
}

bool is_stopword(std::string_view lower_word) {
  return std::find(kStopwords.begin(), kStopwords.end(), lower_word) !=
         kStopwords.end();
}

QuestionCategory classify_question(std::string_view question) {
  const auto words = split_whitespace(question);
  if (words.empty()) return QuestionCategory::kOther;
  std::string first = to_lower_ascii(words.front());
  while (!first.empty() && !std::isalnum(static_cast<unsigned char>(first.back()))) {
    first.pop_back();
  }
  if (first == "when") return QuestionCategory::kWhen;
  if (first == "why") return QuestionCategory::kWhy;
  if (first == "who") return QuestionCategory::kWho;
  if (first == "where") return QuestionCategory::kWhere;
  if (first == "how") return QuestionCategory::kHow;
  if (is_auxiliary(first)) return QuestionCategory::kDoes;
  return QuestionCategory::kOther;
}

ExistenceClaim question_to_claim(std::string_view question) {
  ExistenceClaim claim;
  claim.source_question = normalize_whitespace(question);
  claim.category = classify_question(claim.source_question);

  const std::string stripped = strip_terminal(claim.source_question);
  const auto words = split_whitespace(stripped);
  const std::size_t skip = consumed_prefix(claim.category, words);

  claim.text = template_prefix(claim.category);
  for (std::size_t i = skip; i < words.size(); ++i) {
    claim.text.push_back(' ');
    claim.text += words[i];
  }
  claim.text.push_back('.');
  return claim;
}

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::vector<std::string> content_words(std::string_view question) {
  const std::string normalized = normalize_whitespace(question);
  const QuestionCategory category = classify_question(normalized);
  const auto words = split_whitespace(strip_terminal(normalized));
  const std::size_t skip = consumed_prefix(category, words);
  std::vector<std::string> out;
  for (std::size_t i = skip; i < words.size(); ++i) {
    for (auto& w : word_tokens(words[i])) {
      if (!is_stopword(w)) out.push_back(std::move(w));
    }
  }
  return out;
}

}  // namespace entail
