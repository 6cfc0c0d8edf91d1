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

#include "entail/prompt.h"

#include "entail/claim.h"

namespace entail {

using nlohmann::json;

namespace {

PromptedText join(const EntailmentPair& pair, std::string_view connective) {
  PromptedText out;
  out.text.reserve(pair.premise().size() + connective.size() +
                   pair.hypothesis().size());
  out.text += pair.premise();
  out.premise = {0, out.text.size()};
  out.text += connective;
  const std::size_t hyp_begin = out.text.size();
  out.text += pair.hypothesis();
  out.hypothesis = {hyp_begin, out.text.size()};
  return out;
}

[[noreturn]] void bad_record(std::size_t line, const std::string& field,
                             const std::string& what) {
  throw DataError(ErrorKind::kSchema, line, field,
                  "line " + std::to_string(line) + ": field \"" + field + "\": " + what);
}

std::string string_field(const json& record, const char* field, std::size_t line) {
  auto it = record.find(field);
  if (it == record.end()) bad_record(line, field, "missing required field");
  if (!it->is_string()) bad_record(line, field, "expected a string");
  return it->get<std::string>();
}

Span span_field(const json& record, const char* field, std::size_t line) {
  auto it = record.find(field);
  if (it == record.end()) bad_record(line, field, "missing required field");
  if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number_unsigned() ||
      !(*it)[1].is_number_unsigned()) {
    bad_record(line, field, "expected [begin, end]");
  }
  return {(*it)[0].get<std::size_t>(), (*it)[1].get<std::size_t>()};
}

}  // namespace

const char* origin_name(PairOrigin origin) {
  return origin == PairOrigin::kNli ? "nli" : "retrieval";
}

const char* strategy_name(PromptStrategy strategy) {
  return strategy == PromptStrategy::kPrompt ? "prompt" : "concat";
}

std::optional<PromptStrategy> parse_strategy(std::string_view name) {
  if (name == "prompt") return PromptStrategy::kPrompt;
  if (name == "concat") return PromptStrategy::kConcat;
  return std::nullopt;
}

EntailmentPair::EntailmentPair(std::string premise, std::string hypothesis,
                               PairOrigin origin)
    : premise_(std::move(premise)),
      hypothesis_(std::move(hypothesis)),
      origin_(origin) {
  if (premise_.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "entailment pair: empty premise");
  }
  if (hypothesis_.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "entailment pair: empty hypothesis");
  }
}

std::vector<EntailmentPair> unify(const QAExample& example, HypothesisForm form) {
  if (example.positive_passages.empty()) {
    throw Error(ErrorKind::kInvalidArgument,
                "query \"" + example.id + "\" has no positive passage");
  }
  const std::string hypothesis = form == HypothesisForm::kClaim
                                     ? question_to_claim(example.question).text
                                     : example.question;
  std::vector<EntailmentPair> pairs;
  pairs.reserve(example.positive_passages.size());
  for (const auto& p : example.positive_passages) {
    pairs.emplace_back(p.body, hypothesis, PairOrigin::kRetrieval);
  }
  return pairs;
}

std::vector<EntailmentPair> unify(const NLIExample& example) {
  if (example.label != NLILabel::kEntail) return {};
  return {EntailmentPair(example.premise, example.hypothesis, PairOrigin::kNli)};
}

std::vector<EntailmentPair> unify_all(const std::vector<QAExample>& qa,
                                      const std::vector<NLIExample>& nli,
                                      HypothesisForm form) {
  std::vector<EntailmentPair> pool;
  for (const auto& ex : qa) {
    if (ex.positive_passages.empty()) continue;
    for (auto& p : unify(ex, form)) pool.push_back(std::move(p));
  }
  for (const auto& ex : nli) {
    for (auto& p : unify(ex)) pool.push_back(std::move(p));
  }
  return pool;
}

PromptedText assemble(const EntailmentPair& pair) {
  return join(pair, kEntailConnective);
}

PromptedText assemble_concat(const EntailmentPair& pair) {
  return join(pair, kSeparatorConnective);
}

PromptedText assemble(const EntailmentPair& pair, PromptStrategy strategy) {
  return strategy == PromptStrategy::kPrompt ? assemble(pair)
                                             : assemble_concat(pair);
}

json to_json(const EntailmentPair& pair) {
  return {{"premise", pair.premise()},
          {"hypothesis", pair.hypothesis()},
          {"origin", origin_name(pair.origin())}};
}

EntailmentPair pair_from_json(const json& record, std::size_t line) {
  if (!record.is_object()) bad_record(line, "pair", "record is not an object");
  std::string premise = string_field(record, "premise", line);
  std::string hypothesis = string_field(record, "hypothesis", line);
  PairOrigin origin = PairOrigin::kNli;
  if (auto it = record.find("origin"); it != record.end()) {
    const std::string name = it->is_string() ? it->get<std::string>() : "";
    if (name == "retrieval") {
      origin = PairOrigin::kRetrieval;
    } else if (name != "nli") {
      bad_record(line, "origin", "expected \"nli\" or \"retrieval\"");
    }
  }
  if (premise.empty()) bad_record(line, "premise", "must be non-empty");
  if (hypothesis.empty()) bad_record(line, "hypothesis", "must be non-empty");
  return EntailmentPair(std::move(premise), std::move(hypothesis), origin);
}

json to_json(const PromptedText& prompted) {
  return {{"text", prompted.text},
          {"premise_span", {prompted.premise.begin, prompted.premise.end}},
          {"hypothesis_span", {prompted.hypothesis.begin, prompted.hypothesis.end}}};
}

PromptedText prompted_from_json(const json& record, std::size_t line) {
  if (!record.is_object()) bad_record(line, "prompt", "record is not an object");
  PromptedText out;
  out.text = string_field(record, "text", line);
  out.premise = span_field(record, "premise_span", line);
  out.hypothesis = span_field(record, "hypothesis_span", line);
  const std::size_t n = out.text.size();
  if (out.premise.empty() || out.premise.end > n) {
    bad_record(line, "premise_span", "empty or out of bounds");
  }
  if (out.hypothesis.empty() || out.hypothesis.end > n) {
    bad_record(line, "hypothesis_span", "empty or out of bounds");
  }
  if (out.premise.intersects(out.hypothesis.begin, out.hypothesis.end)) {
    bad_record(line, "hypothesis_span", "overlaps the premise span");
  }
  return out;
}

}  // namespace entail
