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

#include "entail/ingestion.h"

#include <fstream>
#include <unordered_set>

#include "entail/common.h"

namespace entail {

using nlohmann::json;

namespace {

[[noreturn]] void schema_error(std::size_t line, const std::string& field,
                               const std::string& what) {
  throw DataError(ErrorKind::kSchema, line, field,
                  "line " + std::to_string(line) + ": field \"" + field +
                      "\": " + what);
}

const json& require(const json& record, const char* field, std::size_t line) {
  if (!record.is_object()) {
    throw DataError(ErrorKind::kSchema, line, "",
                    "line " + std::to_string(line) + ": record is not an object");
  }
  auto it = record.find(field);
  if (it == record.end()) schema_error(line, field, "missing required field");
  return *it;
}

std::string require_text(const json& record, const char* field,
                         std::size_t line) {
  const json& value = require(record, field, line);
  if (!value.is_string()) schema_error(line, field, "expected a string");
  std::string text = normalize_whitespace(value.get<std::string>());
  if (text.empty()) schema_error(line, field, "must be non-empty");
  return text;
}

std::vector<PassageRecord> parse_passages(const json& record, const char* field,
                                          std::size_t line, bool required) {
  std::vector<PassageRecord> out;
  auto it = record.find(field);
  if (it == record.end()) {
    if (required) schema_error(line, field, "missing required field");
    return out;
  }
  if (!it->is_array()) schema_error(line, field, "expected an array");
  for (const json& p : *it) out.push_back(parse_passage_record(p, line, field));
  return out;
}

}  // namespace

const char* nli_label_name(NLILabel label) {
  switch (label) {
    case NLILabel::kEntail:
      return "entail";
    case NLILabel::kNeutral:
      return "neutral";
    case NLILabel::kContradict:
      return "contradict";
  }
  return "neutral";
}

std::optional<NLILabel> parse_nli_label(std::string_view text) {
  if (text == "entail" || text == "entailment") return NLILabel::kEntail;
  if (text == "neutral") return NLILabel::kNeutral;
  if (text == "contradict" || text == "contradiction") {
    return NLILabel::kContradict;
  }
  return std::nullopt;
}

Corpus::Corpus(std::vector<PassageRecord> passages)
    : passages_(std::move(passages)) {
  std::unordered_set<std::string> seen;
  for (const auto& p : passages_) {
    if (p.body.empty()) {
      throw Error(ErrorKind::kSchema, "passage \"" + p.id + "\" has empty body");
    }
    if (!seen.insert(p.id).second) {
      throw Error(ErrorKind::kSchema, "duplicate passage id \"" + p.id + "\"");
    }
  }
}

const PassageRecord* Corpus::find(std::string_view id) const {
  for (const auto& p : passages_) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

PassageRecord parse_passage_record(const json& record, std::size_t line,
                                   const std::string& field) {
  const std::string prefix = field.empty() ? "" : field + ".";
  if (!record.is_object()) schema_error(line, prefix.empty() ? "passage" : field,
                                        "passage is not an object");
  PassageRecord p;
  auto id = record.find("id");
  if (id == record.end()) schema_error(line, prefix + "id", "missing required field");
  if (id->is_string()) {
    p.id = id->get<std::string>();
  } else if (id->is_number_integer()) {
    p.id = std::to_string(id->get<long long>());
  } else {
    schema_error(line, prefix + "id", "expected a string");
  }
  if (p.id.empty()) schema_error(line, prefix + "id", "must be non-empty");
  auto title = record.find("title");
  if (title != record.end() && !title->is_null()) {
    if (!title->is_string()) schema_error(line, prefix + "title", "expected a string");
    p.title = normalize_whitespace(title->get<std::string>());
  }
  auto body = record.find("body");
  if (body == record.end()) schema_error(line, prefix + "body", "missing required field");
  if (!body->is_string()) schema_error(line, prefix + "body", "expected a string");
  p.body = normalize_whitespace(body->get<std::string>());
  if (p.body.empty()) schema_error(line, prefix + "body", "must be non-empty");
  return p;
}

QAExample parse_qa_record(const json& record, std::size_t line) {
  QAExample ex;
  ex.question = require_text(record, "question", line);
  const json& answers = require(record, "answers", line);
  if (!answers.is_array()) schema_error(line, "answers", "expected an array");
  for (const json& a : answers) {
    if (!a.is_string()) schema_error(line, "answers", "expected strings");
    ex.answers.push_back(normalize_whitespace(a.get<std::string>()));
  }
  ex.positive_passages = parse_passages(record, "positive_passages", line, true);
  ex.negative_passages = parse_passages(record, "negative_passages", line, false);
  if (auto id = record.find("id"); id != record.end()) {
    if (id->is_string()) {
      ex.id = id->get<std::string>();
    } else if (id->is_number_integer()) {
      ex.id = std::to_string(id->get<long long>());
    } else {
      schema_error(line, "id", "expected a string");
    }
  }
  for (auto it = record.begin(); it != record.end(); ++it) {
    const std::string& key = it.key();
    if (key == "id" || key == "question" || key == "answers" ||
        key == "positive_passages" || key == "negative_passages") {
      continue;
    }
    ex.metadata[key] = it.value();
  }
  return ex;
}

NLIExample parse_nli_record(const json& record, std::size_t line) {
  NLIExample ex;
  ex.premise = require_text(record, "premise", line);
  ex.hypothesis = require_text(record, "hypothesis", line);
  const json& label = require(record, "label", line);
  if (!label.is_string()) schema_error(line, "label", "expected a string");
  const std::string text = label.get<std::string>();
  auto parsed = parse_nli_label(text);
  if (!parsed) schema_error(line, "label", "unknown label \"" + text + "\"");
  ex.label = *parsed;
  return ex;
}

json to_json(const PassageRecord& passage) {
  json j = {{"id", passage.id}};
  if (passage.title) j["title"] = *passage.title;
  j["body"] = passage.body;
  return j;
}

json to_json(const QAExample& example) {
  json j = example.metadata.is_object() ? example.metadata : json::object();
  if (!example.id.empty()) j["id"] = example.id;
  j["question"] = example.question;
  j["answers"] = example.answers;
  j["positive_passages"] = json::array();
  for (const auto& p : example.positive_passages) {
    j["positive_passages"].push_back(to_json(p));
  }
  j["negative_passages"] = json::array();
  for (const auto& p : example.negative_passages) {
    j["negative_passages"].push_back(to_json(p));
  }
  return j;
}

json to_json(const NLIExample& example) {
  return {{"premise", example.premise},
          {"hypothesis", example.hypothesis},
          {"label", nli_label_name(example.label)}};
}

void for_each_json_line(
    const std::filesystem::path& path,
    const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::kIo, "cannot open \"" + path.string() + "\"");
  }
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (normalize_whitespace(text).empty()) continue;
    json record;
    try {
      record = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DataError(ErrorKind::kParse, line, "",
                      path.string() + ":" + std::to_string(line) +
                          ": malformed JSON: " + e.what());
    }
    fn(record, line);
  }
}

void write_json_lines(const std::filesystem::path& path,
                      const std::vector<json>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write \"" + path.string() + "\"");
  for (const auto& r : records) out << r.dump() << '\n';
  if (!out) throw Error(ErrorKind::kIo, "write failed for \"" + path.string() + "\"");
}

std::vector<QAExample> load_qa_dataset(const std::filesystem::path& path) {
  std::vector<QAExample> out;
  for_each_json_line(path, [&](const json& record, std::size_t line) {
    out.push_back(parse_qa_record(record, line));
    if (out.back().id.empty()) out.back().id = std::to_string(out.size() - 1);
  });
  return out;
}

std::vector<NLIExample> load_nli_dataset(const std::filesystem::path& path) {
  std::vector<NLIExample> out;
  for_each_json_line(path, [&](const json& record, std::size_t line) {
    out.push_back(parse_nli_record(record, line));
  });
  return out;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::vector<PassageRecord> passages;
  std::unordered_set<std::string> seen;
  for_each_json_line(path, [&](const json& record, std::size_t line) {
    passages.push_back(parse_passage_record(record, line));
    if (!seen.insert(passages.back().id).second) {
      throw DataError(ErrorKind::kSchema, line, "id",
                      "line " + std::to_string(line) + ": duplicate passage id \"" +
                          passages.back().id + "\"");
    }
  });
  return Corpus(std::move(passages));
}

void write_qa_dataset(const std::filesystem::path& path,
                      const std::vector<QAExample>& examples) {
  std::vector<json> records;
  records.reserve(examples.size());
  for (const auto& e : examples) records.push_back(to_json(e));
  write_json_lines(path, records);
}

void write_nli_dataset(const std::filesystem::path& path,
                       const std::vector<NLIExample>& examples) {
  std::vector<json> records;
  records.reserve(examples.size());
  for (const auto& e : examples) records.push_back(to_json(e));
  write_json_lines(path, records);
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::vector<json> records;
  records.reserve(corpus.size());
  for (const auto& p : corpus.passages()) records.push_back(to_json(p));
  write_json_lines(path, records);
}

std::vector<PassageRecord> chunk_document(std::string_view text,
                                          std::size_t words_per_chunk,
                                          std::string_view id_prefix) {
  if (words_per_chunk == 0) {
    throw Error(ErrorKind::kInvalidArgument, "words_per_chunk must be >= 1");
  }
  const std::vector<std::string> words = split_whitespace(text);
  std::vector<PassageRecord> chunks;
  for (std::size_t start = 0; start < words.size(); start += words_per_chunk) {
    const std::size_t end = std::min(words.size(), start + words_per_chunk);
    PassageRecord p;
    p.id = std::string(id_prefix) + "-" + std::to_string(chunks.size());
    for (std::size_t i = start; i < end; ++i) {
      if (i > start) p.body.push_back(' ');
      p.body += words[i];
    }
    chunks.push_back(std::move(p));
  }
  return chunks;
}

}  // namespace entail
