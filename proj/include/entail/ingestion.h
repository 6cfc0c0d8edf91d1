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

// Data model and JSON-lines readers for QA-retrieval and NLI datasets.
//
// QA record:
//   {"question": str, "answers": [str],
//    "positive_passages": [{"id": str, "title": str?, "body": str}],
//    "negative_passages": [...]}
// An optional "id" names the query; any other keys are carried through
// untouched in `metadata` (e.g. negative provenance).
//
// NLI record: {"premise": str, "hypothesis": str, "label": str}
// Corpus record: {"id": str, "title": str?, "body": str}

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace entail {

struct PassageRecord {
  std::string id;
  std::optional<std::string> title;
  std::string body;

  friend bool operator==(const PassageRecord&, const PassageRecord&) = default;
};

struct QAExample {
  std::string id;
  std::string question;
  std::vector<std::string> answers;
  std::vector<PassageRecord> positive_passages;
  std::vector<PassageRecord> negative_passages;
  nlohmann::json metadata = nlohmann::json::object();

  friend bool operator==(const QAExample&, const QAExample&) = default;
};

enum class NLILabel { kEntail, kNeutral, kContradict };

const char* nli_label_name(NLILabel label);
// Accepts the canonical names and the long forms used by SNLI/MNLI.
std::optional<NLILabel> parse_nli_label(std::string_view text);

struct NLIExample {
  std::string premise;
  std::string hypothesis;
  NLILabel label = NLILabel::kNeutral;

  friend bool operator==(const NLIExample&, const NLIExample&) = default;
};

// Ordered passage collection with unique ids.
class Corpus {
 public:
  Corpus() = default;
  // Throws on duplicate ids or empty bodies.
  explicit Corpus(std::vector<PassageRecord> passages);

  const std::vector<PassageRecord>& passages() const { return passages_; }
  std::size_t size() const { return passages_.size(); }
  bool empty() const { return passages_.empty(); }
  const PassageRecord* find(std::string_view id) const;

 private:
  std::vector<PassageRecord> passages_;
};

// Record-level conversion. `line` is only used to locate errors.
QAExample parse_qa_record(const nlohmann::json& record, std::size_t line);
NLIExample parse_nli_record(const nlohmann::json& record, std::size_t line);
PassageRecord parse_passage_record(const nlohmann::json& record,
                                   std::size_t line,
                                   const std::string& field = "");

nlohmann::json to_json(const PassageRecord& passage);
nlohmann::json to_json(const QAExample& example);
nlohmann::json to_json(const NLIExample& example);

// Queries without an "id" field get their 0-based record index as id.
std::vector<QAExample> load_qa_dataset(const std::filesystem::path& path);
std::vector<NLIExample> load_nli_dataset(const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

void write_qa_dataset(const std::filesystem::path& path,
                      const std::vector<QAExample>& examples);
void write_nli_dataset(const std::filesystem::path& path,
                       const std::vector<NLIExample>& examples);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);

// Splits whitespace-normalized text into passages of `words_per_chunk`
// words; only the last chunk may be shorter. Ids are `<id_prefix>-<index>`.
std::vector<PassageRecord> chunk_document(std::string_view text,
                                          std::size_t words_per_chunk,
                                          std::string_view id_prefix = "chunk");

// Iterates the non-blank lines of a JSON-lines file, handing each parsed
// value and its 1-based line number to `fn`.
void for_each_json_line(
    const std::filesystem::path& path,
    const std::function<void(const nlohmann::json&, std::size_t)>& fn);

void write_json_lines(const std::filesystem::path& path,
                      const std::vector<nlohmann::json>& records);

}  // namespace entail
