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

// Corpus encoding, exact inner-product search and ranking metrics.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "entail/encoder.h"
#include "entail/ingestion.h"
#include "entail/tokenizer.h"
#include "json.hpp"

namespace entail {

// Anything that maps text to a fixed-size dense vector.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual Vector encode(std::string_view text) const = 0;
  virtual int dimension() const = 0;
};

// [CLS] pooling over an EncoderModel. Holds references; both must outlive it.
class ModelTextEncoder : public TextEncoder {
 public:
  ModelTextEncoder(const EncoderModel& model, const Tokenizer& tokenizer,
                   std::size_t max_len = 256);
  // Throws kInvalidArgument for text with no tokens.
  Vector encode(std::string_view text) const override;
  int dimension() const override { return model_.hidden(); }

 private:
  const EncoderModel& model_;
  const Tokenizer& tokenizer_;
  std::size_t max_len_;
};

// Signed feature hashing of lower-cased word tokens, L2-normalized. A purely
// lexical reference encoder.
class HashingBagEncoder : public TextEncoder {
 public:
  explicit HashingBagEncoder(int dimension = 256);
  Vector encode(std::string_view text) const override;
  int dimension() const override { return dimension_; }

 private:
  int dimension_;
};

struct EmbeddingMatrix {
  std::vector<std::string> ids;
  std::size_t dim = 0;
  std::vector<float> values;  // row-major, ids.size() x dim

  std::size_t rows() const { return ids.size(); }
  std::span<const float> row(std::size_t i) const {
    return {values.data() + i * dim, dim};
  }
  // Throws unless rows, ids and payload agree.
  void validate() const;
};

EmbeddingMatrix encode_corpus(const TextEncoder& encoder, const Corpus& corpus,
                              std::size_t batch_size = 32);

// Binary layout, little-endian:
//   "ENTEMB\0\0" | u32 version | u64 n | u64 d | n*d float32 (row-major)
//   | n x (u32 length, bytes) id table
void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m);
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);

// Inner product accumulated in double, left to right.
double inner_product(std::span<const float> a, std::span<const float> b);
std::vector<float> to_float(const Vector& v);

struct ScoredPassage {
  std::string id;
  double score = 0.0;
  friend bool operator==(const ScoredPassage&, const ScoredPassage&) = default;
};

struct SearchResult {
  std::string query_id;
  std::vector<ScoredPassage> hits;  // descending score, ties by ascending id
};

// Exact top-k. k larger than the corpus returns every passage.
SearchResult search(const EmbeddingMatrix& index, std::span<const float> query,
                    std::size_t k, std::string query_id = "");

nlohmann::json to_json(const SearchResult& result);
SearchResult search_result_from_json(const nlohmann::json& j);

using RelevanceMap = std::map<std::string, std::set<std::string>>;

// Every result's query must appear in `relevant` with a non-empty set.
double hits_at_k(const std::vector<SearchResult>& results,
                 const RelevanceMap& relevant, std::size_t k);
double mrr_at(const std::vector<SearchResult>& results,
              const RelevanceMap& relevant, std::size_t cutoff);
// 1-based rank of the first relevant hit.
std::optional<std::size_t> first_relevant_rank(const SearchResult& result,
                                               const std::set<std::string>& relevant);

enum class RelevanceMode { kAnswer, kLabeled };

const char* relevance_mode_name(RelevanceMode mode);
std::optional<RelevanceMode> parse_relevance_mode(std::string_view name);

// Lower-case, punctuation to spaces, collapsed whitespace.
std::string normalize_answer_text(std::string_view text);
// True when some normalized answer occurs in the normalized passage on
// word boundaries.
bool has_answer(std::string_view passage, const std::vector<std::string>& answers);

RelevanceMap labeled_relevance(const std::vector<QAExample>& queries);
RelevanceMap answer_relevance(const std::vector<QAExample>& queries, const Corpus& corpus);

struct EvalReport {
  RelevanceMode mode = RelevanceMode::kLabeled;
  std::size_t num_queries = 0;
  // Queries with no relevant passage at all; excluded from every metric.
  std::vector<std::string> skipped_queries;
  std::map<std::size_t, double> hits_at_k;
  std::map<std::size_t, double> mrr_at;
  std::vector<std::pair<std::string, std::optional<std::size_t>>> first_relevant_rank;
};

inline const std::vector<std::size_t> kDefaultHitCutoffs = {1, 5, 20, 50, 100};
inline const std::vector<std::size_t> kDefaultMrrCutoffs = {10, 100};

EvalReport evaluate(const std::vector<SearchResult>& results,
                    const RelevanceMap& relevant, RelevanceMode mode,
                    const std::vector<std::size_t>& hit_cutoffs = kDefaultHitCutoffs,
                    const std::vector<std::size_t>& mrr_cutoffs = kDefaultMrrCutoffs);

nlohmann::json to_json(const EvalReport& report);

}  // namespace entail
