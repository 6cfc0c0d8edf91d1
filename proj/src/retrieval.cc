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

#include "entail/retrieval.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "entail/claim.h"
#include "entail/common.h"

namespace entail {

using nlohmann::json;

namespace {

constexpr char kEmbeddingMagic[8] = {'E', 'N', 'T', 'E', 'M', 'B', '\0', '\0'};
constexpr std::uint32_t kEmbeddingVersion = 1;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

bool ranks_before(const ScoredPassage& a, const ScoredPassage& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

const std::set<std::string>& relevant_for(const RelevanceMap& relevant,
                                          const std::string& query_id) {
  auto it = relevant.find(query_id);
  if (it == relevant.end()) {
    throw Error(ErrorKind::kInvalidArgument,
                "query \"" + query_id + "\" is missing from the relevance map");
  }
  if (it->second.empty()) {
    throw Error(ErrorKind::kInvalidArgument,
                "query \"" + query_id + "\" has no relevant passage");
  }
  return it->second;
}

}  // namespace

ModelTextEncoder::ModelTextEncoder(const EncoderModel& model,
                                   const Tokenizer& tokenizer, std::size_t max_len)
    : model_(model),
      tokenizer_(tokenizer),
      max_len_(std::min<std::size_t>(max_len, model.config().max_len)) {}

Vector ModelTextEncoder::encode(std::string_view text) const {
  const std::vector<int> ids = tokenizer_.encode_for_model(text, max_len_);
  if (ids.size() <= 2) {
    throw Error(ErrorKind::kInvalidArgument, "cannot embed empty text");
  }
  return model_.embed(ids);
}

HashingBagEncoder::HashingBagEncoder(int dimension) : dimension_(dimension) {
  if (dimension < 1) throw Error(ErrorKind::kInvalidArgument, "dimension must be >= 1");
}

Vector HashingBagEncoder::encode(std::string_view text) const {
  Vector v = Vector::Zero(dimension_);
  for (const auto& w : word_tokens(text)) {
    const std::uint64_t h = fnv1a(w);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v(static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dimension_))) += sign;
  }
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

void EmbeddingMatrix::validate() const {
  if (values.size() != ids.size() * dim) {
    throw Error(ErrorKind::kInvalidArgument, "embedding payload does not match n x d");
  }
}

EmbeddingMatrix encode_corpus(const TextEncoder& encoder, const Corpus& corpus,
                              std::size_t batch_size) {
  if (corpus.empty()) throw Error(ErrorKind::kInvalidArgument, "empty corpus");
  if (batch_size == 0) throw Error(ErrorKind::kInvalidArgument, "batch_size must be >= 1");
  EmbeddingMatrix out;
  const auto& passages = corpus.passages();
  out.ids.reserve(passages.size());
  for (std::size_t start = 0; start < passages.size(); start += batch_size) {
    const std::size_t end = std::min(passages.size(), start + batch_size);
    for (std::size_t i = start; i < end; ++i) {
      const Vector v = encoder.encode(passages[i].body);
      if (out.ids.empty()) {
        out.dim = static_cast<std::size_t>(v.size());
        out.values.reserve(passages.size() * out.dim);
      } else if (static_cast<std::size_t>(v.size()) != out.dim) {
        throw Error(ErrorKind::kState, "encoder dimension changed at passage \"" +
                                           passages[i].id + "\"");
      }
      out.ids.push_back(passages[i].id);
      for (Eigen::Index j = 0; j < v.size(); ++j) {
        out.values.push_back(static_cast<float>(v(j)));
      }
    }
  }
  return out;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m) {
  m.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write \"" + path.string() + "\"");
  out.write(kEmbeddingMagic, sizeof kEmbeddingMagic);
  const std::uint32_t version = kEmbeddingVersion;
  const std::uint64_t n = m.rows();
  const std::uint64_t d = m.dim;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(&d), sizeof d);
  out.write(reinterpret_cast<const char*>(m.values.data()),
            static_cast<std::streamsize>(m.values.size() * sizeof(float)));
  for (const auto& id : m.ids) {
    const auto len = static_cast<std::uint32_t>(id.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
  if (!out) throw Error(ErrorKind::kIo, "write failed for \"" + path.string() + "\"");
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open \"" + path.string() + "\"");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kEmbeddingMagic, sizeof magic) != 0) {
    throw Error(ErrorKind::kParse, "\"" + path.string() + "\" is not an embedding file");
  }
  std::uint32_t version = 0;
  std::uint64_t n = 0, d = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  in.read(reinterpret_cast<char*>(&d), sizeof d);
  if (version != kEmbeddingVersion) {
    throw Error(ErrorKind::kParse, "unsupported embedding version " + std::to_string(version));
  }
  EmbeddingMatrix m;
  m.dim = d;
  m.values.resize(n * d);
  in.read(reinterpret_cast<char*>(m.values.data()),
          static_cast<std::streamsize>(m.values.size() * sizeof(float)));
  m.ids.reserve(n);
  for (std::uint64_t i = 0; i < n && in; ++i) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    std::string id(len, '\0');
    in.read(id.data(), len);
    m.ids.push_back(std::move(id));
  }
  if (!in) throw Error(ErrorKind::kParse, "truncated embedding file \"" + path.string() + "\"");
  return m;
}

double inner_product(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::kInvalidArgument,
                "dimension mismatch: " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return s;
}

std::vector<float> to_float(const Vector& v) {
  std::vector<float> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(v(i));
  return out;
}

SearchResult search(const EmbeddingMatrix& index, std::span<const float> query,
                    std::size_t k, std::string query_id) {
  if (k == 0) throw Error(ErrorKind::kInvalidArgument, "k must be >= 1");
  if (query.size() != index.dim) {
    throw Error(ErrorKind::kInvalidArgument,
                "query dimension " + std::to_string(query.size()) +
                    " does not match index dimension " + std::to_string(index.dim));
  }
  std::vector<ScoredPassage> scored;
  scored.reserve(index.rows());
  for (std::size_t i = 0; i < index.rows(); ++i) {
    scored.push_back({index.ids[i], inner_product(index.row(i), query)});
  }
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), ranks_before);
  scored.resize(take);
  return {std::move(query_id), std::move(scored)};
}

json to_json(const SearchResult& result) {
  json hits = json::array();
  for (const auto& h : result.hits) hits.push_back({{"id", h.id}, {"score", h.score}});
  return {{"query_id", result.query_id}, {"hits", std::move(hits)}};
}

SearchResult search_result_from_json(const json& j) {
  SearchResult r;
  try {
    r.query_id = j.at("query_id").get<std::string>();
    for (const auto& h : j.at("hits")) {
      r.hits.push_back({h.at("id").get<std::string>(), h.at("score").get<double>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("bad search result: ") + e.what());
  }
  return r;
}

std::optional<std::size_t> first_relevant_rank(const SearchResult& result,
                                               const std::set<std::string>& relevant) {
  for (std::size_t i = 0; i < result.hits.size(); ++i) {
    if (relevant.contains(result.hits[i].id)) return i + 1;
  }
  return std::nullopt;
}

double hits_at_k(const std::vector<SearchResult>& results,
                 const RelevanceMap& relevant, std::size_t k) {
  if (results.empty()) throw Error(ErrorKind::kInvalidArgument, "no queries to score");
  std::size_t hits = 0;
  for (const auto& r : results) {
    const auto rank = first_relevant_rank(r, relevant_for(relevant, r.query_id));
    if (rank && *rank <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

double mrr_at(const std::vector<SearchResult>& results,
              const RelevanceMap& relevant, std::size_t cutoff) {
  if (results.empty()) throw Error(ErrorKind::kInvalidArgument, "no queries to score");
  double total = 0.0;
  for (const auto& r : results) {
    const auto rank = first_relevant_rank(r, relevant_for(relevant, r.query_id));
    if (rank && *rank <= cutoff) total += 1.0 / static_cast<double>(*rank);
  }
  return total / static_cast<double>(results.size());
}

const char* relevance_mode_name(RelevanceMode mode) {
  return mode == RelevanceMode::kAnswer ? "answer" : "labeled";
}

std::optional<RelevanceMode> parse_relevance_mode(std::string_view name) {
  if (name == "answer") return RelevanceMode::kAnswer;
  if (name == "labeled") return RelevanceMode::kLabeled;
  return std::nullopt;
}

std::string normalize_answer_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::ispunct(u)) {
      out.push_back(' ');
    } else {
      out.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  return normalize_whitespace(out);
}

bool has_answer(std::string_view passage, const std::vector<std::string>& answers) {
  const std::string text = " " + normalize_answer_text(passage) + " ";
  for (const auto& a : answers) {
    const std::string needle = normalize_answer_text(a);
    if (needle.empty()) continue;
    if (text.find(" " + needle + " ") != std::string::npos) return true;
  }
  return false;
}

RelevanceMap labeled_relevance(const std::vector<QAExample>& queries) {
  RelevanceMap out;
  for (const auto& q : queries) {
    auto& set = out[q.id];
    for (const auto& p : q.positive_passages) set.insert(p.id);
  }
  return out;
}

RelevanceMap answer_relevance(const std::vector<QAExample>& queries, const Corpus& corpus) {
  RelevanceMap out;
  for (const auto& q : queries) {
    auto& set = out[q.id];
    for (const auto& p : corpus.passages()) {
      if (has_answer(p.body, q.answers)) set.insert(p.id);
    }
  }
  return out;
}

EvalReport evaluate(const std::vector<SearchResult>& results,
                    const RelevanceMap& relevant, RelevanceMode mode,
                    const std::vector<std::size_t>& hit_cutoffs,
                    const std::vector<std::size_t>& mrr_cutoffs) {
  EvalReport report;
  report.mode = mode;
  std::vector<SearchResult> scored;
  for (const auto& r : results) {
    auto it = relevant.find(r.query_id);
    if (it == relevant.end()) {
      throw Error(ErrorKind::kInvalidArgument,
                  "query \"" + r.query_id + "\" is missing from the relevance map");
    }
    if (it->second.empty()) {
      report.skipped_queries.push_back(r.query_id);
      continue;
    }
    report.first_relevant_rank.emplace_back(r.query_id,
                                            first_relevant_rank(r, it->second));
    scored.push_back(r);
  }
  report.num_queries = scored.size();
  if (scored.empty()) return report;
  for (std::size_t k : hit_cutoffs) report.hits_at_k[k] = hits_at_k(scored, relevant, k);
  for (std::size_t n : mrr_cutoffs) report.mrr_at[n] = mrr_at(scored, relevant, n);
  return report;
}

json to_json(const EvalReport& report) {
  json hits = json::object();
  for (const auto& [k, v] : report.hits_at_k) hits[std::to_string(k)] = v;
  json mrr = json::object();
  for (const auto& [n, v] : report.mrr_at) mrr[std::to_string(n)] = v;
  json ranks = json::array();
  for (const auto& [id, rank] : report.first_relevant_rank) {
    ranks.push_back({{"query_id", id},
                     {"first_relevant_rank", rank ? json(*rank) : json(nullptr)}});
  }
  return {{"relevance_mode", relevance_mode_name(report.mode)},
          {"num_queries", report.num_queries},
          {"skipped_queries", report.skipped_queries},
          {"hits_at_k", std::move(hits)},
          {"mrr_at", std::move(mrr)},
          {"per_query", std::move(ranks)}};
}

}  // namespace entail
