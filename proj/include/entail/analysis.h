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


// Score-separation studies: how well an NLI scorer or a retriever separates
// premises that support a claim from ones that do not.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "entail/common.h"
#include "entail/ingestion.h"
#include "entail/retrieval.h"
#include "json.hpp"

namespace entail {

// Probability in [0,1] that `premise` entails `hypothesis`.
class NLIScorer {
 public:
  virtual ~NLIScorer() = default;
  virtual double score(std::string_view premise, std::string_view hypothesis) const = 0;
};

// Share of the hypothesis' content words found in the premise. Deterministic
// and dependency-free; used in tests and as a fallback.
class LexicalNLIScorer : public NLIScorer {
 public:
  double score(std::string_view premise, std::string_view hypothesis) const override;
};

// Looks scores up in a table produced offline by an external classifier.
// File format: JSON lines {"premise": ..., "hypothesis": ..., "score": p}.
class ScoreTableNLIScorer : public NLIScorer {
 public:
  ScoreTableNLIScorer() = default;
  explicit ScoreTableNLIScorer(const std::filesystem::path& path);
  void add(std::string premise, std::string hypothesis, double score);
  // Throws kMissingArtifact for a pair not in the table.
  double score(std::string_view premise, std::string_view hypothesis) const override;
  std::size_t size() const { return table_.size(); }

 private:
  std::map<std::pair<std::string, std::string>, double> table_;
};

class FunctionNLIScorer : public NLIScorer {
 public:
  using Fn = std::function<double(std::string_view, std::string_view)>;
  explicit FunctionNLIScorer(Fn fn) : fn_(std::move(fn)) {}
  double score(std::string_view premise, std::string_view hypothesis) const override {
    return fn_(premise, hypothesis);
  }

 private:
  Fn fn_;
};

// Raised when a scorer or encoder fails; carries the offending pair.
class ScoringError : public Error {
 public:
  ScoringError(std::string premise, std::string hypothesis, const std::string& cause);
  const std::string& premise() const { return premise_; }
  const std::string& hypothesis() const { return hypothesis_; }

 private:
  std::string premise_;
  std::string hypothesis_;
};

struct RelationTriple {
  std::string hypothesis;
  std::string entail_premise;
  std::string neutral_premise;
  std::string irrelevant_premise;

  void validate() const;
};

struct ScoreGroup {
  std::string name;
  std::vector<double> scores;
  double mean() const;
  double stddev() const;  // population
};

struct SeparationReport {
  std::vector<ScoreGroup> groups;
  // "a-b" -> mean(a) - mean(b)
  std::map<std::string, double> mean_gaps;
  std::vector<double> bin_edges;              // bins + 1 edges
  std::map<std::string, std::vector<std::size_t>> histogram;  // per group

  const ScoreGroup& group(std::string_view name) const;
  double gap(std::string_view a, std::string_view b) const;
};

// Builds the report from labeled samples. Gaps cover every ordered pair in
// group order (earlier minus later).
SeparationReport make_report(std::vector<ScoreGroup> groups, std::size_t bins = 20);

// Groups "positive" and "negative": each example's claim against each of its
// positive and negative passages.
SeparationReport nli_separation_study(const NLIScorer& scorer,
                                      const std::vector<QAExample>& examples,
                                      std::size_t bins = 20);

// Groups "entail", "neutral", "irrelevant": sim(query(hypothesis),
// passage(premise)).
SeparationReport retriever_separation_study(const TextEncoder& query_encoder,
                                            const TextEncoder& passage_encoder,
                                            const std::vector<RelationTriple>& triples,
                                            std::size_t bins = 20);

// One triple per hypothesis that has both an entailed and a neutral premise
// in `nli`. Irrelevant premises are drawn uniformly from corpus passages that
// are not premises of any NLI pair.
std::vector<RelationTriple> build_relation_triples(const std::vector<NLIExample>& nli,
                                                   const Corpus& corpus,
                                                   std::uint64_t seed);

std::vector<RelationTriple> load_relation_triples(const std::filesystem::path& path);
void write_relation_triples(const std::filesystem::path& path,
                            const std::vector<RelationTriple>& triples);

nlohmann::json to_json(const SeparationReport& report);
// Long format: group,index,score
std::string to_csv(const SeparationReport& report);

}  // namespace entail
