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


#include "entail/analysis.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "entail/claim.h"

namespace entail {

using nlohmann::json;

namespace {

void check_probability(double p, std::string_view premise, std::string_view hypothesis) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ScoringError(std::string(premise), std::string(hypothesis),
                       "score " + std::to_string(p) + " outside [0,1]");
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

double LexicalNLIScorer::score(std::string_view premise, std::string_view hypothesis) const {
  std::vector<std::string> wanted;
  for (auto& w : word_tokens(hypothesis)) {
    if (!is_stopword(w)) wanted.push_back(std::move(w));
  }
  if (wanted.empty()) return 0.0;
  const auto words = word_tokens(premise);
  const std::set<std::string> have(words.begin(), words.end());
  std::size_t found = 0;
  for (const auto& w : wanted) found += have.contains(w) ? 1 : 0;
  return static_cast<double>(found) / static_cast<double>(wanted.size());
}

ScoreTableNLIScorer::ScoreTableNLIScorer(const std::filesystem::path& path) {
  for_each_json_line(path, [&](const json& j, std::size_t line) {
    try {
      add(j.at("premise").get<std::string>(), j.at("hypothesis").get<std::string>(),
          j.at("score").get<double>());
    } catch (const json::exception& e) {
      throw DataError(ErrorKind::kSchema, line, "", std::string("bad score record: ") + e.what());
    }
  });
}

void ScoreTableNLIScorer::add(std::string premise, std::string hypothesis, double score) {
  check_probability(score, premise, hypothesis);
  table_[{std::move(premise), std::move(hypothesis)}] = score;
}

double ScoreTableNLIScorer::score(std::string_view premise,
                                  std::string_view hypothesis) const {
  auto it = table_.find({std::string(premise), std::string(hypothesis)});
  if (it == table_.end()) {
    throw Error(ErrorKind::kMissingArtifact, "no precomputed NLI score for this pair");
  }
  return it->second;
}

ScoringError::ScoringError(std::string premise, std::string hypothesis,
                           const std::string& cause)
    : Error(ErrorKind::kState, "scoring failed for premise \"" + premise +
                                   "\" / hypothesis \"" + hypothesis + "\": " + cause),
      premise_(std::move(premise)),
      hypothesis_(std::move(hypothesis)) {}

void RelationTriple::validate() const {
  if (hypothesis.empty() || entail_premise.empty() || neutral_premise.empty() ||
      irrelevant_premise.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "relation triple has an empty field");
  }
}

double ScoreGroup::mean() const {
  if (scores.empty()) return 0.0;
  double s = 0.0;
  for (double v : scores) s += v;
  return s / static_cast<double>(scores.size());
}

double ScoreGroup::stddev() const {
  if (scores.empty()) return 0.0;
  const double mu = mean();
  double s = 0.0;
  for (double v : scores) s += (v - mu) * (v - mu);
  return std::sqrt(s / static_cast<double>(scores.size()));
}

const ScoreGroup& SeparationReport::group(std::string_view name) const {
  for (const auto& g : groups) {
    if (g.name == name) return g;
  }
  throw Error(ErrorKind::kInvalidArgument, "no group named " + std::string(name));
}

double SeparationReport::gap(std::string_view a, std::string_view b) const {
  return group(a).mean() - group(b).mean();
}

SeparationReport make_report(std::vector<ScoreGroup> groups, std::size_t bins) {
  if (bins == 0) throw Error(ErrorKind::kInvalidArgument, "bins must be >= 1");
  SeparationReport report;
  report.groups = std::move(groups);
  for (std::size_t i = 0; i < report.groups.size(); ++i) {
    for (std::size_t j = i + 1; j < report.groups.size(); ++j) {
      const auto& a = report.groups[i];
      const auto& b = report.groups[j];
      report.mean_gaps[a.name + "-" + b.name] = a.mean() - b.mean();
    }
  }
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const auto& g : report.groups) {
    for (double v : g.scores) {
      lo = any ? std::min(lo, v) : v;
      hi = any ? std::max(hi, v) : v;
      any = true;
    }
  }
  if (!any) return report;
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) {
    report.bin_edges.push_back(b == bins ? hi : lo + width * static_cast<double>(b));
  }
  for (const auto& g : report.groups) {
    std::vector<std::size_t> counts(bins, 0);
    for (double v : g.scores) {
      auto b = static_cast<std::size_t>((v - lo) / width);
      counts[std::min(b, bins - 1)]++;
    }
    report.histogram[g.name] = std::move(counts);
  }
  return report;
}

SeparationReport nli_separation_study(const NLIScorer& scorer,
                                      const std::vector<QAExample>& examples,
                                      std::size_t bins) {
  ScoreGroup positive{"positive", {}};
  ScoreGroup negative{"negative", {}};
  auto run = [&](const std::string& premise, const std::string& hypothesis,
                 ScoreGroup& group) {
    double p = 0.0;
    try {
      p = scorer.score(premise, hypothesis);
    } catch (const ScoringError&) {
      throw;
    } catch (const std::exception& e) {
      throw ScoringError(premise, hypothesis, e.what());
    }
    check_probability(p, premise, hypothesis);
    group.scores.push_back(p);
  };
  for (const auto& ex : examples) {
    const std::string claim = question_to_claim(ex.question).text;
    for (const auto& p : ex.positive_passages) run(p.body, claim, positive);
    for (const auto& p : ex.negative_passages) run(p.body, claim, negative);
  }
  return make_report({std::move(positive), std::move(negative)}, bins);
}

SeparationReport retriever_separation_study(const TextEncoder& query_encoder,
                                            const TextEncoder& passage_encoder,
                                            const std::vector<RelationTriple>& triples,
                                            std::size_t bins) {
  if (query_encoder.dimension() != passage_encoder.dimension()) {
    throw Error(ErrorKind::kInvalidArgument, "query and passage encoders differ in dimension");
  }
  ScoreGroup entail{"entail", {}};
  ScoreGroup neutral{"neutral", {}};
  ScoreGroup irrelevant{"irrelevant", {}};
  for (const auto& t : triples) {
    t.validate();
    Vector q;
    try {
      q = query_encoder.encode(t.hypothesis);
    } catch (const std::exception& e) {
      throw ScoringError("", t.hypothesis, e.what());
    }
    auto run = [&](const std::string& premise, ScoreGroup& group) {
      try {
        group.scores.push_back(q.dot(passage_encoder.encode(premise)));
      } catch (const std::exception& e) {
        throw ScoringError(premise, t.hypothesis, e.what());
      }
    };
    run(t.entail_premise, entail);
    run(t.neutral_premise, neutral);
    run(t.irrelevant_premise, irrelevant);
  }
  return make_report({std::move(entail), std::move(neutral), std::move(irrelevant)}, bins);
}

std::vector<RelationTriple> build_relation_triples(const std::vector<NLIExample>& nli,
                                                   const Corpus& corpus,
                                                   std::uint64_t seed) {
  struct Slots {
    std::string entail, neutral;
  };
  std::vector<std::string> order;
  std::map<std::string, Slots> by_hypothesis;
  std::set<std::string> premises;
  for (const auto& ex : nli) {
    premises.insert(ex.premise);
    if (ex.label == NLILabel::kContradict) continue;
    auto [it, fresh] = by_hypothesis.try_emplace(ex.hypothesis);
    if (fresh) order.push_back(ex.hypothesis);
    std::string& slot = ex.label == NLILabel::kEntail ? it->second.entail : it->second.neutral;
    if (slot.empty()) slot = ex.premise;
  }
  std::vector<const PassageRecord*> pool;
  for (const auto& p : corpus.passages()) {
    if (!premises.contains(p.body)) pool.push_back(&p);
  }
  if (pool.empty()) {
    throw Error(ErrorKind::kInvalidArgument,
                "corpus has no passage outside the NLI premises to sample from");
  }
  Rng rng(seed);
  std::vector<RelationTriple> out;
  for (const auto& h : order) {
    const Slots& s = by_hypothesis.at(h);
    if (s.entail.empty() || s.neutral.empty()) continue;
    out.push_back({h, s.entail, s.neutral, pool[rng.below(pool.size())]->body});
  }
  return out;
}

std::vector<RelationTriple> load_relation_triples(const std::filesystem::path& path) {
  std::vector<RelationTriple> out;
  for_each_json_line(path, [&](const json& j, std::size_t line) {
    try {
      RelationTriple t{j.at("hypothesis").get<std::string>(),
                       j.at("entail_premise").get<std::string>(),
                       j.at("neutral_premise").get<std::string>(),
                       j.at("irrelevant_premise").get<std::string>()};
      t.validate();
      out.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw DataError(ErrorKind::kSchema, line, "", std::string("bad triple: ") + e.what());
    } catch (const Error& e) {
      throw DataError(ErrorKind::kSchema, line, "", e.what());
    }
  });
  return out;
}

void write_relation_triples(const std::filesystem::path& path,
                            const std::vector<RelationTriple>& triples) {
  std::vector<json> lines;
  for (const auto& t : triples) {
    lines.push_back({{"hypothesis", t.hypothesis},
                     {"entail_premise", t.entail_premise},
                     {"neutral_premise", t.neutral_premise},
                     {"irrelevant_premise", t.irrelevant_premise}});
  }
  write_json_lines(path, lines);
}

json to_json(const SeparationReport& report) {
  json groups = json::array();
  for (const auto& g : report.groups) {
    groups.push_back({{"name", g.name},
                      {"n", g.scores.size()},
                      {"mean", g.mean()},
                      {"std", g.stddev()},
                      {"histogram", report.histogram.contains(g.name)
                                        ? json(report.histogram.at(g.name))
                                        : json::array()}});
  }
  return {{"groups", std::move(groups)},
          {"mean_gaps", report.mean_gaps},
          {"bin_edges", report.bin_edges}};
}

std::string to_csv(const SeparationReport& report) {
  std::string out = "group,index,score\n";
  for (const auto& g : report.groups) {
    for (std::size_t i = 0; i < g.scores.size(); ++i) {
      out += g.name + "," + std::to_string(i) + "," + format_double(g.scores[i]) + "\n";
    }
  }
  return out;
}

}  // namespace entail
