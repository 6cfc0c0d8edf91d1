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


// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "entail/claim.h"
#include "entail/finetune.h"
#include "entail/hash.h"
#include "entail/masking.h"
#include "entail/pipeline.h"
#include "entail/prompt.h"
#include "entail/synthetic.h"
#include "entail/trainer.h"
#include "gradcheck.h"
#include "oracles.h"
#include "search_cases.h"

using namespace entail;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Collects failures while a criterion runs; keeps the first few messages.
class Outcome {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (messages_.size() < 3) messages_.push_back(what);
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool passed() const { return failures_ == 0; }
  std::string summary() const {
    std::string out;
    for (const auto& n : notes_) out += (out.empty() ? "" : "; ") + n;
    if (failures_) {
      out += (out.empty() ? "" : "; ") + std::to_string(failures_) + " failed check(s): ";
      for (std::size_t i = 0; i < messages_.size(); ++i) out += (i ? " | " : "") + messages_[i];
    }
    return out;
  }

 private:
  int failures_ = 0;
  std::vector<std::string> messages_;
  std::vector<std::string> notes_;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

struct Criterion {
  int number;
  std::string title;
  double budget_seconds;  // infinity when no runtime bound applies
  std::function<void(Outcome&)> run;
};

// ---------------------------------------------------------------- 1

void prompt_golden(Outcome& out) {
  struct Golden {
    const char* premise;
    const char* hypothesis;
    const char* expected;
  };
  static const Golden kGolden[] = {
      {"A man is playing a guitar.", "A person plays music.",
       "A man is playing a guitar. entails that A person plays music."},
      {"The Berlin Wall fell in 1989.", "There exists a known time when the Berlin Wall fall.",
       "The Berlin Wall fell in 1989. entails that There exists a known time when the Berlin Wall fall."},
      {"Two dogs run.", "Animals move.", "Two dogs run. entails that Animals move."},
      {"x", "y", "x entails that y"},
      {"Rain fell all day", "it was wet", "Rain fell all day entails that it was wet"},
      {"She said it entails that nothing", "a claim",
       "She said it entails that nothing entails that a claim"},
      {"premise", "entails that", "premise entails that entails that"},
      {"  padded  ", "hyp", "  padded   entails that hyp"},
      {"Tabs\there", "new\nline", "Tabs\there entails that new\nline"},
      {"Café au lait.", "Coffee exists.", "Café au lait. entails that Coffee exists."},
      {"1 + 1 = 2", "arithmetic holds", "1 + 1 = 2 entails that arithmetic holds"},
      {"The cat [SEP] sat.", "a cat sat", "The cat [SEP] sat. entails that a cat sat"},
      {"Paris is the capital of France.", "There exists a known place where Paris is.",
       "Paris is the capital of France. entails that There exists a known place where Paris is."},
      {"Ada wrote the notes.", "There exists a known person who wrote the notes.",
       "Ada wrote the notes. entails that There exists a known person who wrote the notes."},
      {"It snowed, so school closed.", "There exists a known reason why school closed.",
       "It snowed, so school closed. entails that There exists a known reason why school closed."},
      {"Bees fly by flapping.", "There exists a known way how bees fly.",
       "Bees fly by flapping. entails that There exists a known way how bees fly."},
      {"The moon spins slowly.", "It is known whether does the moon spin.",
       "The moon spins slowly. entails that It is known whether does the moon spin."},
      {"Water boils at 100 C.", "There exists a known answer to the question: what is the boiling point.",
       "Water boils at 100 C. entails that There exists a known answer to the question: what is the boiling point."},
      {"\"Quoted\" text.", "'single' quotes", "\"Quoted\" text. entails that 'single' quotes"},
      {"ends with space ", " starts with space", "ends with space  entails that  starts with space"},
  };
  int exact = 0;
  for (const auto& g : kGolden) {
    const PromptedText p = assemble(EntailmentPair(g.premise, g.hypothesis, PairOrigin::kNli));
    const bool ok = p.text == g.expected && p.premise_text() == g.premise &&
                    p.hypothesis_text() == g.hypothesis;
    out.expect(ok, std::string("golden mismatch for premise \"") + g.premise + "\"");
    exact += ok;
  }

  oracle::Gen gen(101);
  static const std::vector<std::string> kNoise = {" entails that ", "entails", " [SEP] ", "\t", "  ",
                                                  "that", "é", "?"};
  int round_trips = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::string premise = gen.coin(0.3) ? gen.ragged(gen.uniform_int(1, 12)) : gen.sentence(1, 20);
    std::string hypothesis = gen.sentence(1, 10);
    if (gen.coin(0.3)) premise += gen.pick(kNoise);
    if (gen.coin(0.3)) hypothesis = gen.pick(kNoise) + hypothesis;
    const auto strategy = gen.coin() ? PromptStrategy::kPrompt : PromptStrategy::kConcat;
    const EntailmentPair pair(premise, hypothesis, PairOrigin::kRetrieval);
    const PromptedText p = assemble(pair, strategy);
    const std::string_view connective =
        strategy == PromptStrategy::kPrompt ? kEntailConnective : kSeparatorConnective;
    const bool ok = p.premise_text() == premise && p.hypothesis_text() == hypothesis &&
                    p.text == premise + std::string(connective) + hypothesis &&
                    p.premise.end <= p.hypothesis.begin &&
                    prompted_from_json(to_json(p)) == p;
    out.expect(ok, "span round trip failed on trial " + std::to_string(trial));
    round_trips += ok;
  }
  out.note(std::to_string(exact) + "/20 golden strings exact, " + std::to_string(round_trips) +
           "/1000 span round trips");
}

// ---------------------------------------------------------------- 2

// Words of the question that are not the leading wh-word or the auxiliary
// right after it. Independent of the library's stopword handling: every
// such word, stopword or not, must survive into the claim.
std::vector<std::string> surviving_words(const std::string& question) {
  static const std::set<std::string> kWh = {"when", "why", "who", "where", "how"};
  static const std::set<std::string> kAux = {"did", "do", "does", "is", "was", "are", "were",
                                             "can", "could", "will", "would", "has", "have",
                                             "had", "should", "shall", "may", "might", "must"};
  std::vector<std::string> words;
  std::string w;
  for (char ch : question + " ") {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else if (!w.empty()) {
      words.push_back(w);
      w.clear();
    }
  }
  std::size_t skip = 0;
  if (!words.empty() && kWh.contains(words[0])) {
    skip = 1;
    if (words.size() > 1 && kAux.contains(words[1])) skip = 2;
  }
  return {words.begin() + static_cast<std::ptrdiff_t>(skip), words.end()};
}

std::set<std::string> lower_words(const std::string& text) {
  std::set<std::string> out;
  for (const auto& w : surviving_words("x " + text)) out.insert(w);
  std::string first;
  for (char ch : text) {
    if (!std::isalnum(static_cast<unsigned char>(ch))) break;
    first.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  if (!first.empty()) out.insert(first);
  return out;
}

void claim_transformation(Outcome& out) {
  const ExistenceClaim when = question_to_claim("when did the Berlin Wall fall?");
  out.expect(when.category == QuestionCategory::kWhen, "When example misclassified");
  out.expect(when.text == "There exists a known time when the Berlin Wall fall.",
             "When example gave \"" + when.text + "\"");

  struct Opener {
    std::string text;
    QuestionCategory category;
  };
  const std::vector<Opener> openers = {
      {"When did", QuestionCategory::kWhen},   {"when was", QuestionCategory::kWhen},
      {"Why is", QuestionCategory::kWhy},      {"why did", QuestionCategory::kWhy},
      {"Who", QuestionCategory::kWho},         {"who has", QuestionCategory::kWho},
      {"Where was", QuestionCategory::kWhere}, {"where", QuestionCategory::kWhere},
      {"Does", QuestionCategory::kDoes},       {"did", QuestionCategory::kDoes},
      {"Is", QuestionCategory::kDoes},         {"can", QuestionCategory::kDoes},
      {"How do", QuestionCategory::kHow},      {"how", QuestionCategory::kHow},
      {"What is", QuestionCategory::kOther},   {"which", QuestionCategory::kOther},
      {"name the", QuestionCategory::kOther},  {"In what year did", QuestionCategory::kOther},
  };
  oracle::Gen gen(202);
  std::set<QuestionCategory> seen;
  int preserved = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    // Cycle categories first so all seven are covered, then pick freely.
    const Opener& o = trial < static_cast<int>(openers.size())
                          ? openers[static_cast<std::size_t>(trial)]
                          : gen.pick(openers);
    std::string question = o.text + " " + gen.sentence(1, 9);
    if (gen.coin(0.7)) question += "?";
    const ExistenceClaim c = question_to_claim(question);
    seen.insert(c.category);
    out.expect(c.category == o.category, "category mismatch for \"" + question + "\"");
    out.expect(!c.text.empty() && c.text.find('?') == std::string::npos,
               "claim is interrogative: \"" + c.text + "\"");
    const std::set<std::string> claim_words = lower_words(c.text);
    bool ok = true;
    for (const auto& w : surviving_words(question)) ok = ok && claim_words.contains(w);
    out.expect(ok, "content lost from \"" + question + "\" -> \"" + c.text + "\"");
    preserved += ok;
  }
  out.expect(seen.size() == 7, "only " + std::to_string(seen.size()) + " categories produced");
  out.note("When example exact; " + std::to_string(preserved) + "/1000 claims preserve content; " +
           std::to_string(seen.size()) + "/7 categories");
}

// ---------------------------------------------------------------- 3

void masking_statistics(Outcome& out) {
  oracle::Gen gen(303);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<std::string> texts = {"entails that"};
  for (int i = 0; i < 10000; ++i) {
    pairs.emplace_back(gen.sentence(2, 20), gen.sentence(1, 10));
    if (i < 2000) {
      texts.push_back(pairs.back().first);
      texts.push_back(pairs.back().second);
    }
  }
  const Tokenizer tok = Tokenizer::build(texts, 20000);

  const MaskConfig config{0.8, MaskScope::kHypothesisOnly, 0};
  Rng rng(derive_seed(3, "acceptance-mask"));
  std::size_t maskable = 0, masked = 0, instances = 0, outside = 0;
  for (const auto& [premise, hypothesis] : pairs) {
    const PromptedText p = assemble(EntailmentPair(premise, hypothesis, PairOrigin::kNli));
    const TokenizedPrompt t = tokenize_with_span(p, tok, kDefaultMaxLen, TruncationPolicy::kPremiseTail);
    const std::size_t eligible = maskable_positions(t, config.scope, tok).size();
    maskable += eligible;
    ++instances;
    try {
      const PromptedInstance inst = mask_hypothesis(t, config, rng, tok);
      masked += inst.mask_positions.size();
      for (std::size_t pos : inst.mask_positions) {
        if (!t.hypothesis.contains(pos)) ++outside;
      }
    } catch (const InstanceRejected&) {
      // Every eligible token drew "keep": zero masked, still counted.
    }
  }
  const double rate = static_cast<double>(masked) / static_cast<double>(maskable);
  out.expect(maskable >= 10000, "only " + std::to_string(maskable) + " maskable tokens");
  out.expect(rate >= 0.78 && rate <= 0.82, "pooled rate " + fmt(rate) + " outside [0.78,0.82]");
  out.expect(instances >= 10000, "only " + std::to_string(instances) + " instances");
  out.expect(outside == 0, std::to_string(outside) + " masks outside the hypothesis span");
  out.note("pooled rate " + fmt(rate) + " over " + std::to_string(maskable) +
           " maskable tokens; " + std::to_string(outside) + " masks outside the span in " +
           std::to_string(instances) + " instances");
}

// ---------------------------------------------------------------- 4

void loss_oracles(Outcome& out) {
  auto inst = [](std::vector<std::size_t> pos, std::vector<int> labels, std::size_t len) {
    PromptedInstance i;
    i.token_ids.assign(len, 4);
    i.mask_positions = std::move(pos);
    i.labels = std::move(labels);
    i.hypothesis = {1, len};
    i.attention_length = len;
    return i;
  };
  double worst = 0.0;
  auto close = [&](double got, double want, const std::string& what) {
    worst = std::max(worst, std::abs(got - want));
    out.expect(std::abs(got - want) <= 1e-9, what + ": " + fmt(got, 17) + " vs " + fmt(want, 17));
  };

  Matrix certain = Matrix::Constant(3, 4, -1e300);
  certain(1, 2) = 0.0;
  close(mlm_loss(certain, inst({1}, {2}, 3)), 0.0, "certain prediction");
  const Matrix uniform = Matrix::Constant(3, 4, std::log(0.25));
  close(mlm_loss(uniform, inst({1, 2}, {0, 3}, 3)), 2 * std::log(4.0), "uniform over four, two masks");
  Matrix half = Matrix::Constant(2, 4, std::log(0.5 / 3));
  half(1, 1) = std::log(0.5);
  close(mlm_loss(half, inst({1}, {1}, 2)), std::log(2.0), "probability one half");

  const std::vector<double> zeros = {0.0, 0.0};
  const double e = std::exp(1.0);
  close(nll_contrastive_loss(1.0, zeros), -std::log(e / (e + 2)), "-ln(e/(e+2))");
  out.expect(std::abs(nll_contrastive_loss(1.0, zeros) - 0.5514) < 5e-5, "not about 0.5514");
  for (int m = 1; m <= 16; ++m) {
    for (double s : {-3.0, 0.0, 0.25, 7.0}) {
      const std::vector<double> same(static_cast<std::size_t>(m), s);
      close(nll_contrastive_loss(s, same), std::log(m + 1.0), "ln(m+1), m=" + std::to_string(m));
    }
  }
  oracle::Gen gen(404);
  for (int trial = 0; trial < 1000; ++trial) {
    const double pos = gen.uniform(-5, 5);
    std::vector<double> negs(static_cast<std::size_t>(gen.uniform_int(1, 12)));
    for (double& n : negs) n = gen.uniform(-5, 5);
    const double base = nll_contrastive_loss(pos, negs);
    const double shift = gen.uniform(-20, 20);
    std::vector<double> shifted = negs;
    for (double& n : shifted) n += shift;
    close(nll_contrastive_loss(pos + shift, shifted), base, "shift invariance");
  }
  out.note("largest deviation " + fmt(worst, 3) + " (tolerance 1e-9)");
}

// ---------------------------------------------------------------- 5

void gradient_check(Outcome& out) {
  EncoderConfig config;
  config.vocab_size = 100;
  config.hidden = 32;
  config.layers = 2;
  config.heads = 2;
  config.max_len = 32;
  double worst = 0.0;
  std::string where;
  int checked = 0;
  for (unsigned seed : {1u, 2u}) {
    EncoderModel model(config, seed);
    if (seed == 2) {
      // Larger weights: saturated softmax and curved GELU regions.
      std::mt19937 engine(seed);
      std::normal_distribution<double> noise(0.0, 0.3);
      model.params().for_each([&](const std::string&, Matrix& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += noise(engine);
      });
    }
    std::mt19937 engine(seed + 10);
    PromptedInstance inst;
    for (int i = 0; i < 12; ++i) inst.token_ids.push_back(std::uniform_int_distribution<int>(5, 99)(engine));
    inst.hypothesis = {6, 11};
    inst.mask_positions = {6, 8, 10};
    for (std::size_t p : inst.mask_positions) {
      inst.labels.push_back(inst.token_ids[p]);
      inst.token_ids[p] = 4;
    }
    inst.attention_length = inst.token_ids.size();
    Parameters grads = Parameters::zeros(config);
    accumulate_mlm_gradient(model, inst, 1.0, grads);
    auto loss = [&] { return mlm_loss(model.mlm_log_probs(inst.token_ids), inst); };
    const auto r = oracle::grad_check(model.params(), grads, loss, 100, seed + 20);
    checked += r.checked;
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      where = r.worst;
    }
  }
  out.expect(worst < 1e-3, "relative error " + fmt(worst) + " at " + where);
  out.note(std::to_string(checked) + " coordinates over two weight scales, max relative error " +
           fmt(worst, 3) + " (at " + where + ")");
}

// ---------------------------------------------------------------- 6

void overfit_check(Outcome& out) {
  SyntheticConfig sc;
  sc.people = 12;
  sc.seed = 606;
  const SyntheticWorld world = generate_world(sc);
  std::vector<EntailmentPair> pairs = unify_all(world.qa_train, world.nli, HypothesisForm::kClaim);
  pairs.erase(pairs.begin() + 32, pairs.end());
  std::vector<std::string> texts = {"entails that"};
  for (const auto& p : pairs) {
    texts.push_back(p.premise());
    texts.push_back(p.hypothesis());
  }
  const Tokenizer tok = Tokenizer::build(texts, 4000);
  EncoderConfig ec;
  ec.vocab_size = static_cast<int>(tok.size());
  ec.hidden = 32;
  ec.layers = 2;
  ec.heads = 2;
  ec.max_len = 64;
  EncoderModel model(ec, 6);
  TuneConfig tc;
  tc.learning_rate = 1e-3;
  tc.warmup_steps = 10;
  tc.batch_size = 8;
  tc.epochs = 200;
  tc.max_len = 64;
  tc.seed = 6;
  const TrainLog log = entailment_tune(model, tok, pairs, PromptStrategy::kPrompt, tc);
  const auto hit = std::find_if(log.epoch_mean_loss.begin(), log.epoch_mean_loss.end(),
                                [](double l) { return l < 0.1; });
  out.expect(log.instances == 32, std::to_string(log.instances) + " instances survived masking");
  out.expect(hit != log.epoch_mean_loss.end(),
             "loss still " + fmt(log.epoch_mean_loss.back()) + " after 200 epochs");
  std::string note = "epoch-mean loss " + fmt(log.epoch_mean_loss.front()) + " -> " +
                     fmt(log.epoch_mean_loss.back());
  if (hit != log.epoch_mean_loss.end()) {
    note += ", first below 0.1 at epoch " +
            std::to_string(hit - log.epoch_mean_loss.begin() + 1);
  }
  out.note(note);
}

// ---------------------------------------------------------------- 7

void retrieval_exactness(Outcome& out) {
  oracle::Gen gen(707);
  int exact = 0, with_ties = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = oracle::random_search_case(gen, 200, 64);
    const auto got = search(c.matrix(), c.query, c.k, "q");
    const bool ok = oracle::matches_brute_force(c, got);
    out.expect(ok, "search differs from brute force on instance " + std::to_string(trial));
    exact += ok;
    const auto all = oracle::brute_force_topk(c.ids, c.rows, c.query, c.ids.size());
    for (std::size_t i = 1; i < all.size(); ++i) {
      if (all[i].score == all[i - 1].score) {
        ++with_ties;
        break;
      }
    }
  }
  int metrics = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = oracle::random_ranking_case(gen);
    bool ok = true;
    for (std::size_t k : {1, 2, 5, 10, 20, 50, 100}) {
      ok = ok && hits_at_k(c.results, c.relevant, k) == oracle::hits_at(c.ranked, c.relevant_sets, k);
      ok = ok && mrr_at(c.results, c.relevant, k) == oracle::mrr_at(c.ranked, c.relevant_sets, k);
    }
    out.expect(ok, "metric mismatch on configuration " + std::to_string(trial));
    metrics += ok;
  }
  out.expect(with_ties > 0, "no instance contained a tie");
  out.note(std::to_string(exact) + "/100 search instances exact (" + std::to_string(with_ties) +
           " with ties), " + std::to_string(metrics) + "/100 metric configurations exact");
}

// ---------------------------------------------------------------- 8, 9, 10

fs::path scratch_root() {
  static const fs::path root = [] {
    std::string pattern = (fs::temp_directory_path() / "entail-acceptance-XXXXXX").string();
    if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    return fs::path(pattern);
  }();
  return root;
}

json world_paths(const fs::path& dir) {
  return {{"qa_train", (dir / "qa_train.jsonl").string()},
          {"qa_eval", (dir / "qa_heldout.jsonl").string()},
          {"nli", (dir / "nli.jsonl").string()},
          {"corpus", (dir / "corpus.jsonl").string()},
          {"output_dir", (dir / "runs").string()}};
}

PipelineConfig config_from(const json& doc) {
  ConfigResult r = validate_config_json(doc, fs::current_path());
  if (!r.ok()) throw ConfigError(r.violations);
  return *r.config;
}

double hits_at_1(const PipelineConfig& c) {
  const json report = json::parse(read_file(run_directory(c) / "eval_report.json"));
  return report.at("hits_at_k").at("1").get<double>();
}

void direction_of_effect(Outcome& out) {
  int wins = 0;
  double gap_sum = 0.0;
  std::string per_seed;
  for (int seed = 1; seed <= 3; ++seed) {
    const fs::path dir = scratch_root() / ("effect-" + std::to_string(seed));
    SyntheticConfig sc;
    sc.people = 120;
    sc.seed = static_cast<std::uint64_t>(100 + seed);
    write_world(dir, generate_world(sc));

    json doc = {
        {"seed", seed},
        {"paths", world_paths(dir)},
        {"model", {{"hidden", 64}, {"layers", 2}, {"heads", 4}, {"max_len", 64}, {"max_vocab", 4000}}},
        {"tune", {{"learning_rate", 1e-3}, {"warmup_steps", 20}, {"batch_size", 16}, {"epochs", 10}, {"max_len", 64}}},
        {"finetune", {{"learning_rate", 3e-4}, {"warmup_steps", 20}, {"batch_size", 16}, {"epochs", 40}, {"max_len", 64}}},
        {"eval", {{"relevance", "labeled"}}},
    };
    const std::vector<std::string> stages = {"init", "transform", "assemble", "tune",
                                             "finetune", "index", "search", "eval"};
    const PipelineConfig tuned = config_from(doc);
    run_pipeline(tuned, stages);
    doc["finetune"]["from"] = "init";
    const PipelineConfig baseline = config_from(doc);
    run_pipeline(baseline, {"init", "finetune", "index", "search", "eval"});

    const double with = hits_at_1(tuned), without = hits_at_1(baseline);
    wins += with > without;
    gap_sum += with - without;
    per_seed += (per_seed.empty() ? "" : ", ") + std::string("seed ") + std::to_string(seed) +
                ": " + fmt(with, 3) + " vs " + fmt(without, 3);
  }
  out.expect(wins >= 2, "entailment tuning ahead on only " + std::to_string(wins) + "/3 seeds");
  out.note("hits@1 tuned+finetuned vs finetuned only: " + per_seed + "; ahead on " +
           std::to_string(wins) + "/3, mean gap " + fmt(gap_sum / 3, 3));
}

json toy_doc(const fs::path& dir, int people) {
  SyntheticConfig sc;
  sc.people = people;
  sc.seed = 9;
  write_world(dir, generate_world(sc));
  return {
      {"seed", 9},
      {"paths", world_paths(dir)},
      {"model", {{"hidden", 16}, {"layers", 1}, {"heads", 2}, {"max_len", 48}}},
      {"tune", {{"learning_rate", 1e-3}, {"warmup_steps", 5}, {"batch_size", 8}, {"epochs", 2}, {"max_len", 48}}},
      {"finetune", {{"learning_rate", 1e-3}, {"warmup_steps", 5}, {"batch_size", 8}, {"epochs", 2}, {"max_len", 48}}},
  };
}

void ablation_parity(Outcome& out) {
  const fs::path dir = scratch_root() / "ablation";
  const json base = toy_doc(dir, 16);
  std::set<std::string> ids, manifests;
  int runs = 0;
  for (const char* strategy : {"prompt", "concat"}) {
    for (double beta : {0.2, 0.8}) {
      for (const char* scope : {"hypothesis_only", "full_prompt"}) {
        json doc = base;
        doc["prompt"] = {{"strategy", strategy}};
        doc["mask"] = {{"beta", beta}, {"scope", scope}};
        const PipelineConfig c = config_from(doc);
        const RunManifest m = run_pipeline(c, default_stages(c));
        const fs::path run = run_directory(c);
        const json snapshot = json::parse(read_file(run / "manifest.json")).at("config");
        const std::string tag = std::string(strategy) + "/" + fmt(beta) + "/" + scope;
        out.expect(snapshot.at("mask").at("beta") == beta && snapshot.at("mask").at("scope") == scope &&
                       snapshot.at("prompt").at("strategy") == strategy,
                   tag + ": manifest does not record the axis values");
        out.expect(m.stages.size() == default_stages(c).size(), tag + ": missing stage records");
        out.expect(fs::is_regular_file(run / "eval_report.json"), tag + ": no eval report");
        const std::string prompts = read_file(run / "prompts.jsonl");
        const bool has_sep = prompts.find("[SEP]") != std::string::npos;
        out.expect(has_sep == (std::string(strategy) == "concat"), tag + ": prompts do not match strategy");
        ids.insert(m.run_id);
        manifests.insert(sha256_hex(read_file(run / "manifest.json")));
        ++runs;
      }
    }
  }
  out.expect(ids.size() == 8 && manifests.size() == 8, "manifests are not all distinct");
  out.note(std::to_string(runs) + " configurations (strategy x beta x scope) ran from config; " +
           std::to_string(ids.size()) + " distinct run ids, " + std::to_string(manifests.size()) +
           " distinct manifests");
}

void end_to_end_determinism(Outcome& out) {
  const fs::path config = fs::path(ENTAIL_SOURCE_DIR) / "data" / "synthetic" / "config.json";
  std::vector<std::string> reports;
  for (const char* name : {"first", "second"}) {
    const fs::path output = scratch_root() / "determinism" / name;
    const PipelineConfig c = load_config(config, {{"ENTAIL_PATHS__OUTPUT_DIR", output.string()}});
    run_pipeline(c, default_stages(c));
    reports.push_back(read_file(run_directory(c) / "eval_report.json"));
  }
  out.expect(!reports[0].empty() && reports[0] == reports[1], "eval reports differ");
  out.note("two fresh runs of the bundled config: eval_report.json " +
           std::string(reports[0] == reports[1] ? "byte-identical" : "different") + " (sha256 " +
           sha256_hex(reports[0]).substr(0, 12) + ")");
}

}  // namespace

int main(int argc, char** argv) {
  constexpr double kNoBound = std::numeric_limits<double>::infinity();
  const std::vector<Criterion> criteria = {
      {1, "prompt golden strings and span round trip", 1, prompt_golden},
      {2, "claim transformation", 5, claim_transformation},
      {3, "masking statistics", 10, masking_statistics},
      {4, "loss oracles", kNoBound, loss_oracles},
      {5, "gradient check", 120, gradient_check},
      {6, "overfit check", 300, overfit_check},
      {7, "retrieval exactness", 30, retrieval_exactness},
      {8, "direction of effect", 1200, direction_of_effect},
      {9, "ablation harness parity", 1800, ablation_parity},
      {10, "end-to-end determinism", kNoBound, end_to_end_determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.contains(c.number)) continue;
    Outcome outcome;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.run(outcome);
    } catch (const std::exception& e) {
      outcome.expect(false, std::string("exception: ") + e.what());
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = seconds < c.budget_seconds;
    const bool pass = outcome.passed() && in_time;
    failed += !pass;
    std::string timing = fmt(seconds, 3) + " s";
    if (std::isfinite(c.budget_seconds)) {
      timing += in_time ? " < " : " OVER ";
      timing += fmt(c.budget_seconds) + " s";
    }
    std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << c.number << ": " << c.title
              << " [" << timing << "] " << outcome.summary() << std::endl;
  }
  std::error_code ec;
  fs::remove_all(scratch_root(), ec);
  return failed == 0 ? 0 : 1;
}
