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


#include "entail/pipeline.h"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <set>

#include "entail/analysis.h"
#include "entail/claim.h"
#include "entail/hash.h"
#include "entail/ingestion.h"
#include "entail/tokenizer.h"

extern char** environ;

namespace entail {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

namespace {

const char* truncation_name(TruncationPolicy p) {
  return p == TruncationPolicy::kRight ? "right" : "premise_tail";
}

const char* hypothesis_name(HypothesisForm f) {
  return f == HypothesisForm::kQuestion ? "question" : "claim";
}

const char* start_name(FinetuneStart s) {
  return s == FinetuneStart::kInit ? "init" : "tuned";
}

json optional_path(const std::optional<fs::path>& p) {
  return p ? json(p->string()) : json(nullptr);
}

// Collects violations while reading one JSON document.
class Reader {
 public:
  explicit Reader(std::vector<std::string>& violations) : violations_(violations) {}

  void fail(const std::string& where, const std::string& message) {
    violations_.push_back(where + ": " + message);
  }

  // The object at `key` (or an empty one), after checking for unknown keys.
  json section(const json& doc, const std::string& key,
               const std::set<std::string>& allowed) {
    if (!doc.contains(key) || doc.at(key).is_null()) return json::object();
    const json& s = doc.at(key);
    if (!s.is_object()) {
      fail(key, "must be an object");
      return json::object();
    }
    for (const auto& [k, _] : s.items()) {
      if (!allowed.contains(k)) fail(key + "." + k, "unknown key");
    }
    return s;
  }

  template <typename T>
  void number(const json& s, const std::string& where, const char* key, T& out) {
    if (!s.contains(key) || s.at(key).is_null()) return;
    const json& v = s.at(key);
    const std::string name = where.empty() ? std::string(key) : where + "." + key;
    if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) return fail(name, "must be a number");
      out = v.get<T>();
    } else {
      if (!v.is_number_integer()) return fail(name, "must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
          return fail(name, "must be non-negative");
        }
      }
      out = v.get<T>();
    }
  }

  void flag(const json& s, const std::string& where, const char* key, bool& out) {
    if (!s.contains(key) || s.at(key).is_null()) return;
    if (!s.at(key).is_boolean()) return fail(where + "." + key, "must be true or false");
    out = s.at(key).get<bool>();
  }

  std::optional<std::string> text(const json& s, const std::string& where, const char* key) {
    if (!s.contains(key) || s.at(key).is_null()) return std::nullopt;
    if (!s.at(key).is_string()) {
      fail(where + "." + key, "must be a string");
      return std::nullopt;
    }
    return s.at(key).get<std::string>();
  }

  void cutoffs(const json& s, const std::string& where, const char* key,
               std::vector<std::size_t>& out) {
    if (!s.contains(key) || s.at(key).is_null()) return;
    const json& v = s.at(key);
    const std::string name = where + "." + key;
    if (!v.is_array() || v.empty()) return fail(name, "must be a non-empty array");
    std::vector<std::size_t> values;
    for (const auto& e : v) {
      if (!e.is_number_unsigned() || e.get<std::size_t>() == 0) {
        return fail(name, "cutoffs must be positive integers");
      }
      values.push_back(e.get<std::size_t>());
    }
    out = std::move(values);
  }

 private:
  std::vector<std::string>& violations_;
};

std::string lower(std::string s) { return to_lower_ascii(s); }

void apply_overrides(json& doc, const EnvMap& env, std::vector<std::string>& violations) {
  for (const auto& [name, value] : env) {
    if (!name.starts_with(kEnvPrefix)) continue;
    std::vector<std::string> keys;
    std::string rest = name.substr(kEnvPrefix.size());
    for (std::size_t pos; (pos = rest.find("__")) != std::string::npos;) {
      keys.push_back(lower(rest.substr(0, pos)));
      rest = rest.substr(pos + 2);
    }
    keys.push_back(lower(rest));
    json* node = &doc;
    bool ok = true;
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
      json& child = (*node)[keys[i]];
      if (child.is_null()) child = json::object();
      if (!child.is_object()) {
        violations.push_back(name + ": " + keys[i] + " is not a section");
        ok = false;
        break;
      }
      node = &child;
    }
    if (!ok) continue;
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::exception&) {
      parsed = value;
    }
    json& leaf = (*node)[keys.back()];
    if (leaf.is_object() || leaf.is_array() || parsed.is_object() || parsed.is_array()) {
      violations.push_back(name + ": only scalar values can be overridden");
      continue;
    }
    leaf = std::move(parsed);
  }
}

}  // namespace

std::uint64_t PipelineConfig::stage_seed(std::string_view stage) const {
  return derive_seed(seed, stage);
}

json to_json(const PipelineConfig& c) {
  json paths = {{"qa_train", c.paths.qa_train.string()},
                {"qa_eval", c.paths.qa_eval.string()},
                {"nli", optional_path(c.paths.nli)},
                {"corpus", c.paths.corpus.string()},
                {"output_dir", c.paths.output_dir.string()},
                {"vocab", optional_path(c.paths.vocab)},
                {"init_checkpoint", optional_path(c.paths.init_checkpoint)},
                {"nli_scores", optional_path(c.paths.nli_scores)},
                {"triples", optional_path(c.paths.triples)}};
  json model = {{"hidden", c.model.hidden},
                {"layers", c.model.layers},
                {"heads", c.model.heads},
                {"intermediate", c.model.intermediate},
                {"max_len", c.model.max_len},
                {"max_vocab", c.max_vocab}};
  json pretrain = {{"epochs", c.pretrain.epochs},
                   {"mask_rate", c.pretrain.mask_rate},
                   {"learning_rate", c.pretrain.learning_rate},
                   {"batch_size", c.pretrain.batch_size},
                   {"warmup_steps", c.pretrain.warmup_steps}};
  json tune = {{"learning_rate", c.tune.learning_rate},
               {"warmup_steps", c.tune.warmup_steps},
               {"batch_size", c.tune.batch_size},
               {"epochs", c.tune.epochs},
               {"weight_decay", c.tune.weight_decay},
               {"adam_beta1", c.tune.adam_beta1},
               {"adam_beta2", c.tune.adam_beta2},
               {"adam_epsilon", c.tune.adam_epsilon},
               {"max_grad_norm", c.tune.max_grad_norm},
               {"max_len", c.tune.max_len},
               {"truncation", truncation_name(c.tune.truncation)},
               {"save_every_epoch", c.save_every_epoch}};
  const FinetuneConfig& f = c.finetune;
  json finetune = {{"from", start_name(c.finetune_from)},
                   {"epochs", f.epochs},
                   {"learning_rate", f.learning_rate},
                   {"batch_size", f.batch_size},
                   {"negatives_per_query", f.negatives_per_query},
                   {"warmup_steps", f.warmup_steps},
                   {"weight_decay", f.weight_decay},
                   {"adam_beta1", f.adam_beta1},
                   {"adam_beta2", f.adam_beta2},
                   {"adam_epsilon", f.adam_epsilon},
                   {"max_grad_norm", f.max_grad_norm},
                   {"max_len", f.max_len}};
  json eval = {{"relevance", relevance_mode_name(c.eval.relevance)},
               {"hits_at", c.eval.hits_at},
               {"mrr_at", c.eval.mrr_at},
               {"top_k", c.eval.top_k}};
  return {{"seed", c.seed},
          {"paths", std::move(paths)},
          {"model", std::move(model)},
          {"pretrain", std::move(pretrain)},
          {"prompt", {{"strategy", strategy_name(c.strategy)},
                      {"hypothesis", hypothesis_name(c.hypothesis)}}},
          {"mask", {{"beta", c.tune.mask.beta}, {"scope", scope_name(c.tune.mask.scope)}}},
          {"tune", std::move(tune)},
          {"finetune", std::move(finetune)},
          {"eval", std::move(eval)},
          {"analysis", {{"bins", c.analysis_bins}}}};
}

ConfigError::ConfigError(std::vector<std::string> violations)
    : Error(ErrorKind::kConfig,
            [&] {
              std::string msg = "invalid configuration";
              for (const auto& v : violations) msg += "\n  " + v;
              return msg;
            }()),
      violations_(std::move(violations)) {}

EnvMap environment_overrides() {
  EnvMap out;
  for (char** e = environ; e && *e; ++e) {
    std::string_view entry(*e);
    if (!entry.starts_with(kEnvPrefix)) continue;
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    out.emplace(std::string(entry.substr(0, eq)), std::string(entry.substr(eq + 1)));
  }
  return out;
}

ConfigResult validate_config_json(json doc, const fs::path& base_dir, const EnvMap& env) {
  ConfigResult result;
  std::vector<std::string>& errors = result.violations;
  if (!doc.is_object()) {
    errors.push_back("config: top level must be an object");
    return result;
  }
  apply_overrides(doc, env, errors);
  Reader r(errors);
  PipelineConfig c;

  static const std::set<std::string> kTop = {"seed",   "paths", "model",    "pretrain",
                                             "prompt", "mask",  "tune",     "finetune",
                                             "eval",   "analysis"};
  for (const auto& [k, _] : doc.items()) {
    if (!kTop.contains(k)) r.fail(k, "unknown key");
  }
  r.number(doc, "", "seed", c.seed);

  // paths
  const json paths = r.section(doc, "paths",
                               {"qa_train", "qa_eval", "nli", "corpus", "output_dir", "vocab",
                                "init_checkpoint", "nli_scores", "triples"});
  auto resolve = [&](const std::string& s) {
    fs::path p(s);
    if (p.is_relative()) p = base_dir / p;
    return p.lexically_normal();
  };
  auto input_path = [&](const char* key, bool required) -> std::optional<fs::path> {
    const auto s = r.text(paths, "paths", key);
    if (!s) {
      if (required) r.fail(std::string("paths.") + key, "is required");
      return std::nullopt;
    }
    fs::path p = resolve(*s);
    if (!fs::is_regular_file(p)) {
      r.fail(std::string("paths.") + key, "file not found: " + p.string());
    }
    return p;
  };
  if (auto p = input_path("qa_train", true)) c.paths.qa_train = *p;
  if (auto p = input_path("qa_eval", true)) c.paths.qa_eval = *p;
  if (auto p = input_path("corpus", true)) c.paths.corpus = *p;
  c.paths.nli = input_path("nli", false);
  c.paths.vocab = input_path("vocab", false);
  c.paths.init_checkpoint = input_path("init_checkpoint", false);
  c.paths.nli_scores = input_path("nli_scores", false);
  c.paths.triples = input_path("triples", false);
  if (auto s = r.text(paths, "paths", "output_dir")) {
    c.paths.output_dir = resolve(*s);
    if (fs::exists(c.paths.output_dir) && !fs::is_directory(c.paths.output_dir)) {
      r.fail("paths.output_dir", "exists and is not a directory");
    }
  } else {
    r.fail("paths.output_dir", "is required");
  }

  // model
  const json model = r.section(doc, "model",
                               {"hidden", "layers", "heads", "intermediate", "max_len",
                                "max_vocab"});
  r.number(model, "model", "hidden", c.model.hidden);
  r.number(model, "model", "layers", c.model.layers);
  r.number(model, "model", "heads", c.model.heads);
  r.number(model, "model", "intermediate", c.model.intermediate);
  r.number(model, "model", "max_len", c.model.max_len);
  r.number(model, "model", "max_vocab", c.max_vocab);
  if (c.model.hidden < 1) r.fail("model.hidden", "must be >= 1");
  if (c.model.layers < 1) r.fail("model.layers", "must be >= 1");
  if (c.model.heads < 1 || (c.model.hidden >= 1 && c.model.hidden % c.model.heads != 0)) {
    r.fail("model.heads", "must be >= 1 and divide model.hidden");
  }
  if (c.model.intermediate < 0) r.fail("model.intermediate", "must be >= 0");
  if (c.model.max_len < 4) r.fail("model.max_len", "must be >= 4");
  if (c.max_vocab < 16) r.fail("model.max_vocab", "must be >= 16");

  // pretrain
  const json pre = r.section(doc, "pretrain", {"epochs", "mask_rate", "learning_rate",
                                               "batch_size", "warmup_steps"});
  r.number(pre, "pretrain", "epochs", c.pretrain.epochs);
  r.number(pre, "pretrain", "mask_rate", c.pretrain.mask_rate);
  r.number(pre, "pretrain", "learning_rate", c.pretrain.learning_rate);
  r.number(pre, "pretrain", "batch_size", c.pretrain.batch_size);
  r.number(pre, "pretrain", "warmup_steps", c.pretrain.warmup_steps);
  if (c.pretrain.epochs < 0) r.fail("pretrain.epochs", "must be >= 0");
  if (!(c.pretrain.mask_rate > 0.0 && c.pretrain.mask_rate <= 1.0)) {
    r.fail("pretrain.mask_rate", "must lie in (0,1]");
  }
  if (!(c.pretrain.learning_rate > 0.0)) r.fail("pretrain.learning_rate", "must be positive");
  if (c.pretrain.batch_size < 1) r.fail("pretrain.batch_size", "must be >= 1");
  if (c.pretrain.warmup_steps < 0) r.fail("pretrain.warmup_steps", "must be >= 0");

  // prompt
  const json prompt = r.section(doc, "prompt", {"strategy", "hypothesis"});
  if (auto s = r.text(prompt, "prompt", "strategy")) {
    if (auto v = parse_strategy(*s)) {
      c.strategy = *v;
    } else {
      r.fail("prompt.strategy", "must be \"prompt\" or \"concat\"");
    }
  }
  // The concatenation ablation pairs passages with the raw question unless
  // told otherwise.
  c.hypothesis = c.strategy == PromptStrategy::kConcat ? HypothesisForm::kQuestion
                                                       : HypothesisForm::kClaim;
  if (auto s = r.text(prompt, "prompt", "hypothesis")) {
    if (*s == "claim") {
      c.hypothesis = HypothesisForm::kClaim;
    } else if (*s == "question") {
      c.hypothesis = HypothesisForm::kQuestion;
    } else {
      r.fail("prompt.hypothesis", "must be \"claim\" or \"question\"");
    }
  }

  // mask
  const json mask = r.section(doc, "mask", {"beta", "scope"});
  r.number(mask, "mask", "beta", c.tune.mask.beta);
  if (!(c.tune.mask.beta >= 0.0 && c.tune.mask.beta <= 1.0)) {
    r.fail("mask.beta", "beta must lie in [0,1]");
  }
  if (auto s = r.text(mask, "mask", "scope")) {
    if (auto v = parse_scope(*s)) {
      c.tune.mask.scope = *v;
    } else {
      r.fail("mask.scope", "must be \"hypothesis_only\" or \"full_prompt\"");
    }
  }

  // shared optimizer block checks
  auto check_optimizer = [&](const std::string& where, double lr, int warmup, double wd,
                             double b1, double b2, double eps, double clip, int batch,
                             int epochs) {
    if (!(lr > 0.0)) r.fail(where + ".learning_rate", "must be positive");
    if (warmup < 0) r.fail(where + ".warmup_steps", "must be >= 0");
    if (wd < 0.0) r.fail(where + ".weight_decay", "must be >= 0");
    if (!(b1 >= 0.0 && b1 < 1.0)) r.fail(where + ".adam_beta1", "must lie in [0,1)");
    if (!(b2 >= 0.0 && b2 < 1.0)) r.fail(where + ".adam_beta2", "must lie in [0,1)");
    if (!(eps > 0.0)) r.fail(where + ".adam_epsilon", "must be positive");
    if (!(clip > 0.0)) r.fail(where + ".max_grad_norm", "must be positive");
    if (batch < 1) r.fail(where + ".batch_size", "must be >= 1");
    if (epochs < 1) r.fail(where + ".epochs", "must be >= 1");
  };

  // tune
  const json tune = r.section(doc, "tune",
                              {"learning_rate", "warmup_steps", "batch_size", "epochs",
                               "weight_decay", "adam_beta1", "adam_beta2", "adam_epsilon",
                               "max_grad_norm", "max_len", "truncation", "save_every_epoch"});
  TuneConfig& t = c.tune;
  r.number(tune, "tune", "learning_rate", t.learning_rate);
  r.number(tune, "tune", "warmup_steps", t.warmup_steps);
  r.number(tune, "tune", "batch_size", t.batch_size);
  r.number(tune, "tune", "epochs", t.epochs);
  r.number(tune, "tune", "weight_decay", t.weight_decay);
  r.number(tune, "tune", "adam_beta1", t.adam_beta1);
  r.number(tune, "tune", "adam_beta2", t.adam_beta2);
  r.number(tune, "tune", "adam_epsilon", t.adam_epsilon);
  r.number(tune, "tune", "max_grad_norm", t.max_grad_norm);
  r.number(tune, "tune", "max_len", t.max_len);
  r.flag(tune, "tune", "save_every_epoch", c.save_every_epoch);
  check_optimizer("tune", t.learning_rate, t.warmup_steps, t.weight_decay, t.adam_beta1,
                  t.adam_beta2, t.adam_epsilon, t.max_grad_norm, t.batch_size, t.epochs);
  if (t.max_len < 4) r.fail("tune.max_len", "must be >= 4");
  if (auto s = r.text(tune, "tune", "truncation")) {
    if (*s == "premise_tail") {
      t.truncation = TruncationPolicy::kPremiseTail;
    } else if (*s == "right") {
      t.truncation = TruncationPolicy::kRight;
    } else {
      r.fail("tune.truncation", "must be \"premise_tail\" or \"right\"");
    }
  }

  // finetune
  const json ft = r.section(doc, "finetune",
                            {"from", "epochs", "learning_rate", "batch_size",
                             "negatives_per_query", "warmup_steps", "weight_decay",
                             "adam_beta1", "adam_beta2", "adam_epsilon", "max_grad_norm",
                             "max_len"});
  FinetuneConfig& f = c.finetune;
  if (auto s = r.text(ft, "finetune", "from")) {
    if (*s == "tuned") {
      c.finetune_from = FinetuneStart::kTuned;
    } else if (*s == "init") {
      c.finetune_from = FinetuneStart::kInit;
    } else {
      r.fail("finetune.from", "must be \"tuned\" or \"init\"");
    }
  }
  r.number(ft, "finetune", "epochs", f.epochs);
  r.number(ft, "finetune", "learning_rate", f.learning_rate);
  r.number(ft, "finetune", "batch_size", f.batch_size);
  r.number(ft, "finetune", "negatives_per_query", f.negatives_per_query);
  r.number(ft, "finetune", "warmup_steps", f.warmup_steps);
  r.number(ft, "finetune", "weight_decay", f.weight_decay);
  r.number(ft, "finetune", "adam_beta1", f.adam_beta1);
  r.number(ft, "finetune", "adam_beta2", f.adam_beta2);
  r.number(ft, "finetune", "adam_epsilon", f.adam_epsilon);
  r.number(ft, "finetune", "max_grad_norm", f.max_grad_norm);
  r.number(ft, "finetune", "max_len", f.max_len);
  check_optimizer("finetune", f.learning_rate, f.warmup_steps, f.weight_decay, f.adam_beta1,
                  f.adam_beta2, f.adam_epsilon, f.max_grad_norm, f.batch_size, f.epochs);
  if (f.negatives_per_query < 0) r.fail("finetune.negatives_per_query", "must be >= 0");
  if (f.max_len < 3) r.fail("finetune.max_len", "must be >= 3");

  // eval
  const json ev = r.section(doc, "eval", {"relevance", "hits_at", "mrr_at", "top_k"});
  if (auto s = r.text(ev, "eval", "relevance")) {
    if (auto v = parse_relevance_mode(*s)) {
      c.eval.relevance = *v;
    } else {
      r.fail("eval.relevance", "must be \"labeled\" or \"answer\"");
    }
  }
  r.cutoffs(ev, "eval", "hits_at", c.eval.hits_at);
  r.cutoffs(ev, "eval", "mrr_at", c.eval.mrr_at);
  std::size_t largest = 0;
  for (auto k : c.eval.hits_at) largest = std::max(largest, k);
  for (auto k : c.eval.mrr_at) largest = std::max(largest, k);
  c.eval.top_k = largest;
  r.number(ev, "eval", "top_k", c.eval.top_k);
  if (c.eval.top_k < largest) r.fail("eval.top_k", "must cover the largest cutoff");

  const json an = r.section(doc, "analysis", {"bins"});
  r.number(an, "analysis", "bins", c.analysis_bins);
  if (c.analysis_bins < 1) r.fail("analysis.bins", "must be >= 1");

  if (errors.empty()) result.config = std::move(c);
  return result;
}

ConfigResult validate_config(const fs::path& path, const EnvMap& env) {
  ConfigResult result;
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    result.violations.push_back(std::string("config: ") + e.what());
    return result;
  }
  json doc;
  try {
    doc = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    result.violations.push_back(std::string("config: malformed JSON: ") + e.what());
    return result;
  }
  const fs::path base = fs::absolute(path).parent_path();
  return validate_config_json(std::move(doc), base, env);
}

std::pair<std::string, std::string> override_entry(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw Error(ErrorKind::kInvalidArgument,
                "override \"" + std::string(assignment) + "\" must look like key.path=value");
  }
  std::string key(kEnvPrefix);
  for (char ch : assignment.substr(0, eq)) {
    if (ch == '.') {
      key += "__";
    } else {
      key.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    }
  }
  return {key, std::string(assignment.substr(eq + 1))};
}

PipelineConfig load_config(const fs::path& path, const EnvMap& extra) {
  EnvMap env = environment_overrides();
  for (const auto& [k, v] : extra) env[k] = v;
  ConfigResult r = validate_config(path, env);
  if (!r.ok()) throw ConfigError(std::move(r.violations));
  return std::move(*r.config);
}

std::vector<std::string> default_stages(const PipelineConfig& config) {
  std::vector<std::string> out;
  for (const auto& s : kStageOrder) {
    if (s == "tune" && config.finetune_from == FinetuneStart::kInit) continue;
    out.push_back(s);
  }
  return out;
}

std::vector<std::string> order_stages(const std::vector<std::string>& stages) {
  std::set<std::string> wanted;
  for (const auto& s : stages) {
    if (std::find(kStageOrder.begin(), kStageOrder.end(), s) == kStageOrder.end()) {
      throw Error(ErrorKind::kInvalidArgument, "unknown stage \"" + s + "\"");
    }
    wanted.insert(s);
  }
  std::vector<std::string> out;
  for (const auto& s : kStageOrder) {
    if (wanted.contains(s)) out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

json to_json(const RunManifest& m) {
  json stages = json::array();
  auto artifacts = [](const std::vector<ArtifactRecord>& list) {
    json out = json::array();
    for (const auto& a : list) out.push_back({{"path", a.path}, {"sha256", a.sha256}});
    return out;
  };
  for (const auto& s : m.stages) {
    stages.push_back({{"stage", s.stage},
                      {"status", s.status},
                      {"command", s.command},
                      {"inputs", artifacts(s.inputs)},
                      {"outputs", artifacts(s.outputs)},
                      {"started", s.started},
                      {"finished", s.finished}});
  }
  return {{"run_id", m.run_id}, {"config", m.config}, {"stages", std::move(stages)}};
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  try {
    m.run_id = j.at("run_id").get<std::string>();
    m.config = j.at("config");
    auto artifacts = [](const json& list) {
      std::vector<ArtifactRecord> out;
      for (const auto& a : list) {
        out.push_back({a.at("path").get<std::string>(), a.at("sha256").get<std::string>()});
      }
      return out;
    };
    for (const auto& s : j.at("stages")) {
      m.stages.push_back({s.at("stage").get<std::string>(), s.at("status").get<std::string>(),
                          s.at("command").get<std::string>(), artifacts(s.at("inputs")),
                          artifacts(s.at("outputs")), s.at("started").get<std::string>(),
                          s.at("finished").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("bad manifest: ") + e.what());
  }
  return m;
}

std::string run_id(const PipelineConfig& config) {
  json snapshot = to_json(config);
  json& paths = snapshot["paths"];
  json hashes = json::object();
  for (auto& [key, value] : paths.items()) {
    if (key == "output_dir" || value.is_null()) continue;
    hashes[key] = sha256_file(value.get<std::string>());
  }
  snapshot.erase("paths");
  snapshot["inputs"] = std::move(hashes);
  return sha256_hex(snapshot.dump()).substr(0, 16);
}

fs::path run_directory(const PipelineConfig& config) {
  return config.paths.output_dir / ("run-" + run_id(config));
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class DirectoryLock {
 public:
  explicit DirectoryLock(fs::path path) : path_(std::move(path)) {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      throw Error(ErrorKind::kState,
                  "output directory is locked by another run (remove \"" + path_.string() +
                      "\" if no run is active)");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
  }
  ~DirectoryLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

// Which stage produces each run-directory artifact.
const std::map<std::string, std::string>& producers() {
  static const std::map<std::string, std::string> kProducers = {
      {"vocab.txt", "init"},
      {"init.ckpt", "init"},
      {"claims.jsonl", "transform"},
      {"pairs.jsonl", "assemble"},
      {"prompts.jsonl", "assemble"},
      {"tuned.ckpt", "tune"},
      {"train_log.jsonl", "tune"},
      {"query.ckpt", "finetune"},
      {"passage.ckpt", "finetune"},
      {"finetune_log.jsonl", "finetune"},
      {"corpus.emb", "index"},
      {"results.jsonl", "search"},
      {"eval_report.json", "eval"},
      {"analysis_nli.json", "analyze"},
      {"analysis_nli.csv", "analyze"},
      {"triples.jsonl", "analyze"},
      {"analysis_retriever.json", "analyze"},
      {"analysis_retriever.csv", "analyze"}};
  return kProducers;
}

std::string epoch_checkpoint_name(int epoch) {
  return "tuned-epoch-" + std::to_string(epoch) + ".ckpt";
}

bool has_triple_source(const PipelineConfig& c) {
  return c.paths.triples.has_value() || c.paths.nli.has_value();
}

struct StagePlan {
  std::vector<std::string> needs;      // run-directory artifacts, checked in order
  std::vector<fs::path> externals;     // files named in the config
  std::vector<std::string> produces;
};

StagePlan plan_for(const std::string& stage, const PipelineConfig& c) {
  StagePlan p;
  auto opt = [&](const std::optional<fs::path>& path) {
    if (path) p.externals.push_back(*path);
  };
  if (stage == "init") {
    p.externals = {c.paths.qa_train, c.paths.corpus};
    opt(c.paths.nli);
    opt(c.paths.vocab);
    opt(c.paths.init_checkpoint);
    p.produces = {"vocab.txt", "init.ckpt"};
  } else if (stage == "transform") {
    p.externals = {c.paths.qa_train};
    p.produces = {"claims.jsonl"};
  } else if (stage == "assemble") {
    p.needs = {"claims.jsonl"};
    p.externals = {c.paths.qa_train};
    opt(c.paths.nli);
    p.produces = {"pairs.jsonl", "prompts.jsonl"};
  } else if (stage == "tune") {
    p.needs = {"prompts.jsonl", "vocab.txt", "init.ckpt"};
    p.produces = {"tuned.ckpt", "train_log.jsonl"};
    if (c.save_every_epoch) {
      for (int e = 1; e <= c.tune.epochs; ++e) p.produces.push_back(epoch_checkpoint_name(e));
    }
  } else if (stage == "finetune") {
    p.needs = {c.finetune_from == FinetuneStart::kTuned ? "tuned.ckpt" : "init.ckpt",
               "vocab.txt"};
    p.externals = {c.paths.qa_train};
    p.produces = {"query.ckpt", "passage.ckpt", "finetune_log.jsonl"};
  } else if (stage == "index") {
    p.needs = {"passage.ckpt", "vocab.txt"};
    p.externals = {c.paths.corpus};
    p.produces = {"corpus.emb"};
  } else if (stage == "search") {
    p.needs = {"corpus.emb", "query.ckpt", "vocab.txt"};
    p.externals = {c.paths.qa_eval};
    p.produces = {"results.jsonl"};
  } else if (stage == "eval") {
    p.needs = {"results.jsonl"};
    p.externals = {c.paths.qa_eval};
    if (c.eval.relevance == RelevanceMode::kAnswer) p.externals.push_back(c.paths.corpus);
    p.produces = {"eval_report.json"};
  } else if (stage == "analyze") {
    p.needs = {"query.ckpt", "passage.ckpt", "vocab.txt"};
    p.externals = {c.paths.qa_eval, c.paths.corpus};
    opt(c.paths.nli);
    opt(c.paths.nli_scores);
    opt(c.paths.triples);
    p.produces = {"analysis_nli.json", "analysis_nli.csv"};
    if (has_triple_source(c)) {
      p.produces.insert(p.produces.end(),
                        {"triples.jsonl", "analysis_retriever.json", "analysis_retriever.csv"});
    }
  } else {
    throw Error(ErrorKind::kInvalidArgument, "unknown stage \"" + stage + "\"");
  }
  return p;
}

// Inputs live in the run directory; outputs go to a scratch directory first.
struct StageContext {
  const PipelineConfig& config;
  fs::path run_dir;
  fs::path scratch;

  fs::path in(const std::string& name) const { return run_dir / name; }
  fs::path out(const std::string& name) const { return scratch / name; }

  Tokenizer tokenizer() const { return Tokenizer::load(in("vocab.txt")); }
};

void write_lines(const fs::path& path, const std::vector<json>& lines) {
  write_json_lines(path, lines);
}

void write_json_file(const fs::path& path, const json& doc) {
  write_file(path, doc.dump(2) + "\n");
}

std::vector<std::string> vocabulary_texts(const PipelineConfig& c) {
  std::vector<std::string> texts;
  const Corpus corpus = load_corpus(c.paths.corpus);
  for (const auto& p : corpus.passages()) texts.push_back(p.body);
  for (const auto& q : load_qa_dataset(c.paths.qa_train)) {
    texts.push_back(q.question);
    texts.push_back(question_to_claim(q.question).text);
    for (const auto& p : q.positive_passages) texts.push_back(p.body);
    for (const auto& p : q.negative_passages) texts.push_back(p.body);
  }
  if (c.paths.nli) {
    for (const auto& n : load_nli_dataset(*c.paths.nli)) {
      texts.push_back(n.premise);
      texts.push_back(n.hypothesis);
    }
  }
  texts.emplace_back(kEntailConnective);
  return texts;
}

void stage_init(const StageContext& ctx) {
  const PipelineConfig& c = ctx.config;
  const Tokenizer tokenizer = c.paths.vocab ? Tokenizer::load(*c.paths.vocab)
                                            : Tokenizer::build(vocabulary_texts(c), c.max_vocab);
  EncoderConfig ec = c.model;
  ec.vocab_size = static_cast<int>(tokenizer.size());
  EncoderModel model(ec, c.stage_seed("init"));
  if (c.paths.init_checkpoint) {
    const auto loaded = load_compatible(*c.paths.init_checkpoint, model);
    if (loaded.empty()) {
      throw Error(ErrorKind::kInvalidArgument,
                  "init checkpoint shares no tensor with the configured model");
    }
  }
  if (c.pretrain.epochs > 0) {
    std::vector<std::string> raw;
    const Corpus corpus = load_corpus(c.paths.corpus);
    for (const auto& p : corpus.passages()) raw.push_back(p.body);
    if (c.paths.nli) {
      for (const auto& n : load_nli_dataset(*c.paths.nli)) raw.push_back(n.premise);
    }
    const auto instances =
        build_mlm_instances(raw, tokenizer, c.pretrain.mask_rate,
                            static_cast<std::size_t>(ec.max_len), c.stage_seed("pretrain-mask"));
    TuneConfig pc;
    pc.learning_rate = c.pretrain.learning_rate;
    pc.warmup_steps = c.pretrain.warmup_steps;
    pc.batch_size = c.pretrain.batch_size;
    pc.epochs = c.pretrain.epochs;
    pc.seed = c.stage_seed("pretrain");
    train_on_instances(model, instances, pc);
  }
  tokenizer.save(ctx.out("vocab.txt"));
  save_checkpoint(ctx.out("init.ckpt"), model);
}

void stage_transform(const StageContext& ctx) {
  std::vector<json> lines;
  for (const auto& q : load_qa_dataset(ctx.config.paths.qa_train)) {
    const ExistenceClaim claim = question_to_claim(q.question);
    lines.push_back({{"id", q.id},
                     {"question", q.question},
                     {"claim", claim.text},
                     {"category", category_name(claim.category)}});
  }
  write_lines(ctx.out("claims.jsonl"), lines);
}

void stage_assemble(const StageContext& ctx) {
  const PipelineConfig& c = ctx.config;
  std::map<std::string, std::string> claims;
  for_each_json_line(ctx.in("claims.jsonl"), [&](const json& j, std::size_t line) {
    try {
      claims[j.at("id").get<std::string>()] = j.at("claim").get<std::string>();
    } catch (const json::exception& e) {
      throw DataError(ErrorKind::kSchema, line, "claim", std::string("bad claim: ") + e.what());
    }
  });
  std::vector<EntailmentPair> pairs;
  for (const auto& q : load_qa_dataset(c.paths.qa_train)) {
    std::string hypothesis = q.question;
    if (c.hypothesis == HypothesisForm::kClaim) {
      auto it = claims.find(q.id);
      if (it == claims.end()) {
        throw Error(ErrorKind::kMissingArtifact,
                    "claims.jsonl has no claim for question \"" + q.id +
                        "\"; rerun stage \"transform\"");
      }
      hypothesis = it->second;
    }
    for (const auto& p : q.positive_passages) {
      pairs.emplace_back(p.body, hypothesis, PairOrigin::kRetrieval);
    }
  }
  if (c.paths.nli) {
    for (const auto& n : load_nli_dataset(*c.paths.nli)) {
      for (auto& p : unify(n)) pairs.push_back(std::move(p));
    }
  }
  std::vector<json> pair_lines, prompt_lines;
  for (const auto& p : pairs) {
    pair_lines.push_back(to_json(p));
    prompt_lines.push_back(to_json(assemble(p, c.strategy)));
  }
  write_lines(ctx.out("pairs.jsonl"), pair_lines);
  write_lines(ctx.out("prompts.jsonl"), prompt_lines);
}

void stage_tune(const StageContext& ctx) {
  const PipelineConfig& c = ctx.config;
  std::vector<PromptedText> prompts;
  for_each_json_line(ctx.in("prompts.jsonl"), [&](const json& j, std::size_t line) {
    prompts.push_back(prompted_from_json(j, line));
  });
  const Tokenizer tokenizer = ctx.tokenizer();
  EncoderModel model = load_checkpoint(ctx.in("init.ckpt"));
  TuneConfig tc = c.tune;
  tc.seed = c.stage_seed("tune");
  tc.mask.seed = c.stage_seed("mask");
  EpochCallback on_epoch;
  if (c.save_every_epoch) {
    on_epoch = [&](int epoch, const EncoderModel& m) {
      save_checkpoint(ctx.out(epoch_checkpoint_name(epoch + 1)), m);
    };
  }
  const TrainLog log = entailment_tune(model, tokenizer, prompts, tc, on_epoch);
  save_checkpoint(ctx.out("tuned.ckpt"), model);
  write_lines(ctx.out("train_log.jsonl"), log.to_json_lines());
}

void stage_finetune(const StageContext& ctx) {
  const PipelineConfig& c = ctx.config;
  const Tokenizer tokenizer = ctx.tokenizer();
  const EncoderModel start = load_checkpoint(
      ctx.in(c.finetune_from == FinetuneStart::kTuned ? "tuned.ckpt" : "init.ckpt"));
  FinetuneConfig fc = c.finetune;
  fc.seed = c.stage_seed("finetune");
  FinetuneLog log;
  const DualEncoder dual = finetune(start, tokenizer, load_qa_dataset(c.paths.qa_train), fc, &log);
  save_checkpoint(ctx.out("query.ckpt"), dual.query);
  save_checkpoint(ctx.out("passage.ckpt"), dual.passage);
  write_lines(ctx.out("finetune_log.jsonl"), log.to_json_lines());
}

void stage_index(const StageContext& ctx) {
  const Tokenizer tokenizer = ctx.tokenizer();
  const EncoderModel passage = load_checkpoint(ctx.in("passage.ckpt"));
  const ModelTextEncoder encoder(passage, tokenizer, ctx.config.finetune.max_len);
  save_embeddings(ctx.out("corpus.emb"),
                  encode_corpus(encoder, load_corpus(ctx.config.paths.corpus)));
}

void stage_search(const StageContext& ctx) {
  const Tokenizer tokenizer = ctx.tokenizer();
  const EncoderModel query = load_checkpoint(ctx.in("query.ckpt"));
  const ModelTextEncoder encoder(query, tokenizer, ctx.config.finetune.max_len);
  const EmbeddingMatrix index = load_embeddings(ctx.in("corpus.emb"));
  std::vector<json> lines;
  for (const auto& q : load_qa_dataset(ctx.config.paths.qa_eval)) {
    lines.push_back(to_json(
        search(index, to_float(encoder.encode(q.question)), ctx.config.eval.top_k, q.id)));
  }
  write_lines(ctx.out("results.jsonl"), lines);
}

void stage_eval(const StageContext& ctx) {
  const PipelineConfig& c = ctx.config;
  std::vector<SearchResult> results;
  for_each_json_line(ctx.in("results.jsonl"), [&](const json& j, std::size_t) {
    results.push_back(search_result_from_json(j));
  });
  const auto queries = load_qa_dataset(c.paths.qa_eval);
  const RelevanceMap relevant = c.eval.relevance == RelevanceMode::kAnswer
                                    ? answer_relevance(queries, load_corpus(c.paths.corpus))
                                    : labeled_relevance(queries);
  const EvalReport report =
      evaluate(results, relevant, c.eval.relevance, c.eval.hits_at, c.eval.mrr_at);
  write_json_file(ctx.out("eval_report.json"), to_json(report));
}

void stage_analyze(const StageContext& ctx) {
  const PipelineConfig& c = ctx.config;
  const auto queries = load_qa_dataset(c.paths.qa_eval);
  std::unique_ptr<NLIScorer> scorer;
  if (c.paths.nli_scores) {
    scorer = std::make_unique<ScoreTableNLIScorer>(*c.paths.nli_scores);
  } else {
    scorer = std::make_unique<LexicalNLIScorer>();
  }
  const SeparationReport nli_report = nli_separation_study(*scorer, queries, c.analysis_bins);
  json nli_doc = to_json(nli_report);
  nli_doc["scorer"] = c.paths.nli_scores ? "score_table" : "lexical";
  write_json_file(ctx.out("analysis_nli.json"), nli_doc);
  write_file(ctx.out("analysis_nli.csv"), to_csv(nli_report));

  if (!has_triple_source(c)) return;
  const std::vector<RelationTriple> triples =
      c.paths.triples ? load_relation_triples(*c.paths.triples)
                      : build_relation_triples(load_nli_dataset(*c.paths.nli),
                                               load_corpus(c.paths.corpus),
                                               c.stage_seed("analysis"));
  write_relation_triples(ctx.out("triples.jsonl"), triples);
  const Tokenizer tokenizer = ctx.tokenizer();
  const EncoderModel query = load_checkpoint(ctx.in("query.ckpt"));
  const EncoderModel passage = load_checkpoint(ctx.in("passage.ckpt"));
  const ModelTextEncoder qe(query, tokenizer, c.finetune.max_len);
  const ModelTextEncoder pe(passage, tokenizer, c.finetune.max_len);
  const SeparationReport report = retriever_separation_study(qe, pe, triples, c.analysis_bins);
  write_json_file(ctx.out("analysis_retriever.json"), to_json(report));
  write_file(ctx.out("analysis_retriever.csv"), to_csv(report));
}

void run_stage_body(const std::string& stage, const StageContext& ctx) {
  static const std::map<std::string, std::function<void(const StageContext&)>> kBodies = {
      {"init", stage_init},         {"transform", stage_transform},
      {"assemble", stage_assemble}, {"tune", stage_tune},
      {"finetune", stage_finetune}, {"index", stage_index},
      {"search", stage_search},     {"eval", stage_eval},
      {"analyze", stage_analyze}};
  kBodies.at(stage)(ctx);
}

std::string describe(const fs::path& p, const fs::path& run_dir) {
  const fs::path rel = p.lexically_relative(run_dir);
  if (!rel.empty() && *rel.begin() != "..") return rel.string();
  return p.string();
}

}  // namespace

RunManifest run_pipeline(const PipelineConfig& config, const std::vector<std::string>& stages) {
  const std::vector<std::string> ordered = order_stages(stages);
  fs::create_directories(config.paths.output_dir);
  DirectoryLock lock(config.paths.output_dir / ".lock");

  const fs::path run_dir = run_directory(config);
  fs::create_directories(run_dir);
  const json snapshot = to_json(config);
  const fs::path config_file = run_dir / "config.json";
  const std::string config_text = snapshot.dump(2) + "\n";
  if (fs::exists(config_file) && read_file(config_file) != config_text) {
    throw Error(ErrorKind::kState, "run directory \"" + run_dir.string() +
                                       "\" holds a different configuration");
  }
  write_file(config_file, config_text);

  RunManifest manifest;
  const fs::path manifest_file = run_dir / "manifest.json";
  if (fs::exists(manifest_file)) {
    manifest = manifest_from_json(json::parse(read_file(manifest_file)));
  }
  manifest.run_id = run_id(config);
  manifest.config = snapshot;

  for (const auto& stage : ordered) {
    const StagePlan plan = plan_for(stage, config);
    StageRecord record;
    record.stage = stage;
    record.command = "entail run --config " + config_file.string() + " --stages " + stage;
    record.started = utc_now();
    for (const auto& need : plan.needs) {
      const fs::path p = run_dir / need;
      if (!fs::is_regular_file(p)) {
        const std::string& producer = producers().at(need);
        throw Error(ErrorKind::kMissingArtifact,
                    "stage \"" + stage + "\" needs " + need + " from stage \"" + producer +
                        "\", which was not found at " + p.string() + "; run stage \"" +
                        producer + "\" first");
      }
      record.inputs.push_back({need, sha256_file(p)});
    }
    for (const auto& ext : plan.externals) {
      record.inputs.push_back({ext.string(), sha256_file(ext)});
    }

    auto previous = std::find_if(manifest.stages.begin(), manifest.stages.end(),
                                 [&](const StageRecord& s) { return s.stage == stage; });
    bool cached = false;
    if (previous != manifest.stages.end() && previous->inputs.size() == record.inputs.size()) {
      cached = std::equal(previous->inputs.begin(), previous->inputs.end(),
                          record.inputs.begin(), [](const auto& a, const auto& b) {
                            return a.path == b.path && a.sha256 == b.sha256;
                          });
      for (const auto& out : previous->outputs) {
        const fs::path p = run_dir / out.path;
        cached = cached && fs::is_regular_file(p) && sha256_file(p) == out.sha256;
      }
      cached = cached && previous->outputs.size() == plan.produces.size();
    }

    if (cached) {
      record.outputs = previous->outputs;
      record.status = "cached";
    } else {
      const fs::path scratch = run_dir / (".scratch-" + stage);
      fs::remove_all(scratch);
      fs::create_directories(scratch);
      run_stage_body(stage, StageContext{config, run_dir, scratch});
      for (const auto& name : plan.produces) {
        const fs::path fresh = scratch / name;
        if (!fs::is_regular_file(fresh)) {
          throw Error(ErrorKind::kState, "stage \"" + stage + "\" did not produce " + name);
        }
        const std::string digest = sha256_file(fresh);
        const fs::path target = run_dir / name;
        if (fs::exists(target)) {
          if (sha256_file(target) != digest) {
            throw Error(ErrorKind::kState,
                        "refusing to overwrite " + target.string() +
                            " with different content; outputs are immutable");
          }
          fs::remove(fresh);
        } else {
          fs::rename(fresh, target);
        }
        record.outputs.push_back({describe(target, run_dir), digest});
      }
      fs::remove_all(scratch);
      record.status = "completed";
    }
    record.finished = utc_now();

    if (previous != manifest.stages.end()) {
      *previous = record;
    } else {
      manifest.stages.push_back(record);
    }
    std::stable_sort(manifest.stages.begin(), manifest.stages.end(),
                     [](const StageRecord& a, const StageRecord& b) {
                       auto rank = [](const std::string& s) {
                         return std::find(kStageOrder.begin(), kStageOrder.end(), s) -
                                kStageOrder.begin();
                       };
                       return rank(a.stage) < rank(b.stage);
                     });
    write_file(manifest_file, to_json(manifest).dump(2) + "\n");
  }
  return manifest;
}

}  // namespace entail
