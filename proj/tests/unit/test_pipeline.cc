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


#include <algorithm>
#include <fstream>

#include "doctest.h"
#include "entail/hash.h"
#include "entail/pipeline.h"
#include "entail/synthetic.h"
#include "oracles.h"

using namespace entail;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json minimal_doc() {
  return {{"paths",
           {{"qa_train", "qa_train.jsonl"},
            {"qa_eval", "qa_heldout.jsonl"},
            {"nli", "nli.jsonl"},
            {"corpus", "corpus.jsonl"},
            {"output_dir", "out"}}}};
}

// A small world plus a toy-sized config, written into `dir`.
json toy_doc(const fs::path& dir) {
  SyntheticConfig world;
  world.people = 8;
  world.seed = 3;
  write_world(dir, generate_world(world));
  json doc = minimal_doc();
  doc["seed"] = 5;
  doc["model"] = {{"hidden", 16}, {"layers", 1}, {"heads", 2}, {"max_len", 48}};
  doc["tune"] = {{"learning_rate", 1e-3}, {"epochs", 1}, {"batch_size", 8}, {"max_len", 48}};
  doc["finetune"] = {{"learning_rate", 1e-3}, {"epochs", 1}, {"batch_size", 8}, {"max_len", 48}};
  return doc;
}

// Shared read-only world for the configuration-only tests.
const fs::path& world_dir() {
  static oracle::TempDir dir;
  static const bool written = [] {
    toy_doc(dir.path());
    return true;
  }();
  (void)written;
  return dir.path();
}

PipelineConfig must_load(const json& doc, const fs::path& dir, const EnvMap& env = {}) {
  ConfigResult r = validate_config_json(doc, dir, env);
  INFO((r.violations.empty() ? std::string() : r.violations.front()));
  REQUIRE(r.ok());
  return *r.config;
}

bool contains(const std::vector<std::string>& xs, const std::string& needle) {
  return std::any_of(xs.begin(), xs.end(),
                     [&](const std::string& x) { return x.find(needle) != std::string::npos; });
}

const StageRecord& record(const RunManifest& m, const std::string& stage) {
  for (const auto& s : m.stages) {
    if (s.stage == stage) return s;
  }
  throw std::runtime_error("no record for " + stage);
}

}  // namespace

TEST_CASE("defaults fill every unspecified value") {
  const PipelineConfig c = must_load(minimal_doc(), world_dir());
  CHECK(c.tune.mask.beta == 0.8);
  CHECK(c.tune.mask.scope == MaskScope::kHypothesisOnly);
  CHECK(c.tune.learning_rate == 2e-5);
  CHECK(c.strategy == PromptStrategy::kPrompt);
  CHECK(c.hypothesis == HypothesisForm::kClaim);
  CHECK(c.paths.corpus == world_dir() / "corpus.jsonl");
  CHECK(c.eval.hits_at == kDefaultHitCutoffs);
  const json snapshot = to_json(c);
  CHECK(snapshot.at("mask").at("beta") == 0.8);
}

TEST_CASE("an out-of-range beta is named exactly") {
  json doc = minimal_doc();
  doc["mask"] = {{"beta", 1.5}};
  const ConfigResult r = validate_config_json(doc, world_dir());
  CHECK_FALSE(r.ok());
  CHECK(contains(r.violations, "mask.beta: beta must lie in [0,1]"));
}

TEST_CASE("every violation is reported, not just the first") {
  json doc = minimal_doc();
  doc["mask"] = {{"beta", -0.1}, {"scope", "everything"}};
  doc["tune"] = {{"epochs", 0}};
  doc["unknown_section"] = 1;
  const ConfigResult r = validate_config_json(doc, world_dir());
  CHECK(r.violations.size() >= 4);
  CHECK(contains(r.violations, "mask.beta"));
  CHECK(contains(r.violations, "mask.scope"));
  CHECK(contains(r.violations, "tune.epochs"));
  CHECK(contains(r.violations, "unknown_section"));

  json missing = minimal_doc();
  missing["paths"].erase("corpus");
  CHECK(contains(validate_config_json(missing, world_dir()).violations, "paths.corpus"));
}

TEST_CASE("environment overrides win over the file") {
  const PipelineConfig c = must_load(minimal_doc(), world_dir(),
                                     {{"ENTAIL_TUNE__LEARNING_RATE", "1e-3"},
                                      {"ENTAIL_MASK__SCOPE", "full_prompt"}});
  CHECK(c.tune.learning_rate == 1e-3);
  CHECK(c.tune.mask.scope == MaskScope::kFullPrompt);
  const ConfigResult bad =
      validate_config_json(minimal_doc(), world_dir(), {{"ENTAIL_MASK__BETA", "2"}});
  CHECK(contains(bad.violations, "mask.beta"));

  CHECK(override_entry("tune.learning_rate=1e-3") ==
        std::pair<std::string, std::string>{"ENTAIL_TUNE__LEARNING_RATE", "1e-3"});
  CHECK_THROWS_AS(override_entry("tune.learning_rate"), Error);
}

TEST_CASE("concat defaults the hypothesis to the question") {
  json doc = minimal_doc();
  doc["prompt"] = {{"strategy", "concat"}};
  CHECK(must_load(doc, world_dir()).hypothesis == HypothesisForm::kQuestion);
  doc["prompt"]["hypothesis"] = "claim";
  CHECK(must_load(doc, world_dir()).hypothesis == HypothesisForm::kClaim);
}

TEST_CASE("comments are allowed in config files") {
  oracle::TempDir dir;
  {
    std::ofstream out(dir / "c.json");
    json doc = minimal_doc();
    for (auto& [key, value] : doc["paths"].items()) {
      if (key != "output_dir") value = (world_dir() / value.get<std::string>()).string();
    }
    out << "// leading comment\n" << doc.dump(2) << "\n";
  }
  CHECK_NOTHROW(load_config(dir / "c.json"));
  CHECK_THROWS_AS(load_config(dir / "absent.json"), Error);
}

TEST_CASE("stage ordering") {
  CHECK(order_stages({"eval", "init", "tune"}) == std::vector<std::string>{"init", "tune", "eval"});
  CHECK_THROWS_AS(order_stages({"bake"}), Error);
  PipelineConfig c = must_load(minimal_doc(), world_dir());
  CHECK(default_stages(c) == kStageOrder);
  c.finetune_from = FinetuneStart::kInit;
  const auto stages = default_stages(c);
  CHECK(std::count(stages.begin(), stages.end(), "tune") == 0);
}

TEST_CASE("transform alone writes one claim per question") {
  oracle::TempDir dir;
  {
    std::ofstream out(dir / "two.jsonl");
    out << R"({"id":"a","question":"When did Ada found Zed?","answers":["1800"],"positive_passages":[{"id":"p","body":"x"}]})" "\n"
        << R"({"id":"b","question":"Why did Ada leave Zed?","answers":["war"],"positive_passages":[{"id":"p","body":"x"}]})" "\n";
  }
  json doc = toy_doc(dir.path());
  doc["paths"]["qa_train"] = "two.jsonl";
  const PipelineConfig c = must_load(doc, dir.path());
  const RunManifest m = run_pipeline(c, {"transform"});
  const fs::path claims = run_directory(c) / "claims.jsonl";
  const std::string text = read_file(claims);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  CHECK(text.find("\"category\":\"When\"") != std::string::npos);
  CHECK(record(m, "transform").outputs.front().sha256 == sha256_file(claims));
}

TEST_CASE("a stage without its upstream artifact names the producer") {
  oracle::TempDir dir;
  const PipelineConfig c = must_load(toy_doc(dir.path()), dir.path());
  try {
    run_pipeline(c, {"tune"});
    FAIL("expected a missing artifact");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMissingArtifact);
    CHECK(std::string(e.what()).find("prompts.jsonl from stage \"assemble\"") != std::string::npos);
    CHECK(std::string(e.what()).find("run stage \"assemble\" first") != std::string::npos);
  }
}

TEST_CASE("full run: complete manifest, caching, immutability, locking") {
  oracle::TempDir dir;
  const PipelineConfig c = must_load(toy_doc(dir.path()), dir.path());
  const RunManifest first = run_pipeline(c, default_stages(c));
  const fs::path run = run_directory(c);
  CHECK(run.filename().string() == "run-" + first.run_id);
  CHECK(first.run_id.size() == 16);
  REQUIRE(first.stages.size() == kStageOrder.size());

  const json on_disk = json::parse(read_file(run / "manifest.json"));
  CHECK(manifest_from_json(on_disk).stages.size() == first.stages.size());
  for (const auto& s : first.stages) {
    CHECK(s.status == "completed");
    CHECK_FALSE(s.outputs.empty());
    CHECK_FALSE(s.started.empty());
    for (const auto& out : s.outputs) CHECK(sha256_file(run / out.path) == out.sha256);
    for (const auto& in : s.inputs) CHECK(in.sha256.size() == 64);
  }
  for (const char* name : {"eval_report.json", "results.jsonl", "analysis_nli.json",
                           "analysis_retriever.csv", "train_log.jsonl", "config.json"}) {
    CHECK(fs::is_regular_file(run / name));
  }
  CHECK_FALSE(fs::exists(c.paths.output_dir / ".lock"));

  // Unchanged inputs: everything is served from cache.
  const RunManifest second = run_pipeline(c, default_stages(c));
  for (const auto& s : second.stages) CHECK(s.status == "cached");

  // A deleted output is recomputed to identical bytes.
  const std::string report = read_file(run / "eval_report.json");
  fs::remove(run / "eval_report.json");
  CHECK(record(run_pipeline(c, {"eval"}), "eval").status == "completed");
  CHECK(read_file(run / "eval_report.json") == report);

  // A tampered output is never silently replaced.
  write_file(run / "eval_report.json", "{}\n");
  try {
    run_pipeline(c, {"eval"});
    FAIL("expected a refusal");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kState);
    CHECK(std::string(e.what()).find("immutable") != std::string::npos);
  }
  CHECK(read_file(run / "eval_report.json") == "{}\n");

  // A second process holding the lock keeps this one out.
  write_file(c.paths.output_dir / ".lock", "1\n");
  try {
    run_pipeline(c, {"eval"});
    FAIL("expected a lock error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kState);
  }
  fs::remove(c.paths.output_dir / ".lock");
}

TEST_CASE("run ids follow the configuration and the input bytes") {
  oracle::TempDir dir;
  json doc = toy_doc(dir.path());
  const PipelineConfig base = must_load(doc, dir.path());
  json moved = doc;
  moved["paths"]["output_dir"] = "elsewhere";
  CHECK(run_id(must_load(moved, dir.path())) == run_id(base));
  json tweaked = doc;
  tweaked["mask"] = {{"beta", 0.5}};
  CHECK(run_id(must_load(tweaked, dir.path())) != run_id(base));
  const std::string before = run_id(base);
  std::ofstream(dir / "corpus.jsonl", std::ios::app)
      << R"({"id":"extra","body":"one more passage"})" "\n";
  CHECK(run_id(base) != before);
}

TEST_CASE("the bundled toy config validates") {
  const fs::path config = fs::path(ENTAIL_SOURCE_DIR) / "data" / "synthetic" / "config.json";
  const ConfigResult r = validate_config(config, {});
  INFO((r.violations.empty() ? std::string() : r.violations.front()));
  CHECK(r.ok());
}

TEST_CASE("identical configs in different output directories give identical artifacts") {
  oracle::TempDir dir;
  json doc = toy_doc(dir.path());
  const PipelineConfig a = must_load(doc, dir.path());
  doc["paths"]["output_dir"] = "other";
  const PipelineConfig b = must_load(doc, dir.path());
  run_pipeline(a, default_stages(a));
  run_pipeline(b, default_stages(b));
  REQUIRE(run_directory(a) != run_directory(b));
  for (const char* name : {"vocab.txt", "init.ckpt", "tuned.ckpt", "query.ckpt", "corpus.emb",
                           "results.jsonl", "eval_report.json", "analysis_nli.json"}) {
    INFO(name);
    CHECK(read_file(run_directory(a) / name) == read_file(run_directory(b) / name));
  }
}

TEST_CASE("every-epoch checkpoints are optional, hashed outputs") {
  oracle::TempDir dir;
  json doc = toy_doc(dir.path());
  doc["tune"]["epochs"] = 2;
  doc["tune"]["save_every_epoch"] = true;
  const PipelineConfig c = must_load(doc, dir.path());
  const RunManifest m = run_pipeline(c, {"init", "transform", "assemble", "tune"});
  const fs::path run = run_directory(c);
  CHECK(read_file(run / "tuned-epoch-2.ckpt") == read_file(run / "tuned.ckpt"));
  CHECK(read_file(run / "tuned-epoch-1.ckpt") != read_file(run / "tuned.ckpt"));
  CHECK(record(m, "tune").outputs.size() == 4);

  doc["tune"]["save_every_epoch"] = "yes";
  CHECK(contains(validate_config_json(doc, dir.path()).violations, "tune.save_every_epoch"));
}
