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


// Config-driven orchestration of the full training and evaluation pipeline
// with per-stage artifacts, content hashes and a run manifest.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "entail/common.h"
#include "entail/encoder.h"
#include "entail/finetune.h"
#include "entail/prompt.h"
#include "entail/retrieval.h"
#include "entail/trainer.h"
#include "json.hpp"

namespace entail {

struct PathsConfig {
  std::filesystem::path qa_train;
  std::filesystem::path qa_eval;
  std::optional<std::filesystem::path> nli;
  std::filesystem::path corpus;
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> vocab;
  std::optional<std::filesystem::path> init_checkpoint;
  std::optional<std::filesystem::path> nli_scores;
  std::optional<std::filesystem::path> triples;
};

struct PretrainConfig {
  int epochs = 0;  // generic MLM over corpus text before anything else
  double mask_rate = 0.15;
  double learning_rate = 1e-4;
  int batch_size = 32;
  int warmup_steps = 100;
};

enum class FinetuneStart { kTuned, kInit };

struct EvalConfig {
  RelevanceMode relevance = RelevanceMode::kLabeled;
  std::vector<std::size_t> hits_at = kDefaultHitCutoffs;
  std::vector<std::size_t> mrr_at = kDefaultMrrCutoffs;
  std::size_t top_k = 100;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  PathsConfig paths;
  EncoderConfig model;  // vocab_size is fixed by the tokenizer at init
  std::size_t max_vocab = 30000;
  PretrainConfig pretrain;
  PromptStrategy strategy = PromptStrategy::kPrompt;
  // Defaults to the claim for kPrompt and the raw question for kConcat.
  HypothesisForm hypothesis = HypothesisForm::kClaim;
  TuneConfig tune;  // mask settings live in tune.mask
  // Also keep tuned-epoch-<n>.ckpt after every tuning epoch.
  bool save_every_epoch = false;
  FinetuneStart finetune_from = FinetuneStart::kTuned;
  FinetuneConfig finetune;
  EvalConfig eval;
  std::size_t analysis_bins = 20;

  // Per-stage seeds, all derived from `seed`.
  std::uint64_t stage_seed(std::string_view stage) const;
};

// Every value spelled out, paths absolute. Stage seeds are not stored; they
// are recomputed from "seed".
nlohmann::json to_json(const PipelineConfig& config);

class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

struct ConfigResult {
  std::optional<PipelineConfig> config;
  std::vector<std::string> violations;

  bool ok() const { return config.has_value(); }
};

using EnvMap = std::map<std::string, std::string>;

// Current process variables that start with kEnvPrefix.
EnvMap environment_overrides();
inline constexpr std::string_view kEnvPrefix = "ENTAIL_";

// Reads a JSON config (comments allowed). Variables such as
// ENTAIL_TUNE__LEARNING_RATE=1e-3 override scalar leaves ("__" separates
// levels; values are parsed as JSON, falling back to a string). Relative
// paths resolve against the config file's directory. Collects every
// violation instead of stopping at the first.
ConfigResult validate_config(const std::filesystem::path& path, const EnvMap& env);
ConfigResult validate_config_json(nlohmann::json doc, const std::filesystem::path& base_dir,
                                  const EnvMap& env = {});
// Throws ConfigError.
PipelineConfig load_config(const std::filesystem::path& path, const EnvMap& extra = {});

// "tune.learning_rate=1e-3" -> {"ENTAIL_TUNE__LEARNING_RATE", "1e-3"}.
// Throws kInvalidArgument without '='.
std::pair<std::string, std::string> override_entry(std::string_view assignment);

inline const std::vector<std::string> kStageOrder = {
    "init", "transform", "assemble", "tune", "finetune",
    "index", "search", "eval", "analyze"};

// Stages a plain `run` executes: all of them, minus "tune" when fine-tuning
// starts from the initial checkpoint.
std::vector<std::string> default_stages(const PipelineConfig& config);
// Validates names and sorts into pipeline order. Throws kInvalidArgument.
std::vector<std::string> order_stages(const std::vector<std::string>& stages);

struct ArtifactRecord {
  std::string path;  // relative to the run directory when inside it
  std::string sha256;
};

struct StageRecord {
  std::string stage;
  std::string status;  // "completed" or "cached"
  std::string command;
  std::vector<ArtifactRecord> inputs;
  std::vector<ArtifactRecord> outputs;
  std::string started;
  std::string finished;
};

struct RunManifest {
  std::string run_id;
  nlohmann::json config;
  std::vector<StageRecord> stages;  // latest record per stage, pipeline order
};

nlohmann::json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& j);

// 16 hex chars of sha256 over the config snapshot (without output_dir) and
// the content hashes of every input file.
std::string run_id(const PipelineConfig& config);
std::filesystem::path run_directory(const PipelineConfig& config);

// Runs `stages` (pipeline order enforced) in run_directory(config). A stage
// whose recorded inputs are unchanged and whose outputs are intact is not
// recomputed. Existing outputs are never overwritten with different bytes.
// Throws kMissingArtifact naming the upstream stage when a required file is
// absent, kState when the output directory is locked by another run.
RunManifest run_pipeline(const PipelineConfig& config,
                         const std::vector<std::string>& stages);

}  // namespace entail
