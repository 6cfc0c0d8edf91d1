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


// Command-line front end. Every subcommand is driven by one config file;
// failures exit nonzero with a JSON error document on stderr.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "entail/common.h"
#include "entail/pipeline.h"
#include "entail/synthetic.h"
#include "json.hpp"

namespace {

using nlohmann::json;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  for (char c : text) {
    if (c == ',') {
      if (!item.empty()) out.push_back(item);
      item.clear();
    } else if (c != ' ') {
      item.push_back(c);
    }
  }
  if (!item.empty()) out.push_back(item);
  return out;
}

void print_manifest(const entail::RunManifest& manifest, const std::string& run_dir) {
  std::cout << "run " << manifest.run_id << " (" << run_dir << ")\n";
  for (const auto& s : manifest.stages) {
    std::cout << "  " << s.stage << ": " << s.status << "\n";
  }
}

int report_error(const std::exception& e) {
  json doc = {{"error", "internal"}, {"message", e.what()}};
  if (const auto* err = dynamic_cast<const entail::Error*>(&e)) {
    doc["error"] = entail::error_kind_name(err->kind());
  }
  if (const auto* data = dynamic_cast<const entail::DataError*>(&e)) {
    doc["line"] = data->line();
    if (!data->field().empty()) doc["field"] = data->field();
  }
  if (const auto* cfg = dynamic_cast<const entail::ConfigError*>(&e)) {
    doc["message"] = "invalid configuration";
    doc["violations"] = cfg->violations();
  }
  std::cerr << doc.dump() << std::endl;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"entail: entailment tuning and dense retrieval pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string stages_text;
  std::vector<std::string> assignments;
  const std::string set_help = "Override a config value, e.g. tune.learning_rate=1e-3";

  auto* run = app.add_subcommand("run", "Run several stages (default: the whole pipeline)");
  run->add_option("-c,--config", config_path, "Pipeline config (JSON)")->required();
  run->add_option("-s,--stages", stages_text, "Comma-separated stage list");
  run->add_option("--set", assignments, set_help);

  for (const auto& stage : entail::kStageOrder) {
    auto* sub = app.add_subcommand(stage, "Run only the \"" + stage + "\" stage");
    sub->add_option("-c,--config", config_path, "Pipeline config (JSON)")->required();
    sub->add_option("--set", assignments, set_help);
  }

  auto* validate = app.add_subcommand("validate", "Check a config and print it resolved");
  validate->add_option("-c,--config", config_path, "Pipeline config (JSON)")->required();
  validate->add_option("--set", assignments, set_help);

  std::string synth_out;
  entail::SyntheticConfig synth_cfg;
  auto* synth = app.add_subcommand("synth", "Write a synthetic toy dataset");
  synth->add_option("-o,--out", synth_out, "Output directory")->required();
  synth->add_option("--people", synth_cfg.people, "Number of invented people");
  synth->add_option("--seed", synth_cfg.seed, "Generator seed");
  synth->add_option("--heldout-fraction", synth_cfg.heldout_fraction,
                    "Share of people whose questions form the held-out split");

  CLI11_PARSE(app, argc, argv);

  try {
    entail::EnvMap overrides;
    for (const auto& a : assignments) overrides.insert(entail::override_entry(a));
    if (validate->parsed()) {
      entail::EnvMap env = entail::environment_overrides();
      for (const auto& [k, v] : overrides) env[k] = v;
      const entail::ConfigResult result = entail::validate_config(config_path, env);
      if (!result.ok()) throw entail::ConfigError(result.violations);
      std::cout << entail::to_json(*result.config).dump(2) << "\n";
      return 0;
    }
    if (synth->parsed()) {
      const entail::SyntheticWorld world = entail::generate_world(synth_cfg);
      entail::write_world(synth_out, world);
      std::cout << "wrote " << world.qa_train.size() << " train questions, "
                << world.qa_heldout.size() << " held-out questions, " << world.nli.size()
                << " NLI pairs and " << world.corpus.size() << " passages to " << synth_out
                << "\n";
      return 0;
    }

    const entail::PipelineConfig config = entail::load_config(config_path, overrides);
    std::vector<std::string> stages;
    if (run->parsed()) {
      stages = stages_text.empty() ? entail::default_stages(config) : split_list(stages_text);
    } else {
      for (const auto& stage : entail::kStageOrder) {
        if (app.got_subcommand(stage)) stages = {stage};
      }
    }
    const entail::RunManifest manifest = entail::run_pipeline(config, stages);
    print_manifest(manifest, entail::run_directory(config).string());
    return 0;
  } catch (const std::exception& e) {
    return report_error(e);
  }
}
