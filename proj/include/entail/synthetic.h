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


// Procedurally generated toy world for smoke runs and direction-of-effect
// experiments: invented people with a handful of templated facts each.
// Every question has exactly one labeled positive passage; the person's other
// passages share names with it and serve as hard negatives.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "entail/ingestion.h"

namespace entail {

struct SyntheticConfig {
  int people = 120;
  int facts_per_person = 3;       // answerable facts, one question each
  int distractors_per_person = 2; // passages that answer nothing
  int nli_facts_per_person = 2;   // separate facts phrased as NLI pairs
  double heldout_fraction = 0.3;  // share of people whose questions are held out
  std::uint64_t seed = 7;
};

struct SyntheticWorld {
  std::vector<QAExample> qa_train;
  std::vector<QAExample> qa_heldout;
  std::vector<NLIExample> nli;
  Corpus corpus;
};

SyntheticWorld generate_world(const SyntheticConfig& config);

// Writes qa_train.jsonl, qa_heldout.jsonl, nli.jsonl and corpus.jsonl.
void write_world(const std::filesystem::path& dir, const SyntheticWorld& world);

}  // namespace entail
