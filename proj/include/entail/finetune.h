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


// Contrastive fine-tuning of an encoder into a query/passage dual encoder.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "entail/encoder.h"
#include "entail/ingestion.h"
#include "entail/tokenizer.h"
#include "entail/trainer.h"
#include "json.hpp"

namespace entail {

// Inner product. Throws kInvalidArgument on a dimension mismatch.
double similarity(const Vector& u, const Vector& v);

// -log(e^pos / (e^pos + sum_j e^neg_j)), evaluated with a max shift.
// An empty negative list gives 0.
double nll_contrastive_loss(double sim_pos, std::span<const double> sim_negs);

struct TripletBatch {
  std::vector<std::string> queries;
  std::vector<std::string> positives;
  std::vector<std::vector<std::string>> hard_negatives;

  std::size_t size() const { return queries.size(); }
  // Throws unless lengths agree and no query repeats.
  void validate() const;
};

struct FinetuneConfig {
  int epochs = 40;
  double learning_rate = 2e-5;
  int batch_size = 32;
  int negatives_per_query = 1;
  std::uint64_t seed = 0;
  int warmup_steps = 100;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double max_grad_norm = 1.0;
  std::size_t max_len = 256;

  OptimizerSettings optimizer() const;
  void validate() const;
};

struct DualEncoder {
  EncoderModel query;
  EncoderModel passage;
};

struct FinetuneLog {
  std::vector<double> step_loss;
  std::vector<double> epoch_mean_loss;
  std::size_t skipped_batches = 0;
  std::vector<std::string> warnings;

  std::vector<nlohmann::json> to_json_lines() const;
};

// Splits one epoch's example order into batches with no repeated question.
// A question already present in the open batch is deferred to a later one.
// Hard negatives are drawn without replacement from each example's
// negative_passages using `rng`.
std::vector<TripletBatch> make_batches(const std::vector<QAExample>& data,
                                       const std::vector<std::size_t>& order,
                                       const FinetuneConfig& config, Rng& rng);

// Mean over queries of the contrastive loss, where query i scores its
// positive against every other distinct passage of the batch (other
// queries' positives and all hard negatives). Adds the gradient of that mean
// into the two gradient sets. Returns the loss.
double accumulate_contrastive_gradient(const DualEncoder& model,
                                       const Tokenizer& tokenizer,
                                       const TripletBatch& batch,
                                       std::size_t max_len,
                                       Parameters& query_grads,
                                       Parameters& passage_grads);

// Both towers start as copies of `init`.
DualEncoder finetune(const EncoderModel& init, const Tokenizer& tokenizer,
                     const std::vector<QAExample>& data,
                     const FinetuneConfig& config, FinetuneLog* log = nullptr);

}  // namespace entail
