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

// Entailment tuning: masked-hypothesis prediction over prompted pairs.

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "entail/encoder.h"
#include "entail/masking.h"
#include "entail/prompt.h"
#include "entail/tokenizer.h"
#include "json.hpp"

namespace entail {

struct OptimizerSettings {
  double learning_rate = 2e-5;
  int warmup_steps = 100;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double max_grad_norm = 1.0;

  void validate() const;
};

// Adam with decoupled weight decay, linear warmup to a constant rate, and
// global-norm gradient clipping. Biases and norm parameters are not decayed.
class AdamW {
 public:
  struct StepStats {
    double grad_norm = 0.0;          // before clipping
    double clipped_grad_norm = 0.0;  // after clipping
    double learning_rate = 0.0;
  };

  AdamW(std::vector<Matrix*> params, std::vector<bool> decay,
        const OptimizerSettings& settings);
  // Convenience for a single model.
  static AdamW for_parameters(Parameters& params, const OptimizerSettings& settings);

  // Learning rate applied at 0-based `step`.
  double learning_rate_at(std::int64_t step) const;

  // Clips `grads` in place, then updates the parameters.
  StepStats step(const std::vector<Matrix*>& grads);

  std::int64_t steps_taken() const { return step_; }

 private:
  std::vector<Matrix*> params_;
  std::vector<bool> decay_;
  std::vector<Matrix> m_, v_;
  OptimizerSettings settings_;
  std::int64_t step_ = 0;
};

// Tensor list of `params` in canonical order, plus whether each is decayed.
std::vector<Matrix*> tensor_list(Parameters& params);
std::vector<bool> decay_mask(const Parameters& params);
double global_norm(const std::vector<Matrix*>& tensors);

struct TuneConfig {
  double learning_rate = 2e-5;
  int warmup_steps = 100;
  int batch_size = 128;
  int epochs = 10;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double max_grad_norm = 1.0;
  MaskConfig mask;
  std::uint64_t seed = 0;
  std::size_t max_len = kDefaultMaxLen;
  TruncationPolicy truncation = TruncationPolicy::kPremiseTail;

  OptimizerSettings optimizer() const;
  // Throws kConfig listing the first violated field.
  void validate() const;
};

struct TrainLog {
  std::vector<double> step_loss;
  std::vector<double> step_grad_norm;  // post-clip
  std::vector<double> epoch_mean_loss;
  std::vector<double> epoch_seconds;
  std::size_t instances = 0;
  std::size_t rejected = 0;

  // One {"step", "loss"} record per optimizer step.
  std::vector<nlohmann::json> to_json_lines() const;
};

// Sum over masked positions of -log p(label). `log_probs` holds one row per
// sequence position. Throws when the instance has no masked position.
double mlm_loss(const Matrix& log_probs, const PromptedInstance& instance);
// d(mlm_loss)/d(logits): softmax minus one-hot on masked rows, zero elsewhere.
Matrix mlm_loss_grad(const Matrix& log_probs, const PromptedInstance& instance);

// Loss (summed over masked positions) and accumulated parameter gradients
// for one instance, scaled by `scale`.
double accumulate_mlm_gradient(const EncoderModel& model,
                               const PromptedInstance& instance, double scale,
                               Parameters& grads);

// Tokenizes and masks every prompt once; rejected prompts are counted and
// skipped. Throws kRejected with "empty training set" when nothing survives.
std::vector<PromptedInstance> build_instances(const std::vector<PromptedText>& prompts,
                                              const Tokenizer& tokenizer,
                                              const TuneConfig& config,
                                              std::size_t* rejected = nullptr);

using EpochCallback = std::function<void(int epoch, const EncoderModel& model)>;

// Optimizes `model` over a fixed pool of masked instances. Only the
// optimizer fields, batch_size, epochs and seed of `config` are used.
TrainLog train_on_instances(EncoderModel& model,
                            const std::vector<PromptedInstance>& instances,
                            const TuneConfig& config,
                            const EpochCallback& on_epoch_end = {});

// Generic masked-LM instances over raw text: every non-special token is
// masked independently with probability `rate`; texts that end up with no
// mask get one uniformly chosen position. Used to give several encoders the
// same generic pretraining before they diverge.
std::vector<PromptedInstance> build_mlm_instances(const std::vector<std::string>& texts,
                                                  const Tokenizer& tokenizer,
                                                  double rate, std::size_t max_len,
                                                  std::uint64_t seed);

// Trains `model` in place. Each epoch is one pass over the instance pool
// in an order reshuffled from (seed, epoch); the batch loss is the mean
// over all masked positions in the batch.
TrainLog entailment_tune(EncoderModel& model, const Tokenizer& tokenizer,
                         const std::vector<PromptedText>& prompts,
                         const TuneConfig& config,
                         const EpochCallback& on_epoch_end = {});

TrainLog entailment_tune(EncoderModel& model, const Tokenizer& tokenizer,
                         const std::vector<EntailmentPair>& pairs,
                         PromptStrategy strategy, const TuneConfig& config,
                         const EpochCallback& on_epoch_end = {});

}  // namespace entail
