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

#include "entail/trainer.h"

#include <chrono>
#include <cmath>
#include <numeric>

#include "entail/common.h"

namespace entail {

using nlohmann::json;

void OptimizerSettings::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::kConfig, "learning_rate must be positive");
  if (warmup_steps < 0) throw Error(ErrorKind::kConfig, "warmup_steps must be >= 0");
  if (weight_decay < 0.0) throw Error(ErrorKind::kConfig, "weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorKind::kConfig, "adam betas must lie in [0,1)");
  }
  if (!(epsilon > 0.0)) throw Error(ErrorKind::kConfig, "adam_epsilon must be positive");
  if (!(max_grad_norm > 0.0)) throw Error(ErrorKind::kConfig, "max_grad_norm must be positive");
}

std::vector<Matrix*> tensor_list(Parameters& params) {
  std::vector<Matrix*> out;
  params.for_each([&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<bool> decay_mask(const Parameters& params) {
  std::vector<bool> out;
  params.for_each([&](const std::string& name, const Matrix&) {
    out.push_back(!name.ends_with(".bias") && name.find("LayerNorm") == std::string::npos);
  });
  return out;
}

double global_norm(const std::vector<Matrix*>& tensors) {
  double sq = 0.0;
  for (const Matrix* t : tensors) sq += t->squaredNorm();
  return std::sqrt(sq);
}

AdamW::AdamW(std::vector<Matrix*> params, std::vector<bool> decay,
             const OptimizerSettings& settings)
    : params_(std::move(params)), decay_(std::move(decay)), settings_(settings) {
  settings_.validate();
  if (decay_.size() != params_.size()) {
    throw Error(ErrorKind::kInvalidArgument, "decay mask does not match parameters");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Matrix* p : params_) {
    m_.push_back(Matrix::Zero(p->rows(), p->cols()));
    v_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

AdamW AdamW::for_parameters(Parameters& params, const OptimizerSettings& settings) {
  return AdamW(tensor_list(params), decay_mask(params), settings);
}

double AdamW::learning_rate_at(std::int64_t step) const {
  if (settings_.warmup_steps > 0 && step < settings_.warmup_steps) {
    return settings_.learning_rate * static_cast<double>(step + 1) /
           static_cast<double>(settings_.warmup_steps);
  }
  return settings_.learning_rate;
}

AdamW::StepStats AdamW::step(const std::vector<Matrix*>& grads) {
  if (grads.size() != params_.size()) {
    throw Error(ErrorKind::kInvalidArgument, "gradient list does not match parameters");
  }
  StepStats stats;
  stats.grad_norm = global_norm(grads);
  if (stats.grad_norm > settings_.max_grad_norm) {
    const double factor = settings_.max_grad_norm / (stats.grad_norm + 1e-6);
    for (Matrix* g : grads) *g *= factor;
  }
  stats.clipped_grad_norm = global_norm(grads);
  stats.learning_rate = learning_rate_at(step_);
  ++step_;

  const double lr = stats.learning_rate;
  const double b1 = settings_.beta1;
  const double b2 = settings_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Matrix& p = *params_[i];
    const Matrix& g = *grads[i];
    if (decay_[i] && settings_.weight_decay > 0.0) p *= 1.0 - lr * settings_.weight_decay;
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseAbs2();
    p.array() -= lr * (m_[i].array() / bias1) /
                 ((v_[i].array() / bias2).sqrt() + settings_.epsilon);
  }
  return stats;
}

OptimizerSettings TuneConfig::optimizer() const {
  OptimizerSettings s;
  s.learning_rate = learning_rate;
  s.warmup_steps = warmup_steps;
  s.weight_decay = weight_decay;
  s.beta1 = adam_beta1;
  s.beta2 = adam_beta2;
  s.epsilon = adam_epsilon;
  s.max_grad_norm = max_grad_norm;
  return s;
}

void TuneConfig::validate() const {
  optimizer().validate();
  mask.validate();
  if (batch_size < 1) throw Error(ErrorKind::kConfig, "batch_size must be >= 1");
  if (epochs < 1) throw Error(ErrorKind::kConfig, "epochs must be >= 1");
  if (max_len < 4) throw Error(ErrorKind::kConfig, "max_len must be >= 4");
}

std::vector<json> TrainLog::to_json_lines() const {
  std::vector<json> out;
  out.reserve(step_loss.size());
  for (std::size_t i = 0; i < step_loss.size(); ++i) {
    out.push_back({{"step", i + 1}, {"loss", step_loss[i]}});
  }
  return out;
}

namespace {

void check_instance(const Matrix& log_probs, const PromptedInstance& instance) {
  if (instance.mask_positions.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "instance has no masked positions");
  }
  if (instance.labels.size() != instance.mask_positions.size()) {
    throw Error(ErrorKind::kInvalidArgument, "labels do not align with mask positions");
  }
  for (std::size_t i = 0; i < instance.mask_positions.size(); ++i) {
    if (instance.mask_positions[i] >= static_cast<std::size_t>(log_probs.rows())) {
      throw Error(ErrorKind::kInvalidArgument, "mask position beyond logits");
    }
    if (instance.labels[i] < 0 || instance.labels[i] >= log_probs.cols()) {
      throw Error(ErrorKind::kInvalidArgument, "label outside vocabulary");
    }
  }
}

}  // namespace

double mlm_loss(const Matrix& log_probs, const PromptedInstance& instance) {
  check_instance(log_probs, instance);
  double loss = 0.0;
  for (std::size_t i = 0; i < instance.mask_positions.size(); ++i) {
    loss -= log_probs(static_cast<Eigen::Index>(instance.mask_positions[i]),
                      instance.labels[i]);
  }
  return loss;
}

Matrix mlm_loss_grad(const Matrix& log_probs, const PromptedInstance& instance) {
  check_instance(log_probs, instance);
  Matrix grad = Matrix::Zero(log_probs.rows(), log_probs.cols());
  for (std::size_t i = 0; i < instance.mask_positions.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(instance.mask_positions[i]);
    grad.row(row) = log_probs.row(row).array().exp();
    grad(row, instance.labels[i]) -= 1.0;
  }
  return grad;
}

double accumulate_mlm_gradient(const EncoderModel& model,
                               const PromptedInstance& instance, double scale,
                               Parameters& grads) {
  const ForwardPass pass = model.forward(instance.token_ids);
  const HeadPass head = model.head_forward(pass, instance.mask_positions);
  double loss = 0.0;
  Matrix d_logits = head.log_probs.array().exp() * scale;
  for (std::size_t i = 0; i < instance.mask_positions.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    loss -= head.log_probs(row, instance.labels[i]);
    d_logits(row, instance.labels[i]) -= scale;
  }
  Matrix d_output = Matrix::Zero(pass.output.rows(), pass.output.cols());
  model.head_backward(pass, head, d_logits, grads, d_output);
  model.backward(pass, d_output, grads);
  return loss;
}

std::vector<PromptedInstance> build_instances(const std::vector<PromptedText>& prompts,
                                              const Tokenizer& tokenizer,
                                              const TuneConfig& config,
                                              std::size_t* rejected) {
  Rng rng(config.mask.seed);
  std::vector<PromptedInstance> instances;
  std::size_t dropped = 0;
  for (const auto& prompt : prompts) {
    try {
      const TokenizedPrompt tokens =
          tokenize_with_span(prompt, tokenizer, config.max_len, config.truncation);
      instances.push_back(mask_hypothesis(tokens, config.mask, rng, tokenizer));
    } catch (const InstanceRejected&) {
      ++dropped;
    }
  }
  if (rejected) *rejected = dropped;
  if (instances.empty()) {
    throw Error(ErrorKind::kRejected, "empty training set: all " +
                                          std::to_string(prompts.size()) +
                                          " prompts were rejected");
  }
  return instances;
}

std::vector<PromptedInstance> build_mlm_instances(const std::vector<std::string>& texts,
                                                  const Tokenizer& tokenizer,
                                                  double rate, std::size_t max_len,
                                                  std::uint64_t seed) {
  if (!(rate > 0.0 && rate <= 1.0)) {
    throw Error(ErrorKind::kConfig, "mask rate must lie in (0,1]");
  }
  Rng rng(seed);
  std::vector<PromptedInstance> out;
  for (const auto& text : texts) {
    std::vector<int> ids = tokenizer.encode_for_model(text, max_len);
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!tokenizer.is_special(ids[i])) candidates.push_back(i);
    }
    if (candidates.empty()) continue;
    PromptedInstance inst;
    inst.hypothesis = {0, ids.size()};
    inst.attention_length = ids.size();
    for (std::size_t pos : candidates) {
      if (rng.bernoulli(rate)) inst.mask_positions.push_back(pos);
    }
    if (inst.mask_positions.empty()) {
      inst.mask_positions.push_back(candidates[rng.below(candidates.size())]);
    }
    for (std::size_t pos : inst.mask_positions) {
      inst.labels.push_back(ids[pos]);
      ids[pos] = tokenizer.mask_id();
    }
    inst.token_ids = std::move(ids);
    out.push_back(std::move(inst));
  }
  if (out.empty()) throw Error(ErrorKind::kRejected, "empty training set: no maskable text");
  return out;
}

TrainLog train_on_instances(EncoderModel& model,
                            const std::vector<PromptedInstance>& instances,
                            const TuneConfig& config, const EpochCallback& on_epoch_end) {
  config.validate();
  if (instances.empty()) throw Error(ErrorKind::kInvalidArgument, "no training instances");
  TrainLog log;
  log.instances = instances.size();

  Parameters grads = Parameters::zeros(model.config());
  const std::vector<Matrix*> grad_list = tensor_list(grads);
  AdamW optimizer = AdamW::for_parameters(model.params(), config.optimizer());

  std::vector<std::size_t> order(instances.size());
  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(config.seed, "epoch-" + std::to_string(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::size_t masked = 0;
      for (std::size_t i = start; i < end; ++i) {
        masked += instances[order[i]].mask_positions.size();
      }
      const double scale = 1.0 / static_cast<double>(masked);
      grads.set_zero();
      double loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        loss += accumulate_mlm_gradient(model, instances[order[i]], scale, grads);
      }
      loss *= scale;
      const AdamW::StepStats stats = optimizer.step(grad_list);
      log.step_loss.push_back(loss);
      log.step_grad_norm.push_back(stats.clipped_grad_norm);
      epoch_loss += loss;
      ++epoch_steps;
    }
    log.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(epoch_steps));
    log.epoch_seconds.push_back(std::chrono::duration<double>(
                                    std::chrono::steady_clock::now() - started)
                                    .count());
    if (on_epoch_end) on_epoch_end(epoch, model);
  }
  return log;
}

TrainLog entailment_tune(EncoderModel& model, const Tokenizer& tokenizer,
                         const std::vector<PromptedText>& prompts,
                         const TuneConfig& config, const EpochCallback& on_epoch_end) {
  config.validate();
  if (prompts.empty()) throw Error(ErrorKind::kInvalidArgument, "no training pairs");
  if (static_cast<int>(tokenizer.size()) != model.config().vocab_size) {
    throw Error(ErrorKind::kInvalidArgument, "tokenizer and model vocabularies differ");
  }
  TuneConfig effective = config;
  effective.max_len = std::min<std::size_t>(config.max_len, model.config().max_len);

  std::size_t rejected = 0;
  const std::vector<PromptedInstance> instances =
      build_instances(prompts, tokenizer, effective, &rejected);
  TrainLog log = train_on_instances(model, instances, config, on_epoch_end);
  log.rejected = rejected;
  return log;
}

TrainLog entailment_tune(EncoderModel& model, const Tokenizer& tokenizer,
                         const std::vector<EntailmentPair>& pairs,
                         PromptStrategy strategy, const TuneConfig& config,
                         const EpochCallback& on_epoch_end) {
  std::vector<PromptedText> prompts;
  prompts.reserve(pairs.size());
  for (const auto& p : pairs) prompts.push_back(assemble(p, strategy));
  return entailment_tune(model, tokenizer, prompts, config, on_epoch_end);
}

}  // namespace entail
