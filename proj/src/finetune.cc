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


#include "entail/finetune.h"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <set>

#include "entail/common.h"

namespace entail {

using nlohmann::json;

double similarity(const Vector& u, const Vector& v) {
  if (u.size() != v.size()) {
    throw Error(ErrorKind::kInvalidArgument,
                "similarity of vectors with dimensions " + std::to_string(u.size()) +
                    " and " + std::to_string(v.size()));
  }
  return u.dot(v);
}

double nll_contrastive_loss(double sim_pos, std::span<const double> sim_negs) {
  if (sim_negs.empty()) return 0.0;
  double top = sim_pos;
  for (double s : sim_negs) top = std::max(top, s);
  double denom = std::exp(sim_pos - top);
  for (double s : sim_negs) denom += std::exp(s - top);
  return -(sim_pos - top) + std::log(denom);
}

void TripletBatch::validate() const {
  if (positives.size() != queries.size() || hard_negatives.size() != queries.size()) {
    throw Error(ErrorKind::kInvalidArgument, "triplet batch fields are not aligned");
  }
  std::set<std::string> seen;
  for (const auto& q : queries) {
    if (!seen.insert(q).second) {
      throw Error(ErrorKind::kInvalidArgument, "query repeated in batch: " + q);
    }
  }
}

OptimizerSettings FinetuneConfig::optimizer() const {
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

void FinetuneConfig::validate() const {
  optimizer().validate();
  if (epochs < 1) throw Error(ErrorKind::kConfig, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorKind::kConfig, "batch_size must be >= 1");
  if (negatives_per_query < 0) {
    throw Error(ErrorKind::kConfig, "negatives_per_query must be >= 0");
  }
  if (max_len < 3) throw Error(ErrorKind::kConfig, "max_len must be >= 3");
}

std::vector<json> FinetuneLog::to_json_lines() const {
  std::vector<json> out;
  out.reserve(step_loss.size());
  for (std::size_t i = 0; i < step_loss.size(); ++i) {
    out.push_back({{"step", i + 1}, {"loss", step_loss[i]}});
  }
  return out;
}

std::vector<TripletBatch> make_batches(const std::vector<QAExample>& data,
                                       const std::vector<std::size_t>& order,
                                       const FinetuneConfig& config, Rng& rng) {
  const auto limit = static_cast<std::size_t>(config.batch_size);
  std::vector<TripletBatch> batches;
  std::vector<std::size_t> pending(order.begin(), order.end());
  while (!pending.empty()) {
    TripletBatch batch;
    std::set<std::string> in_batch;
    std::vector<std::size_t> deferred;
    for (std::size_t idx : pending) {
      const QAExample& ex = data[idx];
      if (batch.size() == limit || in_batch.contains(ex.question)) {
        deferred.push_back(idx);
        continue;
      }
      in_batch.insert(ex.question);
      batch.queries.push_back(ex.question);
      batch.positives.push_back(ex.positive_passages.front().body);
      std::vector<std::size_t> pool(ex.negative_passages.size());
      std::iota(pool.begin(), pool.end(), 0);
      rng.shuffle(pool);
      pool.resize(std::min(pool.size(),
                           static_cast<std::size_t>(config.negatives_per_query)));
      std::vector<std::string> negs;
      for (std::size_t j : pool) negs.push_back(ex.negative_passages[j].body);
      batch.hard_negatives.push_back(std::move(negs));
    }
    batches.push_back(std::move(batch));
    pending = std::move(deferred);
  }
  return batches;
}

namespace {

ForwardPass encode_pass(const EncoderModel& model, const Tokenizer& tokenizer,
                        const std::string& text, std::size_t max_len) {
  const std::vector<int> ids = tokenizer.encode_for_model(text, max_len);
  return model.forward(ids);
}

void backprop_cls(const EncoderModel& model, const ForwardPass& pass,
                  const Vector& d_cls, Parameters& grads) {
  Matrix d_output = Matrix::Zero(pass.output.rows(), pass.output.cols());
  d_output.row(0) = d_cls.transpose();
  model.backward(pass, d_output, grads);
}

}  // namespace

double accumulate_contrastive_gradient(const DualEncoder& model,
                                       const Tokenizer& tokenizer,
                                       const TripletBatch& batch,
                                       std::size_t max_len,
                                       Parameters& query_grads,
                                       Parameters& passage_grads) {
  batch.validate();
  const std::size_t n = batch.size();
  if (n == 0) throw Error(ErrorKind::kInvalidArgument, "empty batch");

  // Distinct passage texts: positives first, then hard negatives.
  std::vector<std::string> passages;
  std::vector<std::size_t> target(n);
  auto column_of = [&](const std::string& text) {
    auto it = std::find(passages.begin(), passages.end(), text);
    if (it != passages.end()) return static_cast<std::size_t>(it - passages.begin());
    passages.push_back(text);
    return passages.size() - 1;
  };
  for (std::size_t i = 0; i < n; ++i) target[i] = column_of(batch.positives[i]);
  for (const auto& negs : batch.hard_negatives) {
    for (const auto& text : negs) column_of(text);
  }
  const std::size_t m = passages.size();
  if (m < 2) throw Error(ErrorKind::kInvalidArgument, "batch has no negatives");

  const std::size_t qlen = std::min<std::size_t>(max_len, model.query.config().max_len);
  const std::size_t plen = std::min<std::size_t>(max_len, model.passage.config().max_len);
  std::vector<ForwardPass> q_pass, p_pass;
  q_pass.reserve(n);
  p_pass.reserve(m);
  const auto h = static_cast<Eigen::Index>(model.query.hidden());
  Matrix q(static_cast<Eigen::Index>(n), h);
  Matrix p(static_cast<Eigen::Index>(m), h);
  for (std::size_t i = 0; i < n; ++i) {
    q_pass.push_back(encode_pass(model.query, tokenizer, batch.queries[i], qlen));
    q.row(static_cast<Eigen::Index>(i)) = q_pass.back().output.row(0);
  }
  for (std::size_t j = 0; j < m; ++j) {
    p_pass.push_back(encode_pass(model.passage, tokenizer, passages[j], plen));
    p.row(static_cast<Eigen::Index>(j)) = p_pass.back().output.row(0);
  }

  const Matrix scores = q * p.transpose();
  Matrix d_scores = Matrix::Zero(scores.rows(), scores.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double top = scores.row(r).maxCoeff();
    const Eigen::RowVectorXd e = (scores.row(r).array() - top).exp().matrix();
    const double z = e.sum();
    const auto t = static_cast<Eigen::Index>(target[i]);
    loss += -(scores(r, t) - top) + std::log(z);
    d_scores.row(r) = e / z;
    d_scores(r, t) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  d_scores *= inv_n;
  loss *= inv_n;

  const Matrix d_q = d_scores * p;
  const Matrix d_p = d_scores.transpose() * q;
  for (std::size_t i = 0; i < n; ++i) {
    backprop_cls(model.query, q_pass[i], d_q.row(static_cast<Eigen::Index>(i)).transpose(),
                 query_grads);
  }
  for (std::size_t j = 0; j < m; ++j) {
    backprop_cls(model.passage, p_pass[j],
                 d_p.row(static_cast<Eigen::Index>(j)).transpose(), passage_grads);
  }
  return loss;
}

DualEncoder finetune(const EncoderModel& init, const Tokenizer& tokenizer,
                     const std::vector<QAExample>& data,
                     const FinetuneConfig& config, FinetuneLog* log) {
  config.validate();
  if (data.empty()) throw Error(ErrorKind::kInvalidArgument, "no fine-tuning examples");
  for (const auto& ex : data) {
    if (ex.positive_passages.empty()) {
      throw Error(ErrorKind::kInvalidArgument,
                  "example \"" + ex.id + "\" has no positive passage");
    }
  }
  if (static_cast<int>(tokenizer.size()) != init.config().vocab_size) {
    throw Error(ErrorKind::kInvalidArgument, "tokenizer and model vocabularies differ");
  }

  DualEncoder model{init, init};
  Parameters q_grads = Parameters::zeros(init.config());
  Parameters p_grads = Parameters::zeros(init.config());

  std::vector<Matrix*> params = tensor_list(model.query.params());
  std::vector<bool> decay = decay_mask(model.query.params());
  std::vector<Matrix*> grads = tensor_list(q_grads);
  {
    const auto more = tensor_list(model.passage.params());
    const auto more_decay = decay_mask(model.passage.params());
    const auto more_grads = tensor_list(p_grads);
    params.insert(params.end(), more.begin(), more.end());
    decay.insert(decay.end(), more_decay.begin(), more_decay.end());
    grads.insert(grads.end(), more_grads.begin(), more_grads.end());
  }
  AdamW optimizer(params, decay, config.optimizer());

  FinetuneLog local;
  FinetuneLog& out = log ? *log : local;
  std::vector<std::size_t> order(data.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(config.seed, "finetune-epoch-" + std::to_string(epoch)));
    rng.shuffle(order);
    const std::vector<TripletBatch> batches = make_batches(data, order, config, rng);

    double epoch_loss = 0.0;
    std::size_t steps = 0;
    for (const auto& batch : batches) {
      const bool lonely = batch.size() == 1 && batch.hard_negatives.front().empty();
      if (lonely) {
        ++out.skipped_batches;
        const std::string msg = "epoch " + std::to_string(epoch) +
                                ": skipped single-query batch without negatives";
        out.warnings.push_back(msg);
        std::cerr << "warning: " << msg << '\n';
        continue;
      }
      q_grads.set_zero();
      p_grads.set_zero();
      const double loss = accumulate_contrastive_gradient(model, tokenizer, batch,
                                                          config.max_len, q_grads, p_grads);
      optimizer.step(grads);
      out.step_loss.push_back(loss);
      epoch_loss += loss;
      ++steps;
    }
    out.epoch_mean_loss.push_back(steps ? epoch_loss / static_cast<double>(steps) : 0.0);
  }
  return model;
}

}  // namespace entail
