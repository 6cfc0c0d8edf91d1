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


#include <cmath>

#include "doctest.h"
#include "entail/prompt.h"
#include "entail/trainer.h"
#include "oracles.h"

using namespace entail;

namespace {

PromptedInstance instance(std::vector<int> ids, std::vector<std::size_t> positions,
                          std::vector<int> labels) {
  PromptedInstance inst;
  inst.token_ids = std::move(ids);
  inst.mask_positions = std::move(positions);
  inst.labels = std::move(labels);
  inst.hypothesis = {1, inst.token_ids.size() - 1};
  inst.attention_length = inst.token_ids.size();
  return inst;
}

Matrix log_of(const Matrix& probs) { return probs.array().log(); }

const Tokenizer& tokenizer() {
  static const Tokenizer tok = [] {
    std::vector<std::string> texts;
    oracle::Gen gen(5);
    for (int i = 0; i < 100; ++i) texts.push_back(gen.sentence(4, 8));
    texts.push_back("entails that");
    return Tokenizer::build(texts, 3000);
  }();
  return tok;
}

std::vector<EntailmentPair> random_pairs(int n, unsigned seed) {
  oracle::Gen gen(seed);
  std::vector<EntailmentPair> pairs;
  for (int i = 0; i < n; ++i) {
    pairs.emplace_back(gen.sentence(3, 8), gen.sentence(2, 5), PairOrigin::kNli);
  }
  return pairs;
}

EncoderConfig model_config() {
  EncoderConfig c;
  c.vocab_size = static_cast<int>(tokenizer().size());
  c.hidden = 16;
  c.layers = 1;
  c.heads = 2;
  c.max_len = 32;
  return c;
}

TuneConfig tune_config() {
  TuneConfig c;
  c.learning_rate = 1e-3;
  c.warmup_steps = 2;
  c.batch_size = 4;
  c.epochs = 2;
  c.max_len = 32;
  c.seed = 17;
  c.mask.beta = 0.8;
  return c;
}

}  // namespace

TEST_CASE("masked-LM loss oracles") {
  // Certain prediction of the right token.
  Matrix certain = Matrix::Constant(3, 4, 1e-300);
  certain(1, 2) = 1.0;
  CHECK(mlm_loss(log_of(certain), instance({0, 4, 1}, {1}, {2})) == doctest::Approx(0.0));

  // Uniform over four tokens at two masked positions.
  const Matrix uniform = Matrix::Constant(4, 4, 0.25);
  CHECK(mlm_loss(log_of(uniform), instance({0, 4, 4, 1}, {1, 2}, {0, 3})) ==
        doctest::Approx(2 * std::log(4.0)));

  Matrix half = Matrix::Constant(3, 4, 0.5 / 3);
  half(1, 3) = 0.5;
  CHECK(mlm_loss(log_of(half), instance({0, 4, 1}, {1}, {3})) == doctest::Approx(std::log(2.0)));

  CHECK_THROWS_AS(mlm_loss(log_of(uniform), instance({0, 4, 4, 1}, {}, {})), Error);
}

TEST_CASE("loss gradient is zero off the masked rows") {
  std::mt19937 engine(3);
  Matrix logits(6, 5);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = unit(engine);
  Matrix lp = logits;
  for (Eigen::Index r = 0; r < lp.rows(); ++r) {
    const double lse = std::log(logits.row(r).array().exp().sum());
    lp.row(r).array() -= lse;
  }
  const PromptedInstance inst = instance({0, 5, 4, 4, 6, 1}, {2, 3}, {1, 4});
  const Matrix g = mlm_loss_grad(lp, inst);
  for (Eigen::Index r : {0, 1, 4, 5}) CHECK(g.row(r).norm() == 0.0);
  for (Eigen::Index r : {2, 3}) CHECK(std::abs(g.row(r).sum()) < 1e-12);

  // Against central differences on the logits.
  for (Eigen::Index r : {2, 3}) {
    for (Eigen::Index c = 0; c < 5; ++c) {
      auto at = [&](double delta) {
        Matrix l = logits;
        l(r, c) += delta;
        Matrix p = l;
        for (Eigen::Index k = 0; k < p.rows(); ++k) {
          p.row(k).array() -= std::log(l.row(k).array().exp().sum());
        }
        return mlm_loss(p, inst);
      };
      CHECK(g(r, c) == doctest::Approx((at(1e-6) - at(-1e-6)) / 2e-6).epsilon(1e-6));
    }
  }
}

TEST_CASE("warmup ramps linearly then holds") {
  Matrix w = Matrix::Zero(1, 1);
  OptimizerSettings s;
  s.learning_rate = 1e-3;
  s.warmup_steps = 4;
  AdamW opt({&w}, {true}, s);
  CHECK(opt.learning_rate_at(0) == doctest::Approx(2.5e-4));
  CHECK(opt.learning_rate_at(3) == doctest::Approx(1e-3));
  CHECK(opt.learning_rate_at(1000) == doctest::Approx(1e-3));
  s.warmup_steps = 0;
  AdamW flat({&w}, {true}, s);
  CHECK(flat.learning_rate_at(0) == doctest::Approx(1e-3));
}

TEST_CASE("clipping bounds the global norm") {
  oracle::Gen gen(4);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix a(3, 4), b(1, 7);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = gen.uniform(-50, 50);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = gen.uniform(-50, 50);
    Matrix pa = Matrix::Zero(3, 4), pb = Matrix::Zero(1, 7);
    OptimizerSettings s;
    s.max_grad_norm = gen.uniform(0.1, 5.0);
    AdamW opt({&pa, &pb}, {true, false}, s);
    const auto stats = opt.step({&a, &b});
    CHECK(stats.grad_norm > s.max_grad_norm);
    CHECK(stats.clipped_grad_norm <= s.max_grad_norm + 1e-6);
    CHECK(global_norm({&a, &b}) == doctest::Approx(stats.clipped_grad_norm));
  }
}

TEST_CASE("AdamW step against a hand computation") {
  Matrix w(1, 2), bias(1, 1);
  w << 1.0, -2.0;
  bias << 0.5;
  OptimizerSettings s;
  s.learning_rate = 0.1;
  s.warmup_steps = 0;
  s.weight_decay = 0.1;
  s.max_grad_norm = 100.0;
  AdamW opt({&w, &bias}, {true, false}, s);
  Matrix gw(1, 2), gb(1, 1);
  gw << 0.3, -0.4;
  gb << 0.2;
  opt.step({&gw, &gb});
  // Step one: m-hat = g, v-hat = g^2, so the update is lr * g / (|g| + eps).
  const double eps = 1e-8;
  CHECK(w(0, 0) == doctest::Approx(1.0 * (1 - 0.01) - 0.1 * 0.3 / (0.3 + eps)));
  CHECK(w(0, 1) == doctest::Approx(-2.0 * (1 - 0.01) + 0.1 * 0.4 / (0.4 + eps)));
  CHECK(bias(0, 0) == doctest::Approx(0.5 - 0.1 * 0.2 / (0.2 + eps)));

  // Step two with a new gradient.
  gw << 0.1, 0.1;
  gb << -0.2;
  const double w0 = w(0, 0);
  opt.step({&gw, &gb});
  const double m = 0.9 * 0.1 * 0.3 + 0.1 * 0.1;
  const double v = 0.999 * 0.001 * 0.09 + 0.001 * 0.01;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
  CHECK(w(0, 0) == doctest::Approx(w0 * (1 - 0.01) - 0.1 * mhat / (std::sqrt(vhat) + eps)));
}

TEST_CASE("bias and norm parameters are not decayed") {
  const Parameters p = Parameters::zeros(model_config());
  const auto mask = decay_mask(p);
  std::size_t i = 0;
  p.for_each([&](const std::string& name, const Matrix&) {
    const bool exempt = name.ends_with(".bias") || name.find("LayerNorm") != std::string::npos;
    CHECK(mask[i++] == !exempt);
  });
}

TEST_CASE("config validation") {
  TuneConfig c = tune_config();
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tune_config();
  c.mask.beta = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tune_config();
  c.learning_rate = -1;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("an all-rejected training set is an error") {
  EncoderModel model(model_config(), 1);
  std::string long_hypothesis;
  for (int i = 0; i < 80; ++i) long_hypothesis += "entails ";
  const std::vector<EntailmentPair> pairs = {
      EntailmentPair("a", long_hypothesis, PairOrigin::kNli)};
  try {
    entailment_tune(model, tokenizer(), pairs, PromptStrategy::kPrompt, tune_config());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("empty training set") != std::string::npos);
  }
}

TEST_CASE("training is deterministic and moves the loss") {
  const auto pairs = random_pairs(24, 8);
  TuneConfig config = tune_config();
  config.epochs = 6;
  EncoderModel a(model_config(), 2), b(model_config(), 2);
  int callbacks = 0;
  const TrainLog la = entailment_tune(a, tokenizer(), pairs, PromptStrategy::kPrompt, config,
                                      [&](int, const EncoderModel&) { ++callbacks; });
  const TrainLog lb = entailment_tune(b, tokenizer(), pairs, PromptStrategy::kPrompt, config);
  CHECK(callbacks == 6);
  CHECK(la.step_loss == lb.step_loss);
  CHECK(la.step_loss.size() == 6 * 6);
  CHECK(la.epoch_mean_loss.size() == 6);
  CHECK(la.epoch_mean_loss.back() < la.epoch_mean_loss.front());
  for (double g : la.step_grad_norm) CHECK(g <= config.max_grad_norm + 1e-6);
  const std::vector<int> ids = {tokenizer().cls_id(), tokenizer().sep_id()};
  CHECK(a.embed(ids) == b.embed(ids));
  CHECK(la.to_json_lines().front().at("step") == 1);
}

TEST_CASE("batch loss is the mean over masked positions") {
  EncoderModel model(model_config(), 4);
  TuneConfig config = tune_config();
  config.epochs = 1;
  config.batch_size = 1000;
  const auto pairs = random_pairs(5, 9);
  std::vector<PromptedText> prompts;
  for (const auto& p : pairs) prompts.push_back(assemble(p, PromptStrategy::kPrompt));
  const auto instances = build_instances(prompts, tokenizer(), config);
  double total = 0.0;
  std::size_t masked = 0;
  for (const auto& inst : instances) {
    total += mlm_loss(model.mlm_log_probs(inst.token_ids), inst);
    masked += inst.mask_positions.size();
  }
  const TrainLog log = train_on_instances(model, instances, config);
  REQUIRE(log.step_loss.size() == 1);
  CHECK(log.step_loss[0] == doctest::Approx(total / static_cast<double>(masked)));
}

TEST_CASE("generic masked-LM instances mask at least one token each") {
  const std::vector<std::string> texts = {"entails", "entails that", "that that that that"};
  const auto instances = build_mlm_instances(texts, tokenizer(), 0.01, 32, 3);
  REQUIRE(instances.size() == 3);
  for (const auto& inst : instances) {
    CHECK_FALSE(inst.mask_positions.empty());
    for (std::size_t p : inst.mask_positions) CHECK(inst.token_ids[p] == tokenizer().mask_id());
  }
}
