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

// BERT-style bidirectional transformer encoder with a tied masked-LM head,
// written against Eigen with explicit forward caches and hand-derived
// backward passes.
//
// Layout: post-norm blocks (self-attention -> add & norm -> GELU MLP ->
// add & norm). Linear weights are stored (in, out) so a layer computes
// x * W + b. Parameter names follow the usual BERT checkpoint naming so
// converted weights can be loaded by name.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace entail {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct EncoderConfig {
  int vocab_size = 30000;
  int hidden = 256;
  int layers = 4;
  int heads = 4;
  int intermediate = 0;  // 0 means 4 * hidden
  int max_len = 256;
  double layer_norm_eps = 1e-12;

  int ffn_dim() const { return intermediate > 0 ? intermediate : 4 * hidden; }
  void validate() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

nlohmann::json to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

struct LinearParams {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
};

struct LayerNormParams {
  Matrix gamma;  // 1 x n
  Matrix beta;   // 1 x n
};

struct BlockParams {
  LinearParams query, key, value, attention_output;
  LayerNormParams attention_norm;
  LinearParams intermediate, output;
  LayerNormParams output_norm;
};

struct Parameters {
  Matrix word_embeddings;      // vocab x hidden, tied with the MLM decoder
  Matrix position_embeddings;  // max_len x hidden
  LayerNormParams embedding_norm;
  std::vector<BlockParams> blocks;
  LinearParams head_transform;
  LayerNormParams head_norm;
  Matrix head_bias;  // 1 x vocab

  static Parameters zeros(const EncoderConfig& config);

  void for_each(const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const;

  void set_zero();
  std::size_t count() const;
};

struct LayerNormCache {
  Matrix normalized;  // x-hat
  Vector inv_std;
};

struct BlockCache {
  Matrix input;
  Matrix query, key, value;
  std::vector<Matrix> attention;  // per head, T x T
  Matrix context;
  LayerNormCache attention_norm;
  Matrix attention_out;  // block input to the MLP
  Matrix ffn_pre, ffn_act;
  LayerNormCache output_norm;
};

// Everything the backward pass needs from one sequence.
struct ForwardPass {
  std::vector<int> ids;
  LayerNormCache embedding_norm;
  std::vector<BlockCache> blocks;
  Matrix output;  // T x hidden
};

struct HeadPass {
  std::vector<std::size_t> positions;
  Matrix transform_pre, transform_act;
  LayerNormCache norm;
  Matrix normed;
  Matrix log_probs;  // positions x vocab
};

class EncoderModel {
 public:
  // Weights ~ N(0, 0.02), biases zero, norm gains one.
  EncoderModel(const EncoderConfig& config, std::uint64_t seed);
  EncoderModel(const EncoderConfig& config, Parameters params);

  const EncoderConfig& config() const { return config_; }
  int hidden() const { return config_.hidden; }
  Parameters& params() { return params_; }
  const Parameters& params() const { return params_; }

  // Throws kInvalidArgument for empty input, ids out of range, or sequences
  // longer than max_len.
  ForwardPass forward(std::span<const int> ids) const;
  // Accumulates parameter gradients for d(loss)/d(output) into `grads`.
  void backward(const ForwardPass& pass, const Matrix& d_output,
                Parameters& grads) const;

  HeadPass head_forward(const ForwardPass& pass,
                        std::span<const std::size_t> positions) const;
  // `d_logits` is positions x vocab. Accumulates head and tied-embedding
  // gradients and adds the induced gradient into `d_output`.
  void head_backward(const ForwardPass& pass, const HeadPass& head,
                     const Matrix& d_logits, Parameters& grads,
                     Matrix& d_output) const;

  // Log-probabilities over the vocabulary at every position (T x vocab).
  Matrix mlm_log_probs(std::span<const int> ids) const;
  // Hidden state of the first ([CLS]) position.
  Vector embed(std::span<const int> ids) const;

 private:
  EncoderConfig config_;
  Parameters params_;
};

// Versioned binary container: config (JSON) plus named float64 tensors.
void save_checkpoint(const std::filesystem::path& path, const EncoderModel& model);
EncoderModel load_checkpoint(const std::filesystem::path& path);

// Copies every tensor of `path` whose name exists in `model` with the same
// shape; a same-named tensor with a different shape is an error. Returns
// the names that were loaded. This is the hook for initializing from
// externally converted pretrained weights.
std::vector<std::string> load_compatible(const std::filesystem::path& path,
                                         EncoderModel& model);

double gelu(double x);
double gelu_grad(double x);

}  // namespace entail
