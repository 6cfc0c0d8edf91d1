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

#include "entail/encoder.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>

#include "entail/common.h"

namespace entail {

using nlohmann::json;

namespace {

constexpr char kCheckpointMagic[8] = {'E', 'N', 'T', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr double kInitStd = 0.02;

LinearParams linear_zeros(int in, int out) {
  return {Matrix::Zero(in, out), Matrix::Zero(1, out)};
}

LayerNormParams norm_zeros(int n) { return {Matrix::Zero(1, n), Matrix::Zero(1, n)}; }

void add_linear(const std::string& prefix, LinearParams& p,
                const std::function<void(const std::string&, Matrix&)>& fn) {
  fn(prefix + ".weight", p.weight);
  fn(prefix + ".bias", p.bias);
}

void add_norm(const std::string& prefix, LayerNormParams& p,
              const std::function<void(const std::string&, Matrix&)>& fn) {
  fn(prefix + ".weight", p.gamma);
  fn(prefix + ".bias", p.beta);
}

Matrix linear(const Matrix& x, const LinearParams& p) {
  Matrix y = x * p.weight;
  y.rowwise() += p.bias.row(0);
  return y;
}

// Returns d(input) and accumulates weight/bias gradients.
Matrix linear_backward(const Matrix& x, const Matrix& dy, const LinearParams& p,
                       LinearParams& grad) {
  grad.weight.noalias() += x.transpose() * dy;
  grad.bias += dy.colwise().sum();
  return dy * p.weight.transpose();
}

Matrix layer_norm(const Matrix& x, const LayerNormParams& p, double eps,
                  LayerNormCache& cache) {
  const Eigen::Index n = x.cols();
  Vector mean = x.rowwise().mean();
  Matrix centered = x.colwise() - mean;
  Vector var = centered.array().square().rowwise().sum() / static_cast<double>(n);
  cache.inv_std = (var.array() + eps).rsqrt();
  cache.normalized = centered.array().colwise() * cache.inv_std.array();
  Matrix y = cache.normalized.array().rowwise() * p.gamma.row(0).array();
  y.rowwise() += p.beta.row(0);
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormParams& p,
                           const LayerNormCache& cache, LayerNormParams& grad) {
  const double n = static_cast<double>(dy.cols());
  grad.gamma += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
  grad.beta += dy.colwise().sum();
  Matrix dxhat = dy.array().rowwise() * p.gamma.row(0).array();
  Vector mean_d = dxhat.rowwise().sum() / n;
  Vector mean_dx = (dxhat.array() * cache.normalized.array()).rowwise().sum().matrix() / n;
  Matrix dx = dxhat.colwise() - mean_d;
  dx -= (cache.normalized.array().colwise() * mean_dx.array()).matrix();
  return dx.array().colwise() * cache.inv_std.array();
}

Matrix apply_gelu(const Matrix& x) { return x.unaryExpr([](double v) { return gelu(v); }); }

// Row-wise log-softmax.
Matrix log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

struct CheckpointData {
  EncoderConfig config;
  std::map<std::string, Matrix> tensors;
};

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open checkpoint \"" + path.string() + "\"");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw Error(ErrorKind::kParse, "\"" + path.string() + "\" is not a checkpoint");
  }
  const std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::kParse,
                "unsupported checkpoint version " + std::to_string(version));
  }
  std::string config_text(read_u64(in), '\0');
  in.read(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  CheckpointData data;
  try {
    data.config = encoder_config_from_json(json::parse(config_text));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("bad checkpoint config: ") + e.what());
  }
  const std::uint64_t count = read_u64(in);
  for (std::uint64_t i = 0; i < count && in; ++i) {
    std::string name(read_u32(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto rows = static_cast<Eigen::Index>(read_u64(in));
    const auto cols = static_cast<Eigen::Index>(read_u64(in));
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * rows * cols));
    data.tensors.emplace(std::move(name), std::move(m));
  }
  if (!in) throw Error(ErrorKind::kParse, "truncated checkpoint \"" + path.string() + "\"");
  return data;
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

void EncoderConfig::validate() const {
  if (vocab_size < 6) throw Error(ErrorKind::kConfig, "vocab_size too small");
  if (hidden < 1 || layers < 1 || heads < 1 || max_len < 2) {
    throw Error(ErrorKind::kConfig, "encoder dimensions must be positive");
  }
  if (hidden % heads != 0) {
    throw Error(ErrorKind::kConfig, "hidden must be divisible by heads");
  }
  if (intermediate < 0) throw Error(ErrorKind::kConfig, "intermediate must be >= 0");
}

json to_json(const EncoderConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"hidden", c.hidden},
          {"layers", c.layers},         {"heads", c.heads},
          {"intermediate", c.intermediate}, {"max_len", c.max_len},
          {"layer_norm_eps", c.layer_norm_eps}};
}

EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.hidden = j.value("hidden", c.hidden);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.intermediate = j.value("intermediate", c.intermediate);
  c.max_len = j.value("max_len", c.max_len);
  c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
  return c;
}

Parameters Parameters::zeros(const EncoderConfig& c) {
  const int h = c.hidden;
  Parameters p;
  p.word_embeddings = Matrix::Zero(c.vocab_size, h);
  p.position_embeddings = Matrix::Zero(c.max_len, h);
  p.embedding_norm = norm_zeros(h);
  p.blocks.resize(c.layers);
  for (auto& b : p.blocks) {
    b.query = linear_zeros(h, h);
    b.key = linear_zeros(h, h);
    b.value = linear_zeros(h, h);
    b.attention_output = linear_zeros(h, h);
    b.attention_norm = norm_zeros(h);
    b.intermediate = linear_zeros(h, c.ffn_dim());
    b.output = linear_zeros(c.ffn_dim(), h);
    b.output_norm = norm_zeros(h);
  }
  p.head_transform = linear_zeros(h, h);
  p.head_norm = norm_zeros(h);
  p.head_bias = Matrix::Zero(1, c.vocab_size);
  return p;
}

void Parameters::for_each(const std::function<void(const std::string&, Matrix&)>& fn) {
  fn("embeddings.word_embeddings.weight", word_embeddings);
  fn("embeddings.position_embeddings.weight", position_embeddings);
  add_norm("embeddings.LayerNorm", embedding_norm, fn);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string layer = "encoder.layer." + std::to_string(i);
    auto& b = blocks[i];
    add_linear(layer + ".attention.self.query", b.query, fn);
    add_linear(layer + ".attention.self.key", b.key, fn);
    add_linear(layer + ".attention.self.value", b.value, fn);
    add_linear(layer + ".attention.output.dense", b.attention_output, fn);
    add_norm(layer + ".attention.output.LayerNorm", b.attention_norm, fn);
    add_linear(layer + ".intermediate.dense", b.intermediate, fn);
    add_linear(layer + ".output.dense", b.output, fn);
    add_norm(layer + ".output.LayerNorm", b.output_norm, fn);
  }
  add_linear("cls.predictions.transform.dense", head_transform, fn);
  add_norm("cls.predictions.transform.LayerNorm", head_norm, fn);
  fn("cls.predictions.bias", head_bias);
}

void Parameters::for_each(
    const std::function<void(const std::string&, const Matrix&)>& fn) const {
  const_cast<Parameters*>(this)->for_each(
      [&](const std::string& name, Matrix& m) { fn(name, m); });
}

void Parameters::set_zero() {
  for_each([](const std::string&, Matrix& m) { m.setZero(); });
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

EncoderModel::EncoderModel(const EncoderConfig& config, std::uint64_t seed)
    : config_(config), params_(Parameters::zeros(config)) {
  config_.validate();
  Rng rng(seed);
  params_.for_each([&](const std::string& name, Matrix& m) {
    const bool is_norm = name.find("LayerNorm") != std::string::npos;
    const bool is_bias = name.ends_with(".bias");
    if (is_norm && !is_bias) {
      m.setOnes();
    } else if (!is_bias) {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = kInitStd * rng.normal();
    }
  });
}

EncoderModel::EncoderModel(const EncoderConfig& config, Parameters params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  const Parameters reference = Parameters::zeros(config_);
  std::map<std::string, std::pair<Eigen::Index, Eigen::Index>> shapes;
  reference.for_each([&](const std::string& name, const Matrix& m) {
    shapes[name] = {m.rows(), m.cols()};
  });
  params_.for_each([&](const std::string& name, const Matrix& m) {
    auto it = shapes.find(name);
    if (it == shapes.end() || it->second.first != m.rows() ||
        it->second.second != m.cols()) {
      throw Error(ErrorKind::kInvalidArgument, "parameter \"" + name + "\" has wrong shape");
    }
  });
}

ForwardPass EncoderModel::forward(std::span<const int> ids) const {
  const auto t = static_cast<Eigen::Index>(ids.size());
  if (t == 0) throw Error(ErrorKind::kInvalidArgument, "empty token sequence");
  if (t > config_.max_len) {
    throw Error(ErrorKind::kInvalidArgument,
                "sequence of " + std::to_string(t) + " tokens exceeds max_len " +
                    std::to_string(config_.max_len));
  }
  const int h = config_.hidden;
  const int heads = config_.heads;
  const int dh = h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  ForwardPass pass;
  pass.ids.assign(ids.begin(), ids.end());
  Matrix x(t, h);
  for (Eigen::Index i = 0; i < t; ++i) {
    const int id = ids[i];
    if (id < 0 || id >= config_.vocab_size) {
      throw Error(ErrorKind::kInvalidArgument, "token id " + std::to_string(id) +
                                                   " outside vocabulary");
    }
    x.row(i) = params_.word_embeddings.row(id) + params_.position_embeddings.row(i);
  }
  x = layer_norm(x, params_.embedding_norm, config_.layer_norm_eps, pass.embedding_norm);

  pass.blocks.resize(params_.blocks.size());
  for (std::size_t l = 0; l < params_.blocks.size(); ++l) {
    const BlockParams& p = params_.blocks[l];
    BlockCache& c = pass.blocks[l];
    c.input = x;
    c.query = linear(x, p.query);
    c.key = linear(x, p.key);
    c.value = linear(x, p.value);
    c.context.resize(t, h);
    c.attention.resize(heads);
    for (int hd = 0; hd < heads; ++hd) {
      Matrix scores = c.query.middleCols(hd * dh, dh) *
                      c.key.middleCols(hd * dh, dh).transpose() * scale;
      for (Eigen::Index r = 0; r < t; ++r) {
        const double m = scores.row(r).maxCoeff();
        scores.row(r) = (scores.row(r).array() - m).exp();
        scores.row(r) /= scores.row(r).sum();
      }
      c.context.middleCols(hd * dh, dh) = scores * c.value.middleCols(hd * dh, dh);
      c.attention[hd] = std::move(scores);
    }
    Matrix residual = x + linear(c.context, p.attention_output);
    c.attention_out = layer_norm(residual, p.attention_norm, config_.layer_norm_eps,
                                 c.attention_norm);
    c.ffn_pre = linear(c.attention_out, p.intermediate);
    c.ffn_act = apply_gelu(c.ffn_pre);
    residual = c.attention_out + linear(c.ffn_act, p.output);
    x = layer_norm(residual, p.output_norm, config_.layer_norm_eps, c.output_norm);
  }
  pass.output = std::move(x);
  return pass;
}

void EncoderModel::backward(const ForwardPass& pass, const Matrix& d_output,
                            Parameters& grads) const {
  const Eigen::Index t = pass.output.rows();
  const int h = config_.hidden;
  const int heads = config_.heads;
  const int dh = h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix dx = d_output;
  for (std::size_t li = params_.blocks.size(); li-- > 0;) {
    const BlockParams& p = params_.blocks[li];
    BlockParams& g = grads.blocks[li];
    const BlockCache& c = pass.blocks[li];

    Matrix d_res2 = layer_norm_backward(dx, p.output_norm, c.output_norm, g.output_norm);
    Matrix d_act = linear_backward(c.ffn_act, d_res2, p.output, g.output);
    Matrix d_pre = d_act.array() * c.ffn_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
    Matrix d_attn_out = d_res2 + linear_backward(c.attention_out, d_pre, p.intermediate, g.intermediate);

    Matrix d_res1 = layer_norm_backward(d_attn_out, p.attention_norm, c.attention_norm,
                                        g.attention_norm);
    Matrix d_context = linear_backward(c.context, d_res1, p.attention_output,
                                       g.attention_output);
    Matrix dq(t, h), dk(t, h), dv(t, h);
    for (int hd = 0; hd < heads; ++hd) {
      const Matrix& a = c.attention[hd];
      const auto d_ctx = d_context.middleCols(hd * dh, dh);
      Matrix da = d_ctx * c.value.middleCols(hd * dh, dh).transpose();
      dv.middleCols(hd * dh, dh) = a.transpose() * d_ctx;
      Vector row_dot = (da.array() * a.array()).rowwise().sum();
      Matrix ds = (a.array() * (da.colwise() - row_dot).array()).matrix() * scale;
      dq.middleCols(hd * dh, dh) = ds * c.key.middleCols(hd * dh, dh);
      dk.middleCols(hd * dh, dh) = ds.transpose() * c.query.middleCols(hd * dh, dh);
    }
    dx = d_res1;
    dx += linear_backward(c.input, dq, p.query, g.query);
    dx += linear_backward(c.input, dk, p.key, g.key);
    dx += linear_backward(c.input, dv, p.value, g.value);
  }

  Matrix d_embed = layer_norm_backward(dx, params_.embedding_norm, pass.embedding_norm,
                                       grads.embedding_norm);
  for (Eigen::Index i = 0; i < t; ++i) {
    grads.word_embeddings.row(pass.ids[i]) += d_embed.row(i);
    grads.position_embeddings.row(i) += d_embed.row(i);
  }
}

HeadPass EncoderModel::head_forward(const ForwardPass& pass,
                                    std::span<const std::size_t> positions) const {
  HeadPass head;
  head.positions.assign(positions.begin(), positions.end());
  Matrix selected(static_cast<Eigen::Index>(positions.size()), config_.hidden);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (positions[i] >= static_cast<std::size_t>(pass.output.rows())) {
      throw Error(ErrorKind::kInvalidArgument, "head position out of range");
    }
    selected.row(static_cast<Eigen::Index>(i)) =
        pass.output.row(static_cast<Eigen::Index>(positions[i]));
  }
  head.transform_pre = linear(selected, params_.head_transform);
  head.transform_act = apply_gelu(head.transform_pre);
  head.normed = layer_norm(head.transform_act, params_.head_norm, config_.layer_norm_eps,
                           head.norm);
  Matrix logits = head.normed * params_.word_embeddings.transpose();
  logits.rowwise() += params_.head_bias.row(0);
  head.log_probs = log_softmax(logits);
  return head;
}

void EncoderModel::head_backward(const ForwardPass& pass, const HeadPass& head,
                                 const Matrix& d_logits, Parameters& grads,
                                 Matrix& d_output) const {
  grads.word_embeddings.noalias() += d_logits.transpose() * head.normed;
  grads.head_bias += d_logits.colwise().sum();
  Matrix d_normed = d_logits * params_.word_embeddings;
  Matrix d_act = layer_norm_backward(d_normed, params_.head_norm, head.norm, grads.head_norm);
  Matrix d_pre = d_act.array() *
                 head.transform_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
  Matrix selected(static_cast<Eigen::Index>(head.positions.size()), config_.hidden);
  for (std::size_t i = 0; i < head.positions.size(); ++i) {
    selected.row(static_cast<Eigen::Index>(i)) =
        pass.output.row(static_cast<Eigen::Index>(head.positions[i]));
  }
  Matrix d_selected = linear_backward(selected, d_pre, params_.head_transform,
                                      grads.head_transform);
  for (std::size_t i = 0; i < head.positions.size(); ++i) {
    d_output.row(static_cast<Eigen::Index>(head.positions[i])) +=
        d_selected.row(static_cast<Eigen::Index>(i));
  }
}

Matrix EncoderModel::mlm_log_probs(std::span<const int> ids) const {
  const ForwardPass pass = forward(ids);
  std::vector<std::size_t> all(ids.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return head_forward(pass, all).log_probs;
}

Vector EncoderModel::embed(std::span<const int> ids) const {
  return forward(ids).output.row(0).transpose();
}

void save_checkpoint(const std::filesystem::path& path, const EncoderModel& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write checkpoint \"" + path.string() + "\"");
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  write_u32(out, kCheckpointVersion);
  const std::string config_text = to_json(model.config()).dump();
  write_u64(out, config_text.size());
  out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  std::uint64_t count = 0;
  model.params().for_each([&](const std::string&, const Matrix&) { ++count; });
  write_u64(out, count);
  model.params().for_each([&](const std::string& name, const Matrix& m) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, static_cast<std::uint64_t>(m.rows()));
    write_u64(out, static_cast<std::uint64_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
  });
  if (!out) throw Error(ErrorKind::kIo, "write failed for \"" + path.string() + "\"");
}

EncoderModel load_checkpoint(const std::filesystem::path& path) {
  CheckpointData data = read_checkpoint(path);
  Parameters params = Parameters::zeros(data.config);
  params.for_each([&](const std::string& name, Matrix& m) {
    auto it = data.tensors.find(name);
    if (it == data.tensors.end()) {
      throw Error(ErrorKind::kParse, "checkpoint lacks tensor \"" + name + "\"");
    }
    if (it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
      throw Error(ErrorKind::kParse, "checkpoint tensor \"" + name + "\" has wrong shape");
    }
    m = it->second;
  });
  return EncoderModel(data.config, std::move(params));
}

std::vector<std::string> load_compatible(const std::filesystem::path& path,
                                         EncoderModel& model) {
  CheckpointData data = read_checkpoint(path);
  std::vector<std::string> loaded;
  model.params().for_each([&](const std::string& name, Matrix& m) {
    auto it = data.tensors.find(name);
    if (it == data.tensors.end()) return;
    if (it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
      throw Error(ErrorKind::kInvalidArgument,
                  "tensor \"" + name + "\" has incompatible shape");
    }
    m = it->second;
    loaded.push_back(name);
  });
  return loaded;
}

}  // namespace entail
