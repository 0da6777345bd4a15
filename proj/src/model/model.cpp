// Copyright 2026 The promptopt Authors.
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

#include "promptopt/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <random>

#include <json.hpp>

#include "promptopt/errors.hpp"

namespace promptopt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

void ModelConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ParameterError(std::string("model config: ") + what);
  };
  need(d_model >= 1, "d_model must be >= 1");
  need(layers >= 0, "layers must be >= 0");
  need(heads >= 1, "heads must be >= 1");
  need(d_ff >= 1, "d_ff must be >= 1");
  need(max_seq >= 1, "max_seq must be >= 1");
  need(vocab_size >= 1, "vocab_size must be >= 1");
  need(d_model % heads == 0, "d_model must be divisible by heads");
}

namespace {

template <typename W, typename Fn>
void visit(W& w, Fn&& fn) {
  fn("token_embedding", w.token_embedding);
  fn("position_embedding", w.position_embedding);
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    auto& l = w.layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    fn(p + "ln1_gain", l.ln1_gain);
    fn(p + "ln1_bias", l.ln1_bias);
    fn(p + "w_q", l.w_q);
    fn(p + "b_q", l.b_q);
    fn(p + "w_k", l.w_k);
    fn(p + "b_k", l.b_k);
    fn(p + "w_v", l.w_v);
    fn(p + "b_v", l.b_v);
    fn(p + "w_attn_out", l.w_attn_out);
    fn(p + "b_attn_out", l.b_attn_out);
    fn(p + "ln2_gain", l.ln2_gain);
    fn(p + "ln2_bias", l.ln2_bias);
    fn(p + "w_ff1", l.w_ff1);
    fn(p + "b_ff1", l.b_ff1);
    fn(p + "w_ff2", l.w_ff2);
    fn(p + "b_ff2", l.b_ff2);
  }
  fn("w_out", w.w_out);
  fn("b_out", w.b_out);
}

}  // namespace

void ModelWeights::for_each(
    const std::function<void(const std::string&, const Tensor2&)>& fn) const {
  visit(*this, fn);
}

void ModelWeights::for_each(const std::function<void(const std::string&, Tensor2&)>& fn) {
  visit(*this, fn);
}

ModelWeights ModelWeights::zeros(const ModelConfig& cfg) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto ff = static_cast<std::size_t>(cfg.d_ff);
  const auto v = static_cast<std::size_t>(cfg.vocab_size);
  ModelWeights w;
  w.token_embedding = Tensor2(v, d);
  w.position_embedding = Tensor2(static_cast<std::size_t>(cfg.max_seq), d);
  for (int i = 0; i < cfg.layers; ++i) {
    LayerWeights l;
    l.ln1_gain = Tensor2(1, d, 1.0);
    l.ln1_bias = Tensor2(1, d);
    l.w_q = Tensor2(d, d);
    l.b_q = Tensor2(1, d);
    l.w_k = Tensor2(d, d);
    l.b_k = Tensor2(1, d);
    l.w_v = Tensor2(d, d);
    l.b_v = Tensor2(1, d);
    l.w_attn_out = Tensor2(d, d);
    l.b_attn_out = Tensor2(1, d);
    l.ln2_gain = Tensor2(1, d, 1.0);
    l.ln2_bias = Tensor2(1, d);
    l.w_ff1 = Tensor2(d, ff);
    l.b_ff1 = Tensor2(1, ff);
    l.w_ff2 = Tensor2(ff, d);
    l.b_ff2 = Tensor2(1, d);
    w.layers.push_back(std::move(l));
  }
  w.w_out = Tensor2(d, v);
  w.b_out = Tensor2(1, v);
  return w;
}

ModelWeights ModelWeights::random(const ModelConfig& cfg, std::uint64_t seed) {
  ModelWeights w = zeros(cfg);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Tensor2& t, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.data()) v = dist(rng);
  };
  fill(w.token_embedding, 1.0);
  fill(w.position_embedding, 0.3);
  // Residual projections are scaled down with depth.
  const double resid = 0.02 / std::sqrt(2.0 * std::max(cfg.layers, 1));
  for (auto& l : w.layers) {
    fill(l.w_q, 0.02);
    fill(l.w_k, 0.02);
    fill(l.w_v, 0.02);
    fill(l.w_attn_out, resid);
    fill(l.w_ff1, 0.02);
    fill(l.w_ff2, resid);
  }
  fill(w.w_out, 0.02);
  return w;
}

namespace {

void check_shape(const std::string& name, const Tensor2& t, std::size_t rows,
                 std::size_t cols) {
  if (t.rows() != rows || t.cols() != cols) {
    throw ShapeError("weight " + name + " has shape " + t.shape_string() + ", expected " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

}  // namespace

ModelCheckpoint::ModelCheckpoint(ModelConfig config, Vocabulary vocab, ModelWeights weights)
    : config_(config), vocab_(std::move(vocab)), weights_(std::move(weights)) {
  config_.validate();
  if (vocab_.size() != static_cast<std::size_t>(config_.vocab_size)) {
    throw ShapeError("vocabulary size " + std::to_string(vocab_.size()) +
                     " does not match config vocab_size " +
                     std::to_string(config_.vocab_size));
  }
  if (weights_.layers.size() != static_cast<std::size_t>(config_.layers)) {
    throw ShapeError("checkpoint has " + std::to_string(weights_.layers.size()) +
                     " layers, config declares " + std::to_string(config_.layers));
  }
  const ModelWeights expected = ModelWeights::zeros(config_);
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  expected.for_each([&](const std::string&, const Tensor2& t) {
    shapes.emplace_back(t.rows(), t.cols());
  });
  std::size_t i = 0;
  weights_.for_each([&](const std::string& name, const Tensor2& t) {
    check_shape(name, t, shapes[i].first, shapes[i].second);
    if (!t.all_finite()) throw IntegrityError("weight " + name + " has non-finite values");
    ++i;
  });
  hash_ = recompute_hash();
}

std::string ModelCheckpoint::header_json() const {
  nlohmann::json j;
  j["config"] = {{"d_model", config_.d_model}, {"layers", config_.layers},
                 {"heads", config_.heads},     {"d_ff", config_.d_ff},
                 {"max_seq", config_.max_seq}, {"vocab_size", config_.vocab_size}};
  j["vocabulary"] = vocab_.tokens();
  nlohmann::json tensors = nlohmann::json::array();
  weights_.for_each([&](const std::string& name, const Tensor2& t) {
    tensors.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
  });
  j["tensors"] = std::move(tensors);
  return j.dump();
}

std::vector<std::uint8_t> ModelCheckpoint::weight_bytes() const {
  std::vector<std::uint8_t> out;
  weights_.for_each([&](const std::string&, const Tensor2& t) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data().data());
    out.insert(out.end(), p, p + t.size() * sizeof(double));
  });
  return out;
}

Digest ModelCheckpoint::recompute_hash() const {
  const std::string header = header_json();
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  const auto w = weight_bytes();
  bytes.insert(bytes.end(), w.begin(), w.end());
  return sha256(bytes);
}

std::vector<Var> BoundWeights::all() const {
  std::vector<Var> out{token_embedding, position_embedding};
  for (const auto& l : layers) {
    out.insert(out.end(), {l.ln1_gain, l.ln1_bias, l.w_q, l.b_q, l.w_k, l.b_k, l.w_v,
                           l.b_v, l.w_attn_out, l.b_attn_out, l.ln2_gain, l.ln2_bias,
                           l.w_ff1, l.b_ff1, l.w_ff2, l.b_ff2});
  }
  out.push_back(w_out);
  out.push_back(b_out);
  return out;
}

namespace {

template <typename BindFn>
BoundWeights bind(const ModelWeights& w, BindFn&& b) {
  BoundWeights out;
  out.token_embedding = b(w.token_embedding);
  out.position_embedding = b(w.position_embedding);
  for (const auto& l : w.layers) {
    BoundWeights::Layer bl;
    bl.ln1_gain = b(l.ln1_gain);
    bl.ln1_bias = b(l.ln1_bias);
    bl.w_q = b(l.w_q);
    bl.b_q = b(l.b_q);
    bl.w_k = b(l.w_k);
    bl.b_k = b(l.b_k);
    bl.w_v = b(l.w_v);
    bl.b_v = b(l.b_v);
    bl.w_attn_out = b(l.w_attn_out);
    bl.b_attn_out = b(l.b_attn_out);
    bl.ln2_gain = b(l.ln2_gain);
    bl.ln2_bias = b(l.ln2_bias);
    bl.w_ff1 = b(l.w_ff1);
    bl.b_ff1 = b(l.b_ff1);
    bl.w_ff2 = b(l.w_ff2);
    bl.b_ff2 = b(l.b_ff2);
    out.layers.push_back(bl);
  }
  out.w_out = b(w.w_out);
  out.b_out = b(w.b_out);
  return out;
}

}  // namespace

BoundWeights bind_frozen(Tape& tape, const ModelWeights& w) {
  return bind(w, [&tape](const Tensor2& t) { return tape.constant(t); });
}

BoundWeights bind_trainable(Tape& tape, const ModelWeights& w) {
  return bind(w, [&tape](const Tensor2& t) { return tape.leaf(t); });
}

ForwardVars forward_on_tape(const BoundWeights& w, const ModelConfig& cfg, Var input) {
  const Tensor2& x0 = input.value();
  const std::size_t seq = x0.rows();
  if (seq > static_cast<std::size_t>(cfg.max_seq)) {
    throw CapacityError("sequence of " + std::to_string(seq) +
                        " rows exceeds max_seq " + std::to_string(cfg.max_seq));
  }
  if (x0.cols() != static_cast<std::size_t>(cfg.d_model)) {
    throw ShapeError("input embeddings " + x0.shape_string() + " do not have d_model=" +
                     std::to_string(cfg.d_model) + " columns");
  }
  ForwardVars out;
  Var h = input;
  out.hidden.push_back(h);
  const auto dh = static_cast<std::size_t>(cfg.head_dim());
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const auto& l : w.layers) {
    if (seq > 0) {
      Var a = ad::layer_norm(h, l.ln1_gain, l.ln1_bias);
      Var q = ad::add_row(ad::matmul(a, l.w_q), l.b_q);
      Var k = ad::add_row(ad::matmul(a, l.w_k), l.b_k);
      Var v = ad::add_row(ad::matmul(a, l.w_v), l.b_v);
      std::vector<Var> heads;
      for (int hd = 0; hd < cfg.heads; ++hd) {
        const std::size_t c0 = static_cast<std::size_t>(hd) * dh;
        Var qh = ad::slice_cols(q, c0, dh);
        Var kh = ad::slice_cols(k, c0, dh);
        Var vh = ad::slice_cols(v, c0, dh);
        Var p = ad::causal_softmax(ad::scale(ad::matmul_bt(qh, kh), attn_scale));
        heads.push_back(ad::matmul(p, vh));
      }
      Var attn = ad::add_row(ad::matmul(ad::concat_cols(heads), l.w_attn_out), l.b_attn_out);
      h = ad::add(h, attn);
      Var f = ad::layer_norm(h, l.ln2_gain, l.ln2_bias);
      f = ad::gelu(ad::add_row(ad::matmul(f, l.w_ff1), l.b_ff1));
      f = ad::add_row(ad::matmul(f, l.w_ff2), l.b_ff2);
      h = ad::add(h, f);
    }
    out.hidden.push_back(h);
  }
  out.logits = ad::add_row(ad::matmul(h, w.w_out), w.b_out);
  return out;
}

void add_positions(Tensor2& rows, const ModelCheckpoint& ckpt, std::size_t position_offset) {
  const Tensor2& pos = ckpt.weights().position_embedding;
  if (position_offset + rows.rows() > pos.rows()) {
    throw CapacityError("positions up to " + std::to_string(position_offset + rows.rows()) +
                        " exceed max_seq " + std::to_string(pos.rows()));
  }
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    auto dst = rows.row(r);
    auto src = pos.row(position_offset + r);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

Tensor2 embed(std::span<const TokenId> tokens, const ModelCheckpoint& ckpt,
              std::size_t position_offset) {
  const Tensor2& table = ckpt.weights().token_embedding;
  Tensor2 out(tokens.size(), table.cols());
  for (std::size_t r = 0; r < tokens.size(); ++r) {
    const TokenId id = tokens[r];
    if (id < 0 || static_cast<std::size_t>(id) >= table.rows()) {
      throw IndexError("token id " + std::to_string(id) + " out of vocabulary of size " +
                       std::to_string(table.rows()));
    }
    auto src = table.row(static_cast<std::size_t>(id));
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  add_positions(out, ckpt, position_offset);
  return out;
}

ForwardOutput forward(const Tensor2& input_embeds, const ModelCheckpoint& ckpt) {
  Tape tape;
  const BoundWeights w = bind_frozen(tape, ckpt.weights());
  const ForwardVars fv = forward_on_tape(w, ckpt.config(), tape.constant(input_embeds));
  ForwardOutput out;
  out.logits = fv.logits.value();
  for (const Var& h : fv.hidden) out.hidden.layers.push_back(h.value());
  return out;
}

}  // namespace promptopt
