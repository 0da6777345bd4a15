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

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "promptopt/hash.hpp"
#include "promptopt/tape.hpp"
#include "promptopt/tensor.hpp"
#include "promptopt/vocabulary.hpp"

namespace promptopt {

struct ModelConfig {
  int d_model = 64;
  int layers = 4;
  int heads = 4;
  int d_ff = 256;
  int max_seq = 256;
  int vocab_size = 0;

  // Throws ParameterError. layers may be 0; everything else must be >= 1.
  void validate() const;
  int head_dim() const { return d_model / heads; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerWeights {
  Tensor2 ln1_gain, ln1_bias;
  Tensor2 w_q, b_q, w_k, b_k, w_v, b_v;
  Tensor2 w_attn_out, b_attn_out;
  Tensor2 ln2_gain, ln2_bias;
  Tensor2 w_ff1, b_ff1, w_ff2, b_ff2;
};

struct ModelWeights {
  Tensor2 token_embedding;     // V x d
  Tensor2 position_embedding;  // max_seq x d
  std::vector<LayerWeights> layers;
  Tensor2 w_out;  // d x V
  Tensor2 b_out;  // 1 x V

  // Visits every tensor in serialization order.
  void for_each(const std::function<void(const std::string&, const Tensor2&)>& fn) const;
  void for_each(const std::function<void(const std::string&, Tensor2&)>& fn);

  // Zero-filled tensors with the shapes implied by `cfg`.
  static ModelWeights zeros(const ModelConfig& cfg);
  // Seeded random initialization.
  static ModelWeights random(const ModelConfig& cfg, std::uint64_t seed);
};

// Frozen base model. Weights cannot be modified after construction; the
// content hash is computed once and identifies the checkpoint.
class ModelCheckpoint {
 public:
  ModelCheckpoint(ModelConfig config, Vocabulary vocab, ModelWeights weights);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const ModelWeights& weights() const { return weights_; }
  const Digest& hash() const { return hash_; }
  // Hash of the current in-memory contents; equals hash() unless memory
  // was corrupted behind the const interface.
  Digest recompute_hash() const;

  // Header (JSON) bytes and raw little-endian weight bytes, as written to disk.
  std::string header_json() const;
  std::vector<std::uint8_t> weight_bytes() const;

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  ModelWeights weights_;
  Digest hash_{};
};

// h^(0) .. h^(L), each (sequence length x d).
struct HiddenStates {
  std::vector<Tensor2> layers;
};

struct ForwardOutput {
  Tensor2 logits;  // seq x V
  HiddenStates hidden;
};

// Model weights bound onto a tape, either as frozen constants or as
// trainable leaves.
struct BoundWeights {
  struct Layer {
    Var ln1_gain, ln1_bias, w_q, b_q, w_k, b_k, w_v, b_v, w_attn_out, b_attn_out,
        ln2_gain, ln2_bias, w_ff1, b_ff1, w_ff2, b_ff2;
  };
  Var token_embedding, position_embedding;
  std::vector<Layer> layers;
  Var w_out, b_out;

  // Leaves in ModelWeights::for_each order (trainable binding only).
  std::vector<Var> all() const;
};

// References the weights; they must outlive the tape.
BoundWeights bind_frozen(Tape& tape, const ModelWeights& w);
// Copies the weights into leaves.
BoundWeights bind_trainable(Tape& tape, const ModelWeights& w);

struct ForwardVars {
  Var logits;
  std::vector<Var> hidden;
};

// Runs the transformer on `input` (rows already include position
// embeddings). Position t attends to rows <= t only.
ForwardVars forward_on_tape(const BoundWeights& w, const ModelConfig& cfg, Var input);

// Token embedding plus position embedding for positions [offset, offset+n).
Tensor2 embed(std::span<const TokenId> tokens, const ModelCheckpoint& ckpt,
              std::size_t position_offset = 0);
// Adds position rows [offset, offset + rows) to `rows` in place.
void add_positions(Tensor2& rows, const ModelCheckpoint& ckpt, std::size_t position_offset);

ForwardOutput forward(const Tensor2& input_embeds, const ModelCheckpoint& ckpt);

}  // namespace promptopt
