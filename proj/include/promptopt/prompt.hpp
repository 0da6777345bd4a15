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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "promptopt/hash.hpp"
#include "promptopt/model.hpp"
#include "promptopt/tensor.hpp"
#include "promptopt/vocabulary.hpp"

namespace promptopt {

struct TrainingMetadata {
  double learning_rate = 0.0;
  int epochs_run = 0;
  std::optional<double> final_train_loss;
  std::optional<double> final_val_loss;
  std::uint64_t seed = 0;
  std::string stop_reason;

  friend bool operator==(const TrainingMetadata&, const TrainingMetadata&) = default;
};

// The trainable k x d prompt matrix together with the prompt's original
// token ids and the identity of the checkpoint it belongs to.
struct PromptEmbedding {
  std::vector<TokenId> tokens;
  Tensor2 matrix;
  Digest origin_hash{};
  TrainingMetadata metadata;

  std::size_t length() const { return tokens.size(); }
  // Throws CompatibilityError when `ckpt` is not the origin checkpoint.
  void check_compatible(const ModelCheckpoint& ckpt) const;

  friend bool operator==(const PromptEmbedding&, const PromptEmbedding&) = default;
};

// Rows are exact copies of the checkpoint's token embeddings (no position
// component). Throws UsageError for an empty prompt.
PromptEmbedding init_prompt(std::string_view prompt_text, const ModelCheckpoint& ckpt);

// Artifact file layout:
//   8 bytes  magic "POPRMT\0\1"
//   u32      format version
//   32 bytes origin checkpoint hash
//   u32 k, u32 d
//   i32[k]   prompt token ids
//   f64[k*d] prompt matrix, row-major, little-endian
//   u64      metadata length, then metadata as JSON
//   32 bytes SHA-256 of everything above
inline constexpr std::uint32_t kArtifactVersion = 1;

std::vector<std::uint8_t> serialize_artifact(const PromptEmbedding& p);
void save_artifact(const PromptEmbedding& p, const std::filesystem::path& path);

// With `ckpt`, also verifies the origin hash (CompatibilityError).
PromptEmbedding deserialize_artifact(std::span<const std::uint8_t> bytes,
                                     const ModelCheckpoint* ckpt = nullptr);
PromptEmbedding load_artifact(const std::filesystem::path& path,
                              const ModelCheckpoint* ckpt = nullptr);

}  // namespace promptopt
