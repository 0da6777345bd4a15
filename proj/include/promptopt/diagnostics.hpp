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

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "promptopt/inference.hpp"
#include "promptopt/model.hpp"
#include "promptopt/prompt.hpp"

namespace promptopt {

// ---------------------------------------------------------------------------
// Nearest-token anchoring of prompt rows.

struct AnchorPosition {
  TokenId original = 0;
  TokenId nearest = 0;
  double p_nearest = 0.0;
  double p_original = 0.0;
  std::vector<std::pair<TokenId, double>> top;  // up to 5, descending
  std::vector<double> distribution;            // full V-way softmax
  bool anchored() const { return nearest == original; }
};

struct AnchorReport {
  std::vector<AnchorPosition> positions;
  bool all_anchored() const;
};

// For each prompt row v: p_j = softmax_j(v . e_j) over the token embedding
// table, nearest token = argmax (lowest id on ties).
AnchorReport anchor_report(const PromptEmbedding& p, const ModelCheckpoint& ckpt);

// ---------------------------------------------------------------------------
// Trajectory entropy and repetition loops.

struct Repetition {
  std::size_t period = 0;
  std::vector<TokenId> ngram;
  std::size_t repeats = 0;
  friend bool operator==(const Repetition&, const Repetition&) = default;
};

inline constexpr std::size_t kDefaultMaxPeriod = 8;
inline constexpr std::size_t kDefaultMinRepeats = 3;

// Smallest period q in 1..min(max_period, T/2) whose final q-gram occurs at
// least min_repeats times back to back at the end of `tokens`.
std::optional<Repetition> detect_repetition(std::span<const TokenId> tokens,
                                            std::size_t max_period = kDefaultMaxPeriod,
                                            std::size_t min_repeats = kDefaultMinRepeats);

struct EntropyReport {
  std::vector<double> step_bits;
  double trajectory_bits = 0.0;  // mean of step_bits
  std::optional<Repetition> repetition;
};

// Shannon entropy in bits with 0 log 0 = 0.
double entropy_bits(std::span<const double> distribution);

// Needs full distributions. Caches per-step entropies on the trace.
EntropyReport trajectory_entropy(GenerationTrace& trace,
                                 std::size_t max_period = kDefaultMaxPeriod,
                                 std::size_t min_repeats = kDefaultMinRepeats);
EntropyReport trajectory_entropy(const GenerationTrace& trace,
                                 std::size_t max_period = kDefaultMaxPeriod,
                                 std::size_t min_repeats = kDefaultMinRepeats);

// ---------------------------------------------------------------------------
// Linear probing of hidden states.

// One unit vector (1 x d) per hidden layer h^(0)..h^(L).
struct ProbeDirections {
  std::vector<Tensor2> layers;
};

// Final-position hidden state of every layer for `text` run as plain input.
std::vector<Tensor2> last_position_states(std::string_view text, const ModelCheckpoint& ckpt);

// Per layer: mean last-position state over A minus mean over B, scaled to
// unit length; exactly zero when the difference norm is below 1e-12.
ProbeDirections lat_direction(const std::vector<std::string>& stimuli_a,
                              const std::vector<std::string>& stimuli_b,
                              const ModelCheckpoint& ckpt);

struct LatLayer {
  double projection_original = 0.0;
  double projection_optimized = 0.0;
  double delta = 0.0;  // optimized - original
};

struct LatReport {
  std::vector<LatLayer> layers;  // index 0 is the embedding layer

  // Delta at the output of the first transformer block. The embedding-layer
  // row carries no prompt information at the final position, so it is 0.
  double first_block_delta() const;
};

// Projects the final-position state of each layer, for [prompt; query]
// under both prompt embeddings, onto that layer's direction.
LatReport lat_delta(const PromptEmbedding& original, const PromptEmbedding& optimized,
                    const ProbeDirections& directions, std::string_view query,
                    const ModelCheckpoint& ckpt);

// ---------------------------------------------------------------------------
// Serialization.

std::string anchor_report_to_json(const AnchorReport& r, const Vocabulary& vocab);
std::string anchor_report_to_text(const AnchorReport& r, const Vocabulary& vocab);
std::string entropy_report_to_json(const EntropyReport& r);
std::string entropy_report_to_text(const EntropyReport& r);
std::string lat_report_to_json(const LatReport& r);
std::string lat_report_to_text(const LatReport& r);
// Header "layer,proj_A,proj_B,delta" then one row per layer.
std::string lat_report_to_csv(const LatReport& r);

}  // namespace promptopt
