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

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "promptopt/dataset.hpp"
#include "promptopt/model.hpp"
#include "promptopt/prompt.hpp"

namespace promptopt {

enum class GenerationStop { kEos, kMaxTokens };
const char* to_string(GenerationStop s);

struct GenerationTrace {
  std::vector<TokenId> tokens;
  // T x V next-token distributions when recorded in full; otherwise empty
  // and only the chosen-token probability is kept.
  Tensor2 distributions;
  std::vector<double> chosen_probability;
  GenerationStop stop = GenerationStop::kMaxTokens;
  std::size_t vocab_size = 0;
  // Per-step entropies in bits, filled by trajectory_entropy.
  std::optional<std::vector<double>> entropy_bits;

  std::size_t steps() const { return tokens.size(); }
  bool has_distributions() const { return distributions.rows() == tokens.size() && !tokens.empty(); }
};

struct GenerateOptions {
  int max_tokens = 64;
  // Defaults to the vocabulary's EOS.
  std::optional<TokenId> eos;
  bool record_distributions = true;
};

// Greedy decoding from [prompt rows; query rows], re-running the full
// forward pass every step. Ties go to the lowest token id. Running into
// max_seq ends the trace with kMaxTokens.
GenerationTrace generate(const PromptEmbedding& p, std::string_view user_input,
                         const ModelCheckpoint& ckpt, const GenerateOptions& opts = {});
GenerationTrace generate(const PromptEmbedding& p, std::span<const TokenId> user_input,
                         const ModelCheckpoint& ckpt, const GenerateOptions& opts = {});

// Same loop driven by plain text: tokenize(prompt + query), embed, forward.
GenerationTrace generate_from_text(std::string_view prompt_text, std::string_view user_input,
                                   const ModelCheckpoint& ckpt, const GenerateOptions& opts = {});

// Decoded text of the trace without EOS.
std::string trace_text(const GenerationTrace& trace, const Vocabulary& vocab);

// Answer extraction + comparison.
class Matcher {
 public:
  virtual ~Matcher() = default;
  virtual bool matches(std::string_view generated, std::string_view target) const = 0;
  virtual std::string name() const = 0;
};

// Equality after trimming surrounding whitespace.
class ExactMatcher : public Matcher {
 public:
  bool matches(std::string_view generated, std::string_view target) const override;
  std::string name() const override { return "exact"; }
};

// Compares the text after the last occurrence of `marker` in the
// generation with the target (itself reduced to the text after its own
// marker, if it has one), both trimmed. No marker in the generation means
// no match.
class DelimiterMatcher : public Matcher {
 public:
  explicit DelimiterMatcher(std::string marker) : marker_(std::move(marker)) {}
  bool matches(std::string_view generated, std::string_view target) const override;
  std::string name() const override { return "delimiter:" + marker_; }

 private:
  std::string marker_;
};

std::string_view trim(std::string_view s);

struct EvalItem {
  std::string input;
  std::string target;
  std::string generated;
  bool correct = false;
};

struct EvalReport {
  std::vector<EvalItem> items;
  double accuracy = 0.0;
  std::string matcher;
};

EvalReport evaluate(const PromptEmbedding& p, const std::vector<TrainingExample>& test,
                    const ModelCheckpoint& ckpt, const Matcher& matcher,
                    const GenerateOptions& opts = {});

std::string trace_to_json(const GenerationTrace& trace, const Vocabulary& vocab);
GenerationTrace trace_from_json(const std::string& json);
void save_trace(const GenerationTrace& trace, const Vocabulary& vocab,
                const std::filesystem::path& path);
GenerationTrace load_trace(const std::filesystem::path& path);

std::string eval_report_to_json(const EvalReport& report);

}  // namespace promptopt
