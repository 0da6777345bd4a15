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
#include <functional>
#include <vector>

#include "promptopt/model.hpp"

namespace promptopt {

struct PretrainConfig {
  int steps = 500;
  double learning_rate = 3e-3;
  int batch_size = 8;
  std::uint64_t seed = 0;
  // Documents scored for the reported corpus cross-entropy.
  std::size_t eval_documents = 128;
};

struct PretrainReport {
  double initial_ce = 0.0;  // per token, before the first step
  double final_ce = 0.0;    // per token, after the last step
  std::vector<double> step_losses;
};

// Reads a UTF-8 text file, one document per line. Empty lines are skipped.
std::vector<std::string> read_corpus(const std::filesystem::path& path);

// Character alphabet covering every document (first-seen order).
std::string corpus_alphabet(const std::vector<std::string>& documents);

// Tokenizes each document and appends EOS.
std::vector<std::vector<TokenId>> tokenize_corpus(const std::vector<std::string>& documents,
                                                  const Vocabulary& vocab);

// Mean next-token cross-entropy per token over the first `max_documents`
// documents, each truncated to max_seq + 1 tokens.
double corpus_cross_entropy(const ModelCheckpoint& ckpt,
                            const std::vector<std::vector<TokenId>>& corpus,
                            std::size_t max_documents);

using PretrainProgress = std::function<void(int step, double loss)>;

// Trains every weight of a freshly initialized model on next-token
// prediction. Deterministic for a given seed. Throws UsageError on an
// empty corpus or steps < 1, DivergenceError on a non-finite loss.
ModelCheckpoint pretrain_base(const std::vector<std::vector<TokenId>>& corpus,
                              const Vocabulary& vocab, ModelConfig config,
                              const PretrainConfig& pcfg, PretrainReport* report = nullptr,
                              const PretrainProgress& progress = {});

}  // namespace promptopt
