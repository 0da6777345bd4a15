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
#include <optional>
#include <string>
#include <vector>

#include "promptopt/dataset.hpp"
#include "promptopt/model.hpp"
#include "promptopt/prompt.hpp"
#include "promptopt/tape.hpp"

namespace promptopt {

struct TrainConfig {
  double learning_rate = 0.01;
  int max_epochs = 10;
  // Epochs without improvement of the monitored loss before stopping.
  int patience = 2;
  std::uint64_t seed = 0;
  // Held-out share of the data when no validation set is supplied.
  double validation_fraction = 0.2;
  // An epoch whose mean training loss exceeds this multiple of the
  // pre-training loss is treated as divergence.
  double divergence_ratio = 4.0;

  // Throws ParameterError. A zero learning rate is accepted here (it
  // leaves the prompt unchanged); the CLI rejects it.
  void validate() const;
};

enum class StopReason { kMaxEpochs, kEarlyStop };
const char* to_string(StopReason r);

struct TrainReport {
  std::vector<double> train_loss;  // mean per-example loss during each epoch
  // Loss after each epoch on the validation examples, or on the training
  // examples when there is no validation split.
  std::vector<double> val_loss;
  bool validation_is_training_set = false;
  double initial_train_loss = 0.0;
  int best_epoch = 0;  // 1-based; 0 means the initial embedding was kept
  StopReason stop_reason = StopReason::kMaxEpochs;
  double wall_seconds = 0.0;
  std::size_t train_examples = 0;
  std::size_t val_examples = 0;
};

// [prompt rows; input token rows; target rows except the last] plus
// position embeddings over the whole sequence. With include_targets=false
// only the prompt and input rows are produced.
Tensor2 assemble_training_input(const PromptEmbedding& p, const TrainingExample& ex,
                                const ModelCheckpoint& ckpt, bool include_targets = true);

// Same sequence built on a tape from a prompt-matrix variable.
Var assemble_on_tape(Var prompt_matrix, const TrainingExample& ex, const ModelCheckpoint& ckpt,
                     bool include_targets = true);

// Summed cross-entropy over the target positions only (teacher forcing).
Var example_loss(Var prompt_matrix, const TrainingExample& ex, const BoundWeights& frozen,
                 const ModelCheckpoint& ckpt);

double example_loss_value(const PromptEmbedding& p, const TrainingExample& ex,
                          const ModelCheckpoint& ckpt);
// d(example loss)/d(prompt matrix). Writes the loss to `loss` if given.
Tensor2 example_loss_gradient(const PromptEmbedding& p, const TrainingExample& ex,
                              const ModelCheckpoint& ckpt, double* loss = nullptr);

// Throws CapacityError naming ex.line when prompt + input + target does not
// fit in max_seq.
void check_example_fits(std::size_t prompt_length, const TrainingExample& ex,
                        const ModelCheckpoint& ckpt);

struct OptimizeResult {
  PromptEmbedding prompt;
  TrainReport report;
};

using EpochCallback = std::function<void(int epoch, double train_loss, double val_loss)>;

// Adam on the prompt matrix only; the checkpoint is read through a const
// reference and bound as constants. Returns the matrix with the best
// monitored loss. Throws DivergenceError on non-finite values or runaway loss.
OptimizeResult optimize(const PromptEmbedding& p, const std::vector<TrainingExample>& train,
                        const ModelCheckpoint& ckpt, const TrainConfig& cfg,
                        const std::vector<TrainingExample>* validation = nullptr,
                        const EpochCallback& on_epoch = {});

}  // namespace promptopt
