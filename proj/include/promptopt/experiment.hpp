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
#include <memory>
#include <optional>
#include <string>

#include "promptopt/engine.hpp"
#include "promptopt/inference.hpp"
#include "promptopt/model.hpp"
#include "promptopt/pretrain.hpp"
#include "promptopt/tasks.hpp"

namespace promptopt {

// End-to-end run on a bundled task: pretrain a base model on the task
// corpus, score the text prompt, optimize its embedding, score again.
struct ExperimentConfig {
  std::string task = "sentiment-toy";
  std::uint64_t seed = 1;
  ModelConfig model;  // vocab_size is filled from the task alphabet
  PretrainConfig pretrain{.steps = 1200, .learning_rate = 3e-3};
  TrainConfig train;
  tasks::TaskSizes sizes;
};

struct ExperimentResult {
  tasks::TaskBundle task;
  std::optional<ModelCheckpoint> checkpoint;
  PretrainReport pretrain;
  PromptEmbedding initial;
  OptimizeResult optimized;
  EvalReport before;
  EvalReport after;
  double pretrain_seconds = 0.0;
  double optimize_seconds = 0.0;
};

std::unique_ptr<Matcher> make_matcher(const std::string& spec);

using ExperimentLog = std::function<void(const std::string& line)>;

// Seeds of the pretraining run, data split and example order all derive
// from cfg.seed. A supplied checkpoint skips pretraining.
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const ModelCheckpoint* checkpoint = nullptr,
                                const ExperimentLog& log = {});

inline constexpr double kGradientTolerance = 1e-4;

struct GradientCheckResult {
  std::uint64_t seed = 0;
  double loss = 0.0;
  double max_relative_error = 0.0;  // with roundoff_floor(loss, h, kGradientTolerance)
  double max_abs_error = 0.0;
  double floor = 0.0;
  std::size_t entries = 0;
};

// Compares the analytic prompt gradient of example_loss with central
// differences on a randomly initialized model of shape `model`, using a
// short random prompt and example drawn from `seed`. A supplied checkpoint
// replaces the random model.
GradientCheckResult check_prompt_gradient(std::uint64_t seed, const ModelConfig& model = {},
                                          double h = 1e-5,
                                          const ModelCheckpoint* checkpoint = nullptr);

}  // namespace promptopt
