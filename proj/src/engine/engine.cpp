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

#include "promptopt/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "promptopt/adam.hpp"
#include "promptopt/errors.hpp"

namespace promptopt {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ParameterError("learning rate must be a finite value >= 0");
  if (max_epochs < 1) throw ParameterError("max_epochs must be >= 1");
  if (patience < 0) throw ParameterError("patience must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ParameterError("validation fraction must be in [0, 1)");
  if (!(divergence_ratio > 1.0)) throw ParameterError("divergence ratio must be > 1");
}

const char* to_string(StopReason r) {
  return r == StopReason::kEarlyStop ? "early-stop" : "max-epochs";
}

void check_example_fits(std::size_t prompt_length, const TrainingExample& ex,
                        const ModelCheckpoint& ckpt) {
  if (ex.target.empty()) {
    throw UsageError("training example" +
                     (ex.line ? " on line " + std::to_string(ex.line) : std::string()) +
                     " has an empty target");
  }
  const std::size_t need = prompt_length + ex.input.size() + ex.target.size();
  const auto cap = static_cast<std::size_t>(ckpt.config().max_seq);
  if (need > cap) {
    throw CapacityError("example" +
                        (ex.line ? " on line " + std::to_string(ex.line) : std::string()) +
                        " needs " + std::to_string(need) + " positions, max_seq is " +
                        std::to_string(cap));
  }
}

namespace {

std::vector<TokenId> continuation_tokens(const TrainingExample& ex, bool include_targets) {
  std::vector<TokenId> ids = ex.input;
  if (include_targets && !ex.target.empty())
    ids.insert(ids.end(), ex.target.begin(), ex.target.end() - 1);
  return ids;
}

// Token-embedding rows (no positions) for `ids`.
Tensor2 lookup(std::span<const TokenId> ids, const ModelCheckpoint& ckpt) {
  const Tensor2& table = ckpt.weights().token_embedding;
  Tensor2 out(ids.size(), table.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const TokenId id = ids[r];
    if (id < 0 || static_cast<std::size_t>(id) >= table.rows())
      throw IndexError("token id " + std::to_string(id) + " out of vocabulary");
    auto src = table.row(static_cast<std::size_t>(id));
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace

Tensor2 assemble_training_input(const PromptEmbedding& p, const TrainingExample& ex,
                                const ModelCheckpoint& ckpt, bool include_targets) {
  if (include_targets) check_example_fits(p.length(), ex, ckpt);
  const auto rest = continuation_tokens(ex, include_targets);
  const std::size_t k = p.matrix.rows();
  if (k + rest.size() > static_cast<std::size_t>(ckpt.config().max_seq)) {
    throw CapacityError("prompt + input of " + std::to_string(k + rest.size()) +
                        " positions exceeds max_seq " + std::to_string(ckpt.config().max_seq));
  }
  Tensor2 out(k + rest.size(), p.matrix.cols());
  std::copy(p.matrix.data().begin(), p.matrix.data().end(), out.data().begin());
  const Tensor2 tail = lookup(rest, ckpt);
  std::copy(tail.data().begin(), tail.data().end(),
            out.data().begin() + static_cast<std::ptrdiff_t>(p.matrix.size()));
  add_positions(out, ckpt, 0);
  return out;
}

Var assemble_on_tape(Var prompt_matrix, const TrainingExample& ex, const ModelCheckpoint& ckpt,
                     bool include_targets) {
  Tape& tape = *prompt_matrix.tape();
  const std::size_t k = prompt_matrix.value().rows();
  if (include_targets) check_example_fits(k, ex, ckpt);
  const auto rest = continuation_tokens(ex, include_targets);
  const std::size_t n = k + rest.size();
  if (n > static_cast<std::size_t>(ckpt.config().max_seq)) {
    throw CapacityError("prompt + input of " + std::to_string(n) +
                        " positions exceeds max_seq " + std::to_string(ckpt.config().max_seq));
  }
  Var seq = prompt_matrix;
  if (!rest.empty()) {
    const Var parts[] = {prompt_matrix, tape.constant_value(lookup(rest, ckpt))};
    seq = ad::concat_rows(parts);
  }
  Var pos = ad::slice_rows(tape.constant(ckpt.weights().position_embedding), 0, n);
  return ad::add(seq, pos);
}

Var example_loss(Var prompt_matrix, const TrainingExample& ex, const BoundWeights& frozen,
                 const ModelCheckpoint& ckpt) {
  Var x = assemble_on_tape(prompt_matrix, ex, ckpt, true);
  Var logits = forward_on_tape(frozen, ckpt.config(), x).logits;
  const std::size_t first = prompt_matrix.value().rows() + ex.input.size() - 1;
  return ad::cross_entropy(ad::slice_rows(logits, first, ex.target.size()), ex.target);
}

double example_loss_value(const PromptEmbedding& p, const TrainingExample& ex,
                          const ModelCheckpoint& ckpt) {
  Tape tape;
  const BoundWeights w = bind_frozen(tape, ckpt.weights());
  return example_loss(tape.constant(p.matrix), ex, w, ckpt).value()(0, 0);
}

Tensor2 example_loss_gradient(const PromptEmbedding& p, const TrainingExample& ex,
                              const ModelCheckpoint& ckpt, double* loss) {
  Tape tape;
  const BoundWeights w = bind_frozen(tape, ckpt.weights());
  Var leaf = tape.leaf(p.matrix);
  Var l = example_loss(leaf, ex, w, ckpt);
  if (loss) *loss = l.value()(0, 0);
  tape.backward(l);
  return tape.grad(leaf);
}

namespace {

double mean_loss(const Tensor2& matrix, const std::vector<const TrainingExample*>& set,
                 const ModelCheckpoint& ckpt) {
  // Fixed example order keeps the sum reproducible.
  double total = 0.0;
  for (const TrainingExample* ex : set) {
    Tape tape;
    const BoundWeights w = bind_frozen(tape, ckpt.weights());
    total += example_loss(tape.constant(matrix), *ex, w, ckpt).value()(0, 0);
  }
  return total / static_cast<double>(set.size());
}

}  // namespace

OptimizeResult optimize(const PromptEmbedding& p, const std::vector<TrainingExample>& train,
                        const ModelCheckpoint& ckpt, const TrainConfig& cfg,
                        const std::vector<TrainingExample>* validation,
                        const EpochCallback& on_epoch) {
  const auto started = std::chrono::steady_clock::now();
  cfg.validate();
  p.check_compatible(ckpt);
  if (p.length() == 0) throw UsageError("prompt embedding is empty");
  if (train.empty()) throw UsageError("no training examples");
  for (const auto& ex : train) check_example_fits(p.length(), ex, ckpt);
  if (validation)
    for (const auto& ex : *validation) check_example_fits(p.length(), ex, ckpt);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<const TrainingExample*> train_set, val_set;
  if (validation && !validation->empty()) {
    for (std::size_t i : order) train_set.push_back(&train[i]);
    for (const auto& ex : *validation) val_set.push_back(&ex);
  } else {
    auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction *
                                                     static_cast<double>(train.size())));
    if (n_val >= train.size()) n_val = 0;
    for (std::size_t i = 0; i < order.size(); ++i)
      (i < n_val ? val_set : train_set).push_back(&train[order[i]]);
  }

  OptimizeResult result{p, {}};
  TrainReport& report = result.report;
  report.validation_is_training_set = val_set.empty();
  report.train_examples = train_set.size();
  report.val_examples = val_set.size();
  const auto& monitor_set = val_set.empty() ? train_set : val_set;

  Tensor2 matrix = p.matrix;
  Adam adam(matrix.rows(), matrix.cols(), AdamConfig{cfg.learning_rate});
  report.initial_train_loss = mean_loss(matrix, train_set, ckpt);
  double best = mean_loss(matrix, monitor_set, ckpt);
  Tensor2 best_matrix = matrix;
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double epoch_total = 0.0;
    for (const TrainingExample* ex : train_set) {
      Tape tape;
      const BoundWeights w = bind_frozen(tape, ckpt.weights());
      Var leaf = tape.leaf(matrix);
      Var loss = example_loss(leaf, *ex, w, ckpt);
      const double lv = loss.value()(0, 0);
      if (!std::isfinite(lv)) throw DivergenceError("non-finite training loss", epoch);
      tape.backward(loss);
      const Tensor2 g = tape.grad(leaf);
      if (!g.all_finite()) throw DivergenceError("non-finite prompt gradient", epoch);
      adam.step(matrix, g);
      if (!matrix.all_finite()) throw DivergenceError("non-finite prompt embedding", epoch);
      epoch_total += lv;
    }
    const double train_loss = epoch_total / static_cast<double>(train_set.size());
    if (report.initial_train_loss > 0.0 &&
        train_loss > cfg.divergence_ratio * report.initial_train_loss) {
      throw DivergenceError("training loss " + std::to_string(train_loss) +
                                " exceeds " + std::to_string(cfg.divergence_ratio) +
                                "x the initial loss " +
                                std::to_string(report.initial_train_loss),
                            epoch);
    }
    const double monitored = mean_loss(matrix, monitor_set, ckpt);
    if (!std::isfinite(monitored)) throw DivergenceError("non-finite validation loss", epoch);
    report.train_loss.push_back(train_loss);
    report.val_loss.push_back(monitored);
    if (on_epoch) on_epoch(epoch, train_loss, monitored);

    if (monitored < best) {
      best = monitored;
      best_matrix = matrix;
      report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      report.stop_reason = StopReason::kEarlyStop;
      break;
    }
  }

  result.prompt.matrix = std::move(best_matrix);
  TrainingMetadata& meta = result.prompt.metadata;
  meta.learning_rate = cfg.learning_rate;
  meta.epochs_run = static_cast<int>(report.train_loss.size());
  meta.final_train_loss = report.train_loss.back();
  meta.final_val_loss = best;
  meta.seed = cfg.seed;
  meta.stop_reason = to_string(report.stop_reason);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace promptopt
