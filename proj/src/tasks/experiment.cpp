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

#include "promptopt/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "promptopt/errors.hpp"
#include "promptopt/gradcheck.hpp"

namespace promptopt {

std::unique_ptr<Matcher> make_matcher(const std::string& spec) {
  if (spec == "exact") return std::make_unique<ExactMatcher>();
  const std::string prefix = "delimiter:";
  if (spec.rfind(prefix, 0) == 0 && spec.size() > prefix.size())
    return std::make_unique<DelimiterMatcher>(spec.substr(prefix.size()));
  throw UsageError("unknown matcher '" + spec + "' (expected exact or delimiter:<marker>)");
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<TrainingExample> to_examples(const std::vector<TextExample>& text,
                                         const Vocabulary& vocab) {
  std::vector<TrainingExample> out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) out.push_back(make_example(text[i], vocab, i + 1));
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ModelCheckpoint* checkpoint,
                                const ExperimentLog& log) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  ExperimentResult r;
  r.task = tasks::make_task(cfg.task, cfg.seed, cfg.sizes);
  const Vocabulary vocab = Vocabulary::from_alphabet(tasks::alphabet());

  const auto t0 = std::chrono::steady_clock::now();
  if (checkpoint) {
    r.checkpoint.emplace(*checkpoint);
  } else {
    PretrainConfig pc = cfg.pretrain;
    pc.seed = cfg.seed;
    r.checkpoint.emplace(
        pretrain_base(tokenize_corpus(r.task.corpus, vocab), vocab, cfg.model, pc, &r.pretrain));
    std::ostringstream os;
    os << "pretrain: per-token CE " << r.pretrain.initial_ce << " -> " << r.pretrain.final_ce;
    say(os.str());
  }
  r.pretrain_seconds = seconds_since(t0);
  const ModelCheckpoint& ck = *r.checkpoint;

  const auto train = to_examples(r.task.train, ck.vocab());
  const auto test = to_examples(r.task.test, ck.vocab());
  const auto matcher = make_matcher(r.task.matcher);

  r.initial = init_prompt(r.task.prompt, ck);
  r.before = evaluate(r.initial, test, ck, *matcher);
  say("accuracy before: " + std::to_string(r.before.accuracy));

  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const auto t1 = std::chrono::steady_clock::now();
  r.optimized = optimize(r.initial, train, ck, tc, nullptr, [&](int e, double tr, double va) {
    std::ostringstream os;
    os << "epoch " << e << " train_loss " << tr << " val_loss " << va;
    say(os.str());
  });
  r.optimize_seconds = seconds_since(t1);
  r.after = evaluate(r.optimized.prompt, test, ck, *matcher);
  say("accuracy after: " + std::to_string(r.after.accuracy));
  return r;
}

GradientCheckResult check_prompt_gradient(std::uint64_t seed, const ModelConfig& model,
                                          double h, const ModelCheckpoint* checkpoint) {
  std::optional<ModelCheckpoint> owned;
  if (!checkpoint) {
    const Vocabulary vocab = Vocabulary::from_alphabet(tasks::alphabet());
    ModelConfig cfg = model;
    cfg.vocab_size = static_cast<int>(vocab.size());
    owned.emplace(cfg, vocab, ModelWeights::random(cfg, seed));
    checkpoint = &*owned;
  }
  const ModelCheckpoint& ck = *checkpoint;
  const std::vector<std::string>& symbols = ck.vocab().tokens();
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  auto random_text = [&](std::size_t n) {
    std::string s;
    while (s.size() < n) {
      const auto id = static_cast<TokenId>(rng() % symbols.size());
      if (id != ck.vocab().eos()) s += symbols[static_cast<std::size_t>(id)];
    }
    return s;
  };
  PromptEmbedding p = init_prompt(random_text(3 + rng() % 2), ck);
  // Move off the exact embedding rows so no coordinate sits at a special point.
  std::normal_distribution<double> noise(0.0, 0.05);
  for (double& v : p.matrix.data()) v += noise(rng);
  const TrainingExample ex =
      make_example({random_text(2 + rng() % 3), random_text(1 + rng() % 2)}, ck.vocab());

  double loss = 0.0;
  const Tensor2 analytic = example_loss_gradient(p, ex, ck, &loss);
  PromptEmbedding probe = p;
  const Tensor2 numeric = finite_diff_grad(
      [&](const Tensor2& m) {
        probe.matrix = m;
        return example_loss_value(probe, ex, ck);
      },
      p.matrix, h);
  GradientCheckResult r;
  r.seed = seed;
  r.loss = loss;
  r.floor = roundoff_floor(loss, h, kGradientTolerance);
  r.max_relative_error = max_relative_error(analytic, numeric, r.floor);
  for (std::size_t i = 0; i < analytic.size(); ++i)
    r.max_abs_error = std::max(r.max_abs_error, std::abs(analytic.data()[i] - numeric.data()[i]));
  r.entries = analytic.size();
  return r;
}

}  // namespace promptopt
