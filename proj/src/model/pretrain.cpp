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

#include "promptopt/pretrain.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <unordered_set>

#include "promptopt/adam.hpp"
#include "promptopt/errors.hpp"

namespace promptopt {

std::vector<std::string> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus " + path.string());
  std::vector<std::string> docs;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) docs.push_back(line);
  }
  return docs;
}

std::string corpus_alphabet(const std::vector<std::string>& documents) {
  std::string alphabet;
  std::unordered_set<std::string> seen;
  for (const auto& doc : documents) {
    for (auto& cp : split_code_points(doc)) {
      if (seen.insert(cp).second) alphabet += cp;
    }
  }
  return alphabet;
}

std::vector<std::vector<TokenId>> tokenize_corpus(const std::vector<std::string>& documents,
                                                  const Vocabulary& vocab) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(documents.size());
  for (const auto& doc : documents) {
    auto ids = vocab.tokenize(doc);
    ids.push_back(vocab.eos());
    out.push_back(std::move(ids));
  }
  return out;
}

namespace {

// Token/target pair for next-token prediction within max_seq.
struct Window {
  std::vector<TokenId> inputs;
  std::vector<TokenId> targets;
};

Window make_window(const std::vector<TokenId>& doc, std::size_t start, std::size_t max_seq) {
  Window w;
  const std::size_t len = std::min(doc.size() - start - 1, max_seq);
  w.inputs.assign(doc.begin() + static_cast<std::ptrdiff_t>(start),
                  doc.begin() + static_cast<std::ptrdiff_t>(start + len));
  w.targets.assign(doc.begin() + static_cast<std::ptrdiff_t>(start + 1),
                   doc.begin() + static_cast<std::ptrdiff_t>(start + 1 + len));
  return w;
}

Var window_loss(const BoundWeights& w, const ModelConfig& cfg, const Window& win) {
  Var tok = ad::gather_rows(w.token_embedding, win.inputs);
  Var pos = ad::slice_rows(w.position_embedding, 0, win.inputs.size());
  Var logits = forward_on_tape(w, cfg, ad::add(tok, pos)).logits;
  return ad::cross_entropy(logits, win.targets);
}

}  // namespace

double corpus_cross_entropy(const ModelCheckpoint& ckpt,
                            const std::vector<std::vector<TokenId>>& corpus,
                            std::size_t max_documents) {
  double total = 0.0;
  std::size_t count = 0;
  const auto max_seq = static_cast<std::size_t>(ckpt.config().max_seq);
  for (std::size_t i = 0; i < corpus.size() && i < max_documents; ++i) {
    if (corpus[i].size() < 2) continue;
    const Window win = make_window(corpus[i], 0, max_seq);
    const Tensor2 x = embed(win.inputs, ckpt);
    total += cross_entropy(forward(x, ckpt).logits, win.targets);
    count += win.targets.size();
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

ModelCheckpoint pretrain_base(const std::vector<std::vector<TokenId>>& corpus,
                              const Vocabulary& vocab, ModelConfig config,
                              const PretrainConfig& pcfg, PretrainReport* report,
                              const PretrainProgress& progress) {
  if (pcfg.steps < 1) throw UsageError("pretraining needs steps >= 1");
  if (pcfg.batch_size < 1) throw UsageError("pretraining needs batch_size >= 1");
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (corpus[i].size() >= 2) usable.push_back(i);
  if (usable.empty()) throw UsageError("pretraining corpus is empty");

  config.vocab_size = static_cast<int>(vocab.size());
  config.validate();
  ModelWeights weights = ModelWeights::random(config, pcfg.seed);

  if (report) {
    report->initial_ce = corpus_cross_entropy(ModelCheckpoint(config, vocab, weights), corpus,
                                              pcfg.eval_documents);
  }

  std::vector<Adam> opt;
  weights.for_each([&](const std::string&, const Tensor2& t) {
    opt.emplace_back(t.rows(), t.cols(), AdamConfig{pcfg.learning_rate});
  });

  // Sampling stream is separate from the initialization stream.
  std::mt19937_64 rng(pcfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto max_seq = static_cast<std::size_t>(config.max_seq);

  for (int step = 0; step < pcfg.steps; ++step) {
    Tape tape;
    const BoundWeights bw = bind_trainable(tape, weights);
    std::vector<Var> losses;
    std::size_t tokens = 0;
    for (int b = 0; b < pcfg.batch_size; ++b) {
      const auto& doc = corpus[usable[rng() % usable.size()]];
      const std::size_t span = doc.size() - 1;
      const std::size_t start = span > max_seq ? rng() % (span - max_seq + 1) : 0;
      const Window win = make_window(doc, start, max_seq);
      losses.push_back(window_loss(bw, config, win));
      tokens += win.targets.size();
    }
    Var total = ad::sum(ad::concat_rows(losses));
    Var loss = ad::scale(total, 1.0 / static_cast<double>(tokens));
    const double lv = loss.value()(0, 0);
    if (!std::isfinite(lv)) throw DivergenceError("non-finite pretraining loss", step);
    tape.backward(loss);

    // Linear decay to 10% of the base rate.
    const double frac = static_cast<double>(step) / static_cast<double>(pcfg.steps);
    const double lr = pcfg.learning_rate * (1.0 - 0.9 * frac);
    const auto leaves = bw.all();
    std::size_t i = 0;
    weights.for_each([&](const std::string&, Tensor2& t) {
      const Tensor2 g = tape.grad(leaves[i]);
      if (!g.all_finite()) throw DivergenceError("non-finite pretraining gradient", step);
      opt[i].set_learning_rate(lr);
      opt[i].step(t, g);
      ++i;
    });
    if (report) report->step_losses.push_back(lv);
    if (progress) progress(step, lv);
  }

  ModelCheckpoint ckpt(config, vocab, std::move(weights));
  if (report) report->final_ce = corpus_cross_entropy(ckpt, corpus, pcfg.eval_documents);
  return ckpt;
}

}  // namespace promptopt
