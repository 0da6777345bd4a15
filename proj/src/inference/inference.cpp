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

#include "promptopt/inference.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "promptopt/binary_io.hpp"
#include "promptopt/errors.hpp"

namespace promptopt {

const char* to_string(GenerationStop s) {
  return s == GenerationStop::kEos ? "eos" : "max-tokens";
}

namespace {

GenerationTrace greedy_loop(Tensor2 rows, const ModelCheckpoint& ckpt,
                            const GenerateOptions& opts) {
  const auto max_seq = static_cast<std::size_t>(ckpt.config().max_seq);
  if (rows.rows() > max_seq) {
    throw CapacityError("prompt + query of " + std::to_string(rows.rows()) +
                        " positions exceeds max_seq " + std::to_string(max_seq));
  }
  if (opts.max_tokens < 0) throw UsageError("max_tokens must be >= 0");
  const TokenId eos = opts.eos.value_or(ckpt.vocab().eos());
  const std::size_t vocab = ckpt.vocab().size();

  GenerationTrace trace;
  trace.vocab_size = vocab;
  trace.stop = GenerationStop::kMaxTokens;
  if (opts.max_tokens == 0) return trace;
  if (rows.rows() == 0) throw UsageError("cannot generate from an empty sequence");

  std::vector<double> dists;
  for (int step = 0; step < opts.max_tokens; ++step) {
    const Tensor2 logits = forward(rows, ckpt).logits;
    Tensor2 last(1, vocab);
    std::copy(logits.row(logits.rows() - 1).begin(), logits.row(logits.rows() - 1).end(),
              last.row(0).begin());
    const Tensor2 probs = softmax_rows(last);
    const auto next = static_cast<TokenId>(argmax(probs.row(0)));
    trace.tokens.push_back(next);
    trace.chosen_probability.push_back(probs(0, static_cast<std::size_t>(next)));
    if (opts.record_distributions)
      dists.insert(dists.end(), probs.data().begin(), probs.data().end());
    if (next == eos) {
      trace.stop = GenerationStop::kEos;
      break;
    }
    if (rows.rows() == max_seq) break;
    const TokenId id[] = {next};
    const Tensor2 row = embed(id, ckpt, rows.rows());
    Tensor2 grown(rows.rows() + 1, rows.cols());
    std::copy(rows.data().begin(), rows.data().end(), grown.data().begin());
    std::copy(row.data().begin(), row.data().end(),
              grown.data().begin() + static_cast<std::ptrdiff_t>(rows.size()));
    rows = std::move(grown);
  }
  if (opts.record_distributions)
    trace.distributions = Tensor2(trace.tokens.size(), vocab, std::move(dists));
  return trace;
}

}  // namespace

GenerationTrace generate(const PromptEmbedding& p, std::span<const TokenId> user_input,
                         const ModelCheckpoint& ckpt, const GenerateOptions& opts) {
  p.check_compatible(ckpt);
  const std::size_t k = p.matrix.rows();
  if (k + user_input.size() > static_cast<std::size_t>(ckpt.config().max_seq)) {
    throw CapacityError("prompt + query of " + std::to_string(k + user_input.size()) +
                        " positions exceeds max_seq " + std::to_string(ckpt.config().max_seq));
  }
  Tensor2 rows(k + user_input.size(), p.matrix.cols());
  Tensor2 prompt_part = p.matrix;
  add_positions(prompt_part, ckpt, 0);
  std::copy(prompt_part.data().begin(), prompt_part.data().end(), rows.data().begin());
  const Tensor2 query = embed(user_input, ckpt, k);
  std::copy(query.data().begin(), query.data().end(),
            rows.data().begin() + static_cast<std::ptrdiff_t>(prompt_part.size()));
  return greedy_loop(std::move(rows), ckpt, opts);
}

GenerationTrace generate(const PromptEmbedding& p, std::string_view user_input,
                         const ModelCheckpoint& ckpt, const GenerateOptions& opts) {
  const auto ids = ckpt.vocab().tokenize(user_input);
  return generate(p, ids, ckpt, opts);
}

GenerationTrace generate_from_text(std::string_view prompt_text, std::string_view user_input,
                                   const ModelCheckpoint& ckpt, const GenerateOptions& opts) {
  std::string full(prompt_text);
  full += user_input;
  const auto ids = ckpt.vocab().tokenize(full);
  if (ids.size() > static_cast<std::size_t>(ckpt.config().max_seq)) {
    throw CapacityError("prompt + query of " + std::to_string(ids.size()) +
                        " positions exceeds max_seq " + std::to_string(ckpt.config().max_seq));
  }
  return greedy_loop(embed(ids, ckpt), ckpt, opts);
}

std::string trace_text(const GenerationTrace& trace, const Vocabulary& vocab) {
  return vocab.detokenize(trace.tokens);
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool ExactMatcher::matches(std::string_view generated, std::string_view target) const {
  return trim(generated) == trim(target);
}

bool DelimiterMatcher::matches(std::string_view generated, std::string_view target) const {
  const auto at = generated.rfind(marker_);
  if (at == std::string_view::npos) return false;
  const auto t_at = target.rfind(marker_);
  if (t_at != std::string_view::npos) target = target.substr(t_at + marker_.size());
  return trim(generated.substr(at + marker_.size())) == trim(target);
}

EvalReport evaluate(const PromptEmbedding& p, const std::vector<TrainingExample>& test,
                    const ModelCheckpoint& ckpt, const Matcher& matcher,
                    const GenerateOptions& opts) {
  if (test.empty()) throw UsageError("evaluation needs at least one example");
  EvalReport report;
  report.matcher = matcher.name();
  const Vocabulary& vocab = ckpt.vocab();
  std::size_t correct = 0;
  GenerateOptions light = opts;
  light.record_distributions = false;
  for (const auto& ex : test) {
    EvalItem item;
    item.input = vocab.detokenize(ex.input);
    item.target = vocab.detokenize(ex.target);
    try {
      item.generated = trace_text(generate(p, ex.input, ckpt, light), vocab);
      item.correct = matcher.matches(item.generated, item.target);
    } catch (const CapacityError&) {
      // A query that does not fit produces nothing and is scored wrong.
      item.generated.clear();
    }
    correct += item.correct ? 1 : 0;
    report.items.push_back(std::move(item));
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  return report;
}

std::string trace_to_json(const GenerationTrace& trace, const Vocabulary& vocab) {
  nlohmann::json j;
  j["tokens"] = trace.tokens;
  std::vector<std::string> strings;
  for (TokenId t : trace.tokens) strings.push_back(vocab.token(t));
  j["token_strings"] = strings;
  j["text"] = trace_text(trace, vocab);
  j["stop_reason"] = to_string(trace.stop);
  j["vocab_size"] = trace.vocab_size;
  j["chosen_probability"] = trace.chosen_probability;
  if (trace.has_distributions()) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < trace.distributions.rows(); ++r) {
      auto row = trace.distributions.row(r);
      rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    j["distributions"] = std::move(rows);
  } else {
    j["distributions"] = nullptr;
  }
  j["entropy_bits"] = trace.entropy_bits ? nlohmann::json(*trace.entropy_bits) : nullptr;
  return j.dump(1);
}

GenerationTrace trace_from_json(const std::string& json) {
  GenerationTrace t;
  try {
    const auto j = nlohmann::json::parse(json);
    t.tokens = j.at("tokens").get<std::vector<TokenId>>();
    const auto stop = j.at("stop_reason").get<std::string>();
    if (stop == "eos") {
      t.stop = GenerationStop::kEos;
    } else if (stop == "max-tokens") {
      t.stop = GenerationStop::kMaxTokens;
    } else {
      throw ParseError("unknown stop reason '" + stop + "'");
    }
    t.vocab_size = j.at("vocab_size").get<std::size_t>();
    if (j.contains("chosen_probability"))
      t.chosen_probability = j.at("chosen_probability").get<std::vector<double>>();
    const auto& d = j.at("distributions");
    if (!d.is_null()) {
      std::vector<double> flat;
      for (const auto& row : d) {
        auto r = row.get<std::vector<double>>();
        if (r.size() != t.vocab_size) throw ParseError("trace distribution row has wrong width");
        flat.insert(flat.end(), r.begin(), r.end());
      }
      if (d.size() != t.tokens.size())
        throw ParseError("trace has " + std::to_string(d.size()) + " distributions for " +
                         std::to_string(t.tokens.size()) + " tokens");
      t.distributions = Tensor2(d.size(), t.vocab_size, std::move(flat));
    }
    if (j.contains("entropy_bits") && !j.at("entropy_bits").is_null())
      t.entropy_bits = j.at("entropy_bits").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("trace: ") + e.what());
  }
  return t;
}

void save_trace(const GenerationTrace& trace, const Vocabulary& vocab,
                const std::filesystem::path& path) {
  io::write_text_file(path, trace_to_json(trace, vocab));
}

GenerationTrace load_trace(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return trace_from_json(std::string(bytes.begin(), bytes.end()));
}

std::string eval_report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["accuracy"] = report.accuracy;
  j["matcher"] = report.matcher;
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : report.items) {
    items.push_back({{"input", it.input},
                     {"target", it.target},
                     {"generated", it.generated},
                     {"correct", it.correct}});
  }
  j["items"] = std::move(items);
  return j.dump(1);
}

}  // namespace promptopt
