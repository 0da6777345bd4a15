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

#include "promptopt/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "promptopt/errors.hpp"

namespace promptopt {

bool AnchorReport::all_anchored() const {
  return std::all_of(positions.begin(), positions.end(),
                     [](const AnchorPosition& p) { return p.anchored(); });
}

AnchorReport anchor_report(const PromptEmbedding& p, const ModelCheckpoint& ckpt) {
  p.check_compatible(ckpt);
  const Tensor2& table = ckpt.weights().token_embedding;
  // scores(r, j) = v_r . e_j
  const Tensor2 scores = matmul_bt(p.matrix, table);
  const Tensor2 probs = softmax_rows(scores);
  AnchorReport report;
  for (std::size_t r = 0; r < p.matrix.rows(); ++r) {
    auto row = probs.row(r);
    AnchorPosition pos;
    pos.original = p.tokens[r];
    pos.nearest = static_cast<TokenId>(argmax(row));
    pos.p_nearest = row[static_cast<std::size_t>(pos.nearest)];
    pos.p_original = row[static_cast<std::size_t>(pos.original)];
    pos.distribution.assign(row.begin(), row.end());
    std::vector<std::size_t> idx(row.size());
    std::iota(idx.begin(), idx.end(), 0);
    const std::size_t top = std::min<std::size_t>(5, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(top), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                        return row[a] > row[b] || (row[a] == row[b] && a < b);
                      });
    for (std::size_t i = 0; i < top; ++i)
      pos.top.emplace_back(static_cast<TokenId>(idx[i]), row[idx[i]]);
    report.positions.push_back(std::move(pos));
  }
  return report;
}

std::optional<Repetition> detect_repetition(std::span<const TokenId> tokens,
                                            std::size_t max_period, std::size_t min_repeats) {
  const std::size_t n = tokens.size();
  const std::size_t cap = std::min(max_period, n / 2);
  for (std::size_t q = 1; q <= cap; ++q) {
    const auto gram = tokens.subspan(n - q, q);
    std::size_t repeats = 1;
    while ((repeats + 1) * q <= n &&
           std::equal(gram.begin(), gram.end(), tokens.begin() +
                                                    static_cast<std::ptrdiff_t>(n - (repeats + 1) * q)))
      ++repeats;
    if (repeats >= min_repeats)
      return Repetition{q, std::vector<TokenId>(gram.begin(), gram.end()), repeats};
  }
  return std::nullopt;
}

double entropy_bits(std::span<const double> distribution) {
  double h = 0.0;
  for (double p : distribution)
    if (p > 0.0) h -= p * std::log2(p);
  // Rounding can push a one-hot or uniform row just outside [0, log2 V].
  const double upper = distribution.empty() ? 0.0 : std::log2(static_cast<double>(distribution.size()));
  return std::clamp(h, 0.0, upper);
}

EntropyReport trajectory_entropy(const GenerationTrace& trace, std::size_t max_period,
                                 std::size_t min_repeats) {
  if (trace.steps() == 0) throw UsageError("trajectory entropy of an empty trace");
  if (!trace.has_distributions())
    throw UsageError("trajectory entropy needs full per-step distributions");
  EntropyReport report;
  double total = 0.0;
  for (std::size_t t = 0; t < trace.steps(); ++t) {
    const double h = entropy_bits(trace.distributions.row(t));
    report.step_bits.push_back(h);
    total += h;
  }
  report.trajectory_bits = total / static_cast<double>(trace.steps());
  report.repetition = detect_repetition(trace.tokens, max_period, min_repeats);
  return report;
}

EntropyReport trajectory_entropy(GenerationTrace& trace, std::size_t max_period,
                                 std::size_t min_repeats) {
  EntropyReport report =
      trajectory_entropy(static_cast<const GenerationTrace&>(trace), max_period, min_repeats);
  trace.entropy_bits = report.step_bits;
  return report;
}

namespace {

std::vector<Tensor2> last_rows(const HiddenStates& hidden) {
  std::vector<Tensor2> out;
  for (const Tensor2& h : hidden.layers) {
    Tensor2 row(1, h.cols());
    auto src = h.row(h.rows() - 1);
    std::copy(src.begin(), src.end(), row.row(0).begin());
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<Tensor2> mean_states(const std::vector<std::string>& stimuli,
                                 const ModelCheckpoint& ckpt) {
  std::vector<Tensor2> sum;
  for (const auto& s : stimuli) {
    auto states = last_position_states(s, ckpt);
    if (sum.empty()) {
      sum = std::move(states);
      continue;
    }
    for (std::size_t l = 0; l < sum.size(); ++l) {
      auto d = sum[l].data();
      auto v = states[l].data();
      for (std::size_t j = 0; j < d.size(); ++j) d[j] += v[j];
    }
  }
  const double n = static_cast<double>(stimuli.size());
  for (auto& t : sum)
    for (double& v : t.data()) v /= n;
  return sum;
}

double dot(const Tensor2& a, const Tensor2& b) {
  double acc = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) acc += ad[i] * bd[i];
  return acc;
}

std::vector<Tensor2> prompt_query_states(const PromptEmbedding& p, std::string_view query,
                                         const ModelCheckpoint& ckpt) {
  p.check_compatible(ckpt);
  const auto ids = ckpt.vocab().tokenize(query);
  const std::size_t k = p.matrix.rows();
  Tensor2 rows(k + ids.size(), p.matrix.cols());
  Tensor2 prompt_part = p.matrix;
  add_positions(prompt_part, ckpt, 0);
  std::copy(prompt_part.data().begin(), prompt_part.data().end(), rows.data().begin());
  const Tensor2 q = embed(ids, ckpt, k);
  std::copy(q.data().begin(), q.data().end(),
            rows.data().begin() + static_cast<std::ptrdiff_t>(prompt_part.size()));
  if (rows.rows() == 0) throw UsageError("empty prompt and query");
  return last_rows(forward(rows, ckpt).hidden);
}

}  // namespace

std::vector<Tensor2> last_position_states(std::string_view text, const ModelCheckpoint& ckpt) {
  const auto ids = ckpt.vocab().tokenize(text);
  if (ids.empty()) throw UsageError("empty stimulus");
  return last_rows(forward(embed(ids, ckpt), ckpt).hidden);
}

ProbeDirections lat_direction(const std::vector<std::string>& stimuli_a,
                              const std::vector<std::string>& stimuli_b,
                              const ModelCheckpoint& ckpt) {
  if (stimuli_a.empty() || stimuli_b.empty())
    throw UsageError("probe direction needs nonempty stimulus sets");
  const auto mean_a = mean_states(stimuli_a, ckpt);
  const auto mean_b = mean_states(stimuli_b, ckpt);
  ProbeDirections dirs;
  for (std::size_t l = 0; l < mean_a.size(); ++l) {
    Tensor2 diff(1, mean_a[l].cols());
    for (std::size_t j = 0; j < diff.cols(); ++j) diff(0, j) = mean_a[l](0, j) - mean_b[l](0, j);
    const double norm = std::sqrt(dot(diff, diff));
    if (norm < 1e-12) {
      diff = Tensor2(1, diff.cols());
    } else {
      for (double& v : diff.data()) v /= norm;
    }
    dirs.layers.push_back(std::move(diff));
  }
  return dirs;
}

double LatReport::first_block_delta() const {
  return layers.size() > 1 ? layers[1].delta : 0.0;
}

LatReport lat_delta(const PromptEmbedding& original, const PromptEmbedding& optimized,
                    const ProbeDirections& directions, std::string_view query,
                    const ModelCheckpoint& ckpt) {
  const auto layers = static_cast<std::size_t>(ckpt.config().layers) + 1;
  if (directions.layers.size() != layers) {
    throw UsageError("expected " + std::to_string(layers) + " probe directions, got " +
                     std::to_string(directions.layers.size()));
  }
  const auto a = prompt_query_states(original, query, ckpt);
  const auto b = prompt_query_states(optimized, query, ckpt);
  LatReport report;
  for (std::size_t l = 0; l < layers; ++l) {
    LatLayer row;
    row.projection_original = dot(a[l], directions.layers[l]);
    row.projection_optimized = dot(b[l], directions.layers[l]);
    row.delta = row.projection_optimized - row.projection_original;
    report.layers.push_back(row);
  }
  return report;
}

namespace {

std::string printable(const std::string& token) {
  if (token == " ") return "' '";
  if (token == "\t") return "\\t";
  return token;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

std::string anchor_report_to_json(const AnchorReport& r, const Vocabulary& vocab) {
  nlohmann::json positions = nlohmann::json::array();
  for (std::size_t i = 0; i < r.positions.size(); ++i) {
    const auto& p = r.positions[i];
    nlohmann::json top = nlohmann::json::array();
    for (const auto& [id, prob] : p.top)
      top.push_back({{"token", id}, {"symbol", vocab.token(id)}, {"p", prob}});
    positions.push_back({{"position", i},
                         {"original", p.original},
                         {"original_symbol", vocab.token(p.original)},
                         {"nearest", p.nearest},
                         {"nearest_symbol", vocab.token(p.nearest)},
                         {"p_nearest", p.p_nearest},
                         {"p_original", p.p_original},
                         {"anchored", p.anchored()},
                         {"top5", std::move(top)}});
  }
  return nlohmann::json{{"positions", std::move(positions)}, {"all_anchored", r.all_anchored()}}
      .dump(1);
}

std::string anchor_report_to_text(const AnchorReport& r, const Vocabulary& vocab) {
  std::ostringstream os;
  os << "pos  orig  nearest  p_nearest  p_original  anchored\n";
  for (std::size_t i = 0; i < r.positions.size(); ++i) {
    const auto& p = r.positions[i];
    char line[160];
    std::snprintf(line, sizeof line, "%3zu  %-4s  %-7s  %9.6f  %10.6f  %s\n", i,
                  printable(vocab.token(p.original)).c_str(),
                  printable(vocab.token(p.nearest)).c_str(), p.p_nearest, p.p_original,
                  p.anchored() ? "yes" : "no");
    os << line;
  }
  os << "all anchored: " << (r.all_anchored() ? "yes" : "no") << "\n";
  return os.str();
}

std::string entropy_report_to_json(const EntropyReport& r) {
  nlohmann::json j;
  j["step_bits"] = r.step_bits;
  j["trajectory_bits"] = r.trajectory_bits;
  j["steps"] = r.step_bits.size();
  if (r.repetition) {
    j["repetition"] = {{"period", r.repetition->period},
                       {"ngram", r.repetition->ngram},
                       {"repeats", r.repetition->repeats}};
  } else {
    j["repetition"] = nullptr;
  }
  return j.dump(1);
}

std::string entropy_report_to_text(const EntropyReport& r) {
  std::ostringstream os;
  os << "steps            " << r.step_bits.size() << "\n";
  os << "trajectory bits  " << fmt("%.6f", r.trajectory_bits) << "\n";
  if (r.repetition) {
    os << "repetition loop  period " << r.repetition->period << " x" << r.repetition->repeats
       << "\n";
  } else {
    os << "repetition loop  none\n";
  }
  return os.str();
}

std::string lat_report_to_json(const LatReport& r) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < r.layers.size(); ++l) {
    layers.push_back({{"layer", l},
                      {"proj_A", r.layers[l].projection_original},
                      {"proj_B", r.layers[l].projection_optimized},
                      {"delta", r.layers[l].delta}});
  }
  return nlohmann::json{{"layers", std::move(layers)}}.dump(1);
}

std::string lat_report_to_text(const LatReport& r) {
  std::ostringstream os;
  os << "layer       proj_A       proj_B        delta\n";
  for (std::size_t l = 0; l < r.layers.size(); ++l) {
    char line[128];
    std::snprintf(line, sizeof line, "%5zu  %11.6f  %11.6f  %11.6f\n", l,
                  r.layers[l].projection_original, r.layers[l].projection_optimized,
                  r.layers[l].delta);
    os << line;
  }
  return os.str();
}

std::string lat_report_to_csv(const LatReport& r) {
  std::ostringstream os;
  os << "layer,proj_A,proj_B,delta\n";
  for (std::size_t l = 0; l < r.layers.size(); ++l) {
    os << l << "," << fmt("%.17g", r.layers[l].projection_original) << ","
       << fmt("%.17g", r.layers[l].projection_optimized) << ","
       << fmt("%.17g", r.layers[l].delta) << "\n";
  }
  return os.str();
}

}  // namespace promptopt
