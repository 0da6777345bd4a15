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

#include "promptopt/dataset.hpp"

#include <fstream>

#include <json.hpp>

#include "promptopt/errors.hpp"

namespace promptopt {

TrainingExample make_example(const TextExample& text, const Vocabulary& vocab,
                             std::size_t line) {
  TrainingExample ex;
  ex.input = vocab.tokenize(text.input);
  ex.target = vocab.tokenize(text.target);
  ex.target.push_back(vocab.eos());
  ex.line = line;
  return ex;
}

namespace {

std::vector<std::pair<std::size_t, TextExample>> read_numbered(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  std::vector<std::pair<std::size_t, TextExample>> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({number, {j.at("input").get<std::string>(), j.at("target").get<std::string>()}});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + " line " + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::vector<TextExample> read_text_dataset(const std::filesystem::path& path) {
  std::vector<TextExample> out;
  for (auto& [n, ex] : read_numbered(path)) out.push_back(std::move(ex));
  return out;
}

std::vector<TrainingExample> load_dataset(const std::filesystem::path& path,
                                          const Vocabulary& vocab) {
  std::vector<TrainingExample> out;
  for (const auto& [n, ex] : read_numbered(path)) {
    try {
      out.push_back(make_example(ex, vocab, n));
    } catch (const TokenizationError& e) {
      throw ParseError(path.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::string dataset_to_jsonl(const std::vector<TextExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += nlohmann::json{{"input", ex.input}, {"target", ex.target}}.dump();
    out += '\n';
  }
  return out;
}

}  // namespace promptopt
