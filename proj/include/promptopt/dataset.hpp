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
#include <string>
#include <vector>

#include "promptopt/vocabulary.hpp"

namespace promptopt {

struct TrainingExample {
  std::vector<TokenId> input;
  std::vector<TokenId> target;  // nonempty; EOS-terminated when loaded from text
  std::size_t line = 0;         // 1-based source line, 0 when not from a file
};

struct TextExample {
  std::string input;
  std::string target;
};

// Tokenizes both fields and appends EOS to the target.
TrainingExample make_example(const TextExample& text, const Vocabulary& vocab,
                             std::size_t line = 0);

// JSON Lines, one {"input": ..., "target": ...} object per line. Blank lines
// are skipped. Errors name the offending line.
std::vector<TextExample> read_text_dataset(const std::filesystem::path& path);
std::vector<TrainingExample> load_dataset(const std::filesystem::path& path,
                                          const Vocabulary& vocab);
std::string dataset_to_jsonl(const std::vector<TextExample>& examples);

}  // namespace promptopt
