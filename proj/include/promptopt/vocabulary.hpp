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

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace promptopt {

using TokenId = int;

// Character-level vocabulary. Each regular token is one UTF-8 encoded code
// point; one reserved end-of-sequence token never appears in text.
class Vocabulary {
 public:
  static constexpr std::string_view kEosToken = "<eos>";

  Vocabulary() = default;
  // Ordered token strings. Exactly one entry must be kEosToken.
  explicit Vocabulary(std::vector<std::string> tokens);

  // EOS at id 0, followed by the distinct code points of `alphabet` in
  // first-seen order.
  static Vocabulary from_alphabet(std::string_view alphabet);

  std::size_t size() const { return tokens_.size(); }
  TokenId eos() const { return eos_; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const;
  bool contains(std::string_view symbol) const;

  std::vector<TokenId> tokenize(std::string_view text) const;
  // EOS renders as the empty string.
  std::string detokenize(std::span<const TokenId> ids) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId eos_ = -1;
};

// Splits UTF-8 text into code points. Throws ParseError on malformed input.
std::vector<std::string> split_code_points(std::string_view text);

}  // namespace promptopt
