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

#include "promptopt/vocabulary.hpp"

#include "promptopt/errors.hpp"

namespace promptopt {

namespace {

std::size_t code_point_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xe) return 3;
  if ((lead >> 3) == 0x1e) return 4;
  return 0;
}

}  // namespace

std::vector<std::string> split_code_points(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t len = code_point_length(static_cast<unsigned char>(text[i]));
    if (len == 0 || i + len > text.size()) {
      throw ParseError("malformed UTF-8 at byte " + std::to_string(i));
    }
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xc0) != 0x80) {
        throw ParseError("malformed UTF-8 at byte " + std::to_string(i));
      }
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const std::string& t = tokens_[i];
    if (t == kEosToken) {
      if (eos_ >= 0) throw ParseError("vocabulary has more than one EOS token");
      eos_ = static_cast<TokenId>(i);
    } else if (split_code_points(t).size() != 1) {
      throw ParseError("vocabulary entry '" + t + "' is not a single character");
    }
    if (!index_.emplace(t, static_cast<TokenId>(i)).second) {
      throw ParseError("duplicate vocabulary entry '" + t + "'");
    }
  }
  if (eos_ < 0) throw ParseError("vocabulary has no EOS token");
}

Vocabulary Vocabulary::from_alphabet(std::string_view alphabet) {
  std::vector<std::string> tokens{std::string(kEosToken)};
  std::unordered_map<std::string, bool> seen;
  for (auto& cp : split_code_points(alphabet)) {
    if (seen.emplace(cp, true).second) tokens.push_back(std::move(cp));
  }
  return Vocabulary(std::move(tokens));
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) + " out of vocabulary of size " +
                     std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view symbol) const {
  return symbol != kEosToken && index_.count(std::string(symbol)) > 0;
}

std::vector<TokenId> Vocabulary::tokenize(std::string_view text) const {
  std::vector<TokenId> ids;
  std::size_t offset = 0;
  for (const auto& cp : split_code_points(text)) {
    auto it = index_.find(cp);
    if (it == index_.end() || it->second == eos_) throw TokenizationError(cp, offset);
    ids.push_back(it->second);
    offset += cp.size();
  }
  return ids;
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id == eos_) continue;
    out += token(id);
  }
  return out;
}

}  // namespace promptopt
