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

#include "promptopt/prompt.hpp"

#include <algorithm>

#include <json.hpp>

#include "promptopt/binary_io.hpp"
#include "promptopt/errors.hpp"

namespace promptopt {

namespace {

constexpr std::uint8_t kMagic[8] = {'P', 'O', 'P', 'R', 'M', 'T', 0, 1};

nlohmann::json metadata_json(const TrainingMetadata& m) {
  nlohmann::json j;
  j["learning_rate"] = m.learning_rate;
  j["epochs_run"] = m.epochs_run;
  j["final_train_loss"] = m.final_train_loss ? nlohmann::json(*m.final_train_loss) : nullptr;
  j["final_val_loss"] = m.final_val_loss ? nlohmann::json(*m.final_val_loss) : nullptr;
  j["seed"] = m.seed;
  j["stop_reason"] = m.stop_reason;
  return j;
}

TrainingMetadata metadata_from_json(const nlohmann::json& j) {
  TrainingMetadata m;
  m.learning_rate = j.at("learning_rate").get<double>();
  m.epochs_run = j.at("epochs_run").get<int>();
  if (!j.at("final_train_loss").is_null())
    m.final_train_loss = j.at("final_train_loss").get<double>();
  if (!j.at("final_val_loss").is_null()) m.final_val_loss = j.at("final_val_loss").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.stop_reason = j.at("stop_reason").get<std::string>();
  return m;
}

}  // namespace

void PromptEmbedding::check_compatible(const ModelCheckpoint& ckpt) const {
  if (origin_hash != ckpt.hash()) {
    throw CompatibilityError("prompt embedding was built for checkpoint " +
                             to_hex(origin_hash).substr(0, 16) + ", not " +
                             to_hex(ckpt.hash()).substr(0, 16));
  }
  if (matrix.cols() != static_cast<std::size_t>(ckpt.config().d_model)) {
    throw CompatibilityError("prompt embedding width " + std::to_string(matrix.cols()) +
                             " does not match d_model " +
                             std::to_string(ckpt.config().d_model));
  }
}

PromptEmbedding init_prompt(std::string_view prompt_text, const ModelCheckpoint& ckpt) {
  if (prompt_text.empty()) throw UsageError("prompt text is empty");
  PromptEmbedding p;
  p.tokens = ckpt.vocab().tokenize(prompt_text);
  const Tensor2& table = ckpt.weights().token_embedding;
  p.matrix = Tensor2(p.tokens.size(), table.cols());
  for (std::size_t r = 0; r < p.tokens.size(); ++r) {
    auto src = table.row(static_cast<std::size_t>(p.tokens[r]));
    std::copy(src.begin(), src.end(), p.matrix.row(r).begin());
  }
  p.origin_hash = ckpt.hash();
  return p;
}

std::vector<std::uint8_t> serialize_artifact(const PromptEmbedding& p) {
  if (p.matrix.rows() != p.tokens.size()) {
    throw ShapeError("prompt matrix has " + std::to_string(p.matrix.rows()) +
                     " rows for " + std::to_string(p.tokens.size()) + " tokens");
  }
  io::ByteWriter w;
  w.bytes(kMagic);
  w.pod<std::uint32_t>(kArtifactVersion);
  w.bytes(p.origin_hash);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(p.matrix.rows()));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(p.matrix.cols()));
  for (TokenId t : p.tokens) w.pod<std::int32_t>(t);
  w.reals(p.matrix.data());
  const std::string meta = metadata_json(p.metadata).dump();
  w.pod<std::uint64_t>(meta.size());
  w.text(meta);
  const Digest h = sha256(w.buffer());
  w.bytes(h);
  return std::move(w.buffer());
}

void save_artifact(const PromptEmbedding& p, const std::filesystem::path& path) {
  io::write_file(path, serialize_artifact(p));
}

PromptEmbedding deserialize_artifact(std::span<const std::uint8_t> bytes,
                                     const ModelCheckpoint* ckpt) {
  io::ByteReader r(bytes);
  const auto magic = r.bytes(sizeof(kMagic));
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw ParseError("not a prompt artifact (bad magic)");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kArtifactVersion) {
    throw VersionError("artifact format version " + std::to_string(version) +
                       " is not supported (expected " + std::to_string(kArtifactVersion) + ")");
  }
  if (bytes.size() < 32) throw ParseError("artifact too short");
  const auto body = bytes.first(bytes.size() - 32);
  const Digest actual = sha256(body);
  if (!std::equal(actual.begin(), actual.end(), bytes.end() - 32)) {
    throw IntegrityError("artifact content hash mismatch");
  }

  PromptEmbedding p;
  const auto origin = r.bytes(32);
  std::copy(origin.begin(), origin.end(), p.origin_hash.begin());
  const auto k = r.pod<std::uint32_t>();
  const auto d = r.pod<std::uint32_t>();
  if (static_cast<std::uint64_t>(k) * d * sizeof(double) > r.remaining()) {
    throw ParseError("artifact matrix larger than file");
  }
  p.tokens.resize(k);
  for (auto& t : p.tokens) t = r.pod<std::int32_t>();
  p.matrix = Tensor2(k, d);
  r.reals(p.matrix.data());
  const auto meta_len = r.pod<std::uint64_t>();
  if (meta_len + 32 != r.remaining()) throw ParseError("artifact metadata length is inconsistent");
  try {
    p.metadata = metadata_from_json(nlohmann::json::parse(r.text(meta_len)));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("artifact metadata: ") + e.what());
  }
  if (!p.matrix.all_finite()) throw IntegrityError("artifact matrix has non-finite values");
  if (ckpt) p.check_compatible(*ckpt);
  return p;
}

PromptEmbedding load_artifact(const std::filesystem::path& path, const ModelCheckpoint* ckpt) {
  const auto bytes = io::read_file(path);
  return deserialize_artifact(bytes, ckpt);
}

}  // namespace promptopt
