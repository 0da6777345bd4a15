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

#include "promptopt/checkpoint.hpp"

#include <algorithm>

#include <json.hpp>

#include "promptopt/binary_io.hpp"
#include "promptopt/errors.hpp"

namespace promptopt {

namespace {

constexpr std::uint8_t kMagic[8] = {'P', 'O', 'C', 'K', 'P', 'T', 0, 1};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelCheckpoint& ckpt) {
  io::ByteWriter w;
  w.bytes(kMagic);
  w.pod<std::uint32_t>(kCheckpointVersion);
  const std::string header = ckpt.header_json();
  w.pod<std::uint64_t>(header.size());
  w.text(header);
  const auto weights = ckpt.weight_bytes();
  w.bytes(weights);
  w.bytes(ckpt.hash());
  return std::move(w.buffer());
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  io::write_file(path, serialize_checkpoint(ckpt));
}

ModelCheckpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  const auto magic = r.bytes(sizeof(kMagic));
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw ParseError("not a checkpoint file (bad magic)");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) +
                       " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = r.pod<std::uint64_t>();
  if (header_len > r.remaining()) throw ParseError("checkpoint header length exceeds file size");
  const std::string header = r.text(static_cast<std::size_t>(header_len));

  ModelConfig cfg;
  std::vector<std::string> tokens;
  std::vector<std::pair<std::size_t, std::size_t>> declared;
  try {
    const auto j = nlohmann::json::parse(header);
    const auto& c = j.at("config");
    cfg.d_model = c.at("d_model").get<int>();
    cfg.layers = c.at("layers").get<int>();
    cfg.heads = c.at("heads").get<int>();
    cfg.d_ff = c.at("d_ff").get<int>();
    cfg.max_seq = c.at("max_seq").get<int>();
    cfg.vocab_size = c.at("vocab_size").get<int>();
    tokens = j.at("vocabulary").get<std::vector<std::string>>();
    for (const auto& t : j.at("tensors"))
      declared.emplace_back(t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  try {
    cfg.validate();
  } catch (const ParameterError& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }

  ModelWeights weights = ModelWeights::zeros(cfg);
  std::size_t i = 0;
  const std::size_t weights_begin = r.position();
  weights.for_each([&](const std::string& name, Tensor2& t) {
    if (i >= declared.size() || declared[i].first != t.rows() ||
        declared[i].second != t.cols()) {
      throw ParseError("checkpoint tensor list does not match config at " + name);
    }
    r.reals(t.data());
    ++i;
  });
  if (i != declared.size()) throw ParseError("checkpoint declares extra tensors");
  const std::size_t weights_end = r.position();
  const auto stored = r.bytes(32);
  if (r.remaining() != 0) throw ParseError("trailing bytes after checkpoint hash");

  std::vector<std::uint8_t> hashed(header.begin(), header.end());
  hashed.insert(hashed.end(), bytes.begin() + static_cast<std::ptrdiff_t>(weights_begin),
                bytes.begin() + static_cast<std::ptrdiff_t>(weights_end));
  const Digest actual = sha256(hashed);
  if (!std::equal(actual.begin(), actual.end(), stored.begin())) {
    throw IntegrityError("checkpoint content hash mismatch");
  }
  try {
    return ModelCheckpoint(cfg, Vocabulary(std::move(tokens)), std::move(weights));
  } catch (const IntegrityError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(std::string("checkpoint contents: ") + e.what());
  }
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return deserialize_checkpoint(bytes);
}

}  // namespace promptopt
