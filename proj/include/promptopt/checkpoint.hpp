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

#include "promptopt/model.hpp"

namespace promptopt {

// Checkpoint file layout:
//   8 bytes  magic "POCKPT\0\1"
//   u32      format version
//   u64      header length, then the header as JSON (config, vocabulary,
//            declared tensor list)
//   f64[]    every weight tensor, little-endian, in declared order
//   32 bytes SHA-256 of header bytes followed by weight bytes
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_checkpoint(const ModelCheckpoint& ckpt);

// Throws ParseError (malformed or truncated), VersionError, IntegrityError.
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);
ModelCheckpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace promptopt
