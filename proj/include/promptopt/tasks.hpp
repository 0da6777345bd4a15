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

#include <cstdint>
#include <string>
#include <vector>

#include "promptopt/dataset.hpp"

namespace promptopt::tasks {

// Shared character alphabet of the bundled tasks.
std::string alphabet();

struct TaskBundle {
  std::string name;
  std::string prompt;                 // the natural-language prompt to optimize
  std::vector<std::string> corpus;    // base-model pretraining documents
  std::vector<TextExample> train;
  std::vector<TextExample> test;
  std::vector<std::string> stimuli_a; // probe stimuli, target condition
  std::vector<std::string> stimuli_b; // probe stimuli, contrast condition
  std::string matcher;                // "exact" or "delimiter:<marker>"
};

struct TaskSizes {
  std::size_t corpus = 3000;
  std::size_t train = 200;
  std::size_t test = 60;
  std::size_t stimuli = 16;
};

// Reviews built from neutral filler plus one polar word; label "pos"/"neg".
// The pretraining corpus teaches the labeling convention only under the
// "review:" instruction (and its inverse under "flip:"); the task prompt
// never appears in it.
TaskBundle sentiment_toy(std::uint64_t seed, const TaskSizes& sizes = {});

// Single-digit addition with the answer after a '#' marker.
TaskBundle arith_toy(std::uint64_t seed, const TaskSizes& sizes = {});

TaskBundle make_task(const std::string& name, std::uint64_t seed, const TaskSizes& sizes = {});

}  // namespace promptopt::tasks
