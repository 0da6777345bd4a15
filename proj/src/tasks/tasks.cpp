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

#include "promptopt/tasks.hpp"

#include <random>

#include "promptopt/errors.hpp"

namespace promptopt::tasks {

std::string alphabet() { return "abcdefghijklmnopqrstuvwxyz .,:;?!'=>+#0123456789"; }

namespace {

template <typename T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& items) {
  return items[rng() % items.size()];
}

const std::vector<std::string> kPositive = {"good", "great", "fun", "nice", "superb", "lovely"};
const std::vector<std::string> kNegative = {"bad", "awful", "dull", "poor", "boring", "weak"};
const std::vector<std::string> kNouns = {"film", "plot", "cast", "story", "movie", "music"};

struct Review {
  std::string text;
  bool positive;
};

Review make_review(std::mt19937_64& rng) {
  const bool positive = rng() % 2 == 0;
  const std::string& adj = pick(rng, positive ? kPositive : kNegative);
  const std::string& noun = pick(rng, kNouns);
  std::string text;
  switch (rng() % 3) {
    case 0:
      text = "the " + noun + " was " + adj;
      break;
    case 1:
      text = "a " + adj + " " + noun;
      break;
    default:
      text = noun + " is " + adj;
      break;
  }
  return {text, positive};
}

const char* label(bool positive) { return positive ? "pos" : "neg"; }

}  // namespace

TaskBundle sentiment_toy(std::uint64_t seed, const TaskSizes& sizes) {
  TaskBundle b;
  b.name = "sentiment-toy";
  b.prompt = "is it positive or negative? ";
  b.matcher = "exact";
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < sizes.corpus; ++i) {
    const Review r = make_review(rng);
    switch (rng() % 10) {
      case 0: case 1: case 2: case 3:
        b.corpus.push_back("review: " + r.text + " => " + label(r.positive));
        break;
      case 4: case 5: case 6:
        b.corpus.push_back("flip: " + r.text + " => " + label(!r.positive));
        break;
      default:
        b.corpus.push_back(r.text + ".");
        break;
    }
  }
  std::mt19937_64 data_rng(seed + 1);
  for (std::size_t i = 0; i < sizes.train; ++i) {
    const Review r = make_review(data_rng);
    b.train.push_back({r.text + " => ", label(r.positive)});
  }
  std::mt19937_64 test_rng(seed + 2);
  for (std::size_t i = 0; i < sizes.test; ++i) {
    const Review r = make_review(test_rng);
    b.test.push_back({r.text + " => ", label(r.positive)});
  }
  std::mt19937_64 stim_rng(seed + 3);
  for (std::size_t i = 0; i < sizes.stimuli; ++i) {
    Review r = make_review(stim_rng);
    while (!r.positive) r = make_review(stim_rng);
    b.stimuli_a.push_back("review: " + r.text + " => pos");
    b.stimuli_b.push_back(r.text + ".");
  }
  return b;
}

TaskBundle arith_toy(std::uint64_t seed, const TaskSizes& sizes) {
  TaskBundle b;
  b.name = "arith-toy";
  b.prompt = "add them, put the final answer after #. ";
  b.matcher = "delimiter:#";
  std::mt19937_64 rng(seed);
  auto sum_text = [](int a, int c) { return std::to_string(a) + "+" + std::to_string(c); };
  for (std::size_t i = 0; i < sizes.corpus; ++i) {
    const int a = static_cast<int>(rng() % 10), c = static_cast<int>(rng() % 10);
    switch (rng() % 3) {
      case 0:
        b.corpus.push_back("sum: " + sum_text(a, c) + " # " + std::to_string(a + c));
        break;
      case 1:
        b.corpus.push_back(sum_text(a, c) + "=" + std::to_string(a + c));
        break;
      default:
        b.corpus.push_back("copy: " + sum_text(a, c) + " # " + sum_text(a, c));
        break;
    }
  }
  auto fill = [&](std::mt19937_64& r, std::size_t n, std::vector<TextExample>& out) {
    for (std::size_t i = 0; i < n; ++i) {
      const int a = static_cast<int>(r() % 10), c = static_cast<int>(r() % 10);
      out.push_back({sum_text(a, c) + " ", "# " + std::to_string(a + c)});
    }
  };
  std::mt19937_64 data_rng(seed + 1), test_rng(seed + 2), stim_rng(seed + 3);
  fill(data_rng, sizes.train, b.train);
  fill(test_rng, sizes.test, b.test);
  for (std::size_t i = 0; i < sizes.stimuli; ++i) {
    const int a = static_cast<int>(stim_rng() % 10), c = static_cast<int>(stim_rng() % 10);
    b.stimuli_a.push_back("sum: " + sum_text(a, c) + " # " + std::to_string(a + c));
    b.stimuli_b.push_back("copy: " + sum_text(a, c) + " # " + sum_text(a, c));
  }
  return b;
}

TaskBundle make_task(const std::string& name, std::uint64_t seed, const TaskSizes& sizes) {
  if (name == "sentiment-toy") return sentiment_toy(seed, sizes);
  if (name == "arith-toy") return arith_toy(seed, sizes);
  throw UsageError("unknown task '" + name + "' (expected sentiment-toy or arith-toy)");
}

}  // namespace promptopt::tasks
