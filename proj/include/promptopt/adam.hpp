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

#include "promptopt/tensor.hpp"

namespace promptopt {

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam state for one parameter tensor.
class Adam {
 public:
  Adam(std::size_t rows, std::size_t cols, AdamConfig cfg = {})
      : cfg_(cfg), m_(rows, cols), v_(rows, cols) {}

  void step(Tensor2& param, const Tensor2& grad);
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }
  std::int64_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  Tensor2 m_;
  Tensor2 v_;
  std::int64_t t_ = 0;
};

}  // namespace promptopt
