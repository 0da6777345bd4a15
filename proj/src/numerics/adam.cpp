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

#include "promptopt/adam.hpp"

#include <cmath>

#include "promptopt/errors.hpp"

namespace promptopt {

void Adam::step(Tensor2& param, const Tensor2& grad) {
  if (param.rows() != m_.rows() || param.cols() != m_.cols() ||
      grad.rows() != m_.rows() || grad.cols() != m_.cols()) {
    throw ShapeError("adam: parameter " + param.shape_string() + " / gradient " +
                     grad.shape_string() + " do not match state " + m_.shape_string());
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto p = param.data();
  auto g = grad.data();
  auto m = m_.data();
  auto v = v_.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
    v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.eps);
  }
}

}  // namespace promptopt
