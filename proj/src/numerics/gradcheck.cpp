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

#include "promptopt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "promptopt/errors.hpp"

namespace promptopt {

Tensor2 finite_diff_grad(const std::function<double(const Tensor2&)>& f,
                         const Tensor2& x, double h) {
  if (!(h > 0.0)) throw ParameterError("finite difference step must be positive");
  Tensor2 grad(x.rows(), x.cols());
  Tensor2 probe = x;
  auto pd = probe.data();
  auto gd = grad.data();
  for (std::size_t i = 0; i < pd.size(); ++i) {
    const double orig = pd[i];
    pd[i] = orig + h;
    const double plus = f(probe);
    pd[i] = orig - h;
    const double minus = f(probe);
    pd[i] = orig;
    gd[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(const Tensor2& a, const Tensor2& b, double floor) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("max_relative_error shape mismatch: " + a.shape_string() +
                     " vs " + b.shape_string());
  }
  double worst = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) {
    const double denom = std::max({std::abs(ad[i]), std::abs(bd[i]), floor});
    worst = std::max(worst, std::abs(ad[i] - bd[i]) / denom);
  }
  return worst;
}

double difference_quotient_resolution(double f, double h) {
  const double m = std::abs(f);
  return (std::nextafter(m, std::numeric_limits<double>::infinity()) - m) / (2.0 * h);
}

double roundoff_floor(double f, double h, double tolerance, double ulps) {
  if (!(h > 0.0) || !(tolerance > 0.0)) throw ParameterError("roundoff_floor needs h, tolerance > 0");
  return ulps * difference_quotient_resolution(f, h) / tolerance;
}

}  // namespace promptopt
