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

#include <functional>

#include "promptopt/tensor.hpp"

namespace promptopt {

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every entry.
Tensor2 finite_diff_grad(const std::function<double(const Tensor2&)>& f,
                         const Tensor2& x, double h = 1e-5);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). Shapes must match.
double max_relative_error(const Tensor2& a, const Tensor2& b, double floor = 1e-8);

// Smallest change a central difference can represent: one ulp of f over 2h.
double difference_quotient_resolution(double f, double h);

// Denominator floor for max_relative_error when the reference comes from
// central differences of f: entries so small that `ulps` units of rounding
// in f would already exceed `tolerance` are compared on that absolute scale.
double roundoff_floor(double f, double h, double tolerance, double ulps = 4.0);

}  // namespace promptopt
