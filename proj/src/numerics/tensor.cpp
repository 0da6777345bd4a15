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

#include "promptopt/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "promptopt/errors.hpp"

namespace promptopt {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string());
  }
}

Tensor2::Tensor2(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Tensor2 Tensor2::identity(std::size_t n) {
  Tensor2 t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

bool Tensor2::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

std::string Tensor2::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

namespace {

// out[i, :] = sum_k a[i, k] * b[k, :], accumulated in increasing k for every
// element. Four output rows share each pass over a row of b.
void gemm_rows(const double* __restrict a, const double* __restrict b, double* __restrict out, std::size_t n, std::size_t m,
               std::size_t p) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    double* o0 = out + i * p;
    double* o1 = o0 + p;
    double* o2 = o1 + p;
    double* o3 = o2 + p;
    const double* a0 = a + i * m;
    for (std::size_t k = 0; k < m; ++k) {
      const double x0 = a0[k], x1 = a0[m + k], x2 = a0[2 * m + k], x3 = a0[3 * m + k];
      const double* brow = b + k * p;
      for (std::size_t j = 0; j < p; ++j) {
        const double bj = brow[j];
        o0[j] += x0 * bj;
        o1[j] += x1 * bj;
        o2[j] += x2 * bj;
        o3[j] += x3 * bj;
      }
    }
  }
  for (; i < n; ++i) {
    double* orow = out + i * p;
    for (std::size_t k = 0; k < m; ++k) {
      const double aik = a[i * m + k];
      const double* brow = b + k * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
}

}  // namespace

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " + a.shape_string() + " * " +
                     b.shape_string());
  }
  Tensor2 out(a.rows(), b.cols());
  gemm_rows(a.data().data(), b.data().data(), out.data().data(), a.rows(), a.cols(), b.cols());
  return out;
}

Tensor2 matmul_bt(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_bt shape mismatch: " + a.shape_string() + " * (" +
                     b.shape_string() + ")^T");
  }
  return matmul(a, transpose(b));
}

Tensor2 matmul_at(const Tensor2& a, const Tensor2& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_at shape mismatch: (" + a.shape_string() +
                     ")^T * " + b.shape_string());
  }
  return matmul(transpose(a), b);
}

Tensor2 transpose(const Tensor2& a) {
  Tensor2 out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor2 softmax_rows(const Tensor2& x) {
  Tensor2 out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    if (in.empty()) continue;
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

std::vector<double> log_softmax(std::span<const double> row) {
  std::vector<double> out(row.size());
  if (row.empty()) return out;
  const double mx = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (double v : row) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t j = 0; j < row.size(); ++j) out[j] = row[j] - lse;
  return out;
}

Tensor2 layer_norm(const Tensor2& x, const Tensor2& gain, const Tensor2& bias,
                   double eps) {
  if (!(eps > 0.0)) throw ParameterError("layer_norm eps must be positive");
  if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 ||
      bias.cols() != x.cols()) {
    throw ShapeError("layer_norm gain/bias " + gain.shape_string() + ", " +
                     bias.shape_string() + " do not broadcast over " +
                     x.shape_string());
  }
  const std::size_t d = x.cols();
  Tensor2 out(x.rows(), d);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    auto o = out.row(r);
    for (std::size_t j = 0; j < d; ++j)
      o[j] = (in[j] - mean) * inv * gain(0, j) + bias(0, j);
  }
  return out;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

// tanh approximation
double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

double gelu_derivative(double x) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  const double t = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

double cross_entropy(const Tensor2& logits, std::span<const int> targets) {
  if (logits.rows() != targets.size()) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets for logits " + logits.shape_string());
  }
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= logits.cols()) {
      throw IndexError("target id " + std::to_string(t) +
                       " out of vocabulary of size " +
                       std::to_string(logits.cols()));
    }
    total -= log_softmax(logits.row(r))[static_cast<std::size_t>(t)];
  }
  return total;
}

std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

}  // namespace promptopt
