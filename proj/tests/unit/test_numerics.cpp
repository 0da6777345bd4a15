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

#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "promptopt/adam.hpp"
#include "promptopt/errors.hpp"
#include "promptopt/gradcheck.hpp"
#include "promptopt/hash.hpp"
#include "promptopt/tape.hpp"
#include "promptopt/tensor.hpp"
#include "test_util.hpp"

namespace promptopt {
namespace {

using testing::random_tensor;

TEST(Matmul, IdentityTimesMatrix) {
  const Tensor2 a{{1, 2}, {3, 4}};
  EXPECT_EQ(matmul(Tensor2::identity(2), a), a);
}

TEST(Matmul, RowTimesColumn) {
  const Tensor2 r = matmul(Tensor2{{1, 2}}, Tensor2{{3}, {4}});
  ASSERT_EQ(r.rows(), 1u);
  ASSERT_EQ(r.cols(), 1u);
  EXPECT_EQ(r(0, 0), 11.0);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    matmul(Tensor2(3, 5), Tensor2(4, 2));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("3x5"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4x2"), std::string::npos) << msg;
  }
}

TEST(Matmul, IdentityIsExactOnBothSides) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 9, m = 1 + rng() % 9;
    const Tensor2 a = random_tensor(n, m, rng, 10.0);
    EXPECT_EQ(matmul(Tensor2::identity(n), a), a);
    EXPECT_EQ(matmul(a, Tensor2::identity(m)), a);
  }
}

TEST(Matmul, TransposedVariantsAgreeWithExplicitTranspose) {
  std::mt19937_64 rng(8);
  const Tensor2 a = random_tensor(5, 3, rng), b = random_tensor(4, 3, rng),
                c = random_tensor(5, 6, rng);
  const Tensor2 bt = matmul_bt(a, b), ref_bt = matmul(a, transpose(b));
  const Tensor2 at = matmul_at(a, c), ref_at = matmul(transpose(a), c);
  EXPECT_EQ(bt, ref_bt);
  EXPECT_EQ(at, ref_at);
}

TEST(Matmul, BlockedKernelMatchesNaiveTripleLoop) {
  std::mt19937_64 rng(9);
  for (std::size_t n : {1u, 3u, 4u, 7u, 9u}) {
    const Tensor2 a = random_tensor(n, 6, rng), b = random_tensor(6, 5, rng);
    Tensor2 naive(n, 5);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < 6; ++k)
        for (std::size_t j = 0; j < 5; ++j) naive(i, j) += a(i, k) * b(k, j);
    EXPECT_EQ(matmul(a, b), naive);
  }
}

TEST(Softmax, SymmetricRow) {
  const Tensor2 s = softmax_rows(Tensor2{{0, 0}});
  EXPECT_DOUBLE_EQ(s(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s(0, 1), 0.5);
}

TEST(Softmax, LargeLogitDoesNotOverflow) {
  const Tensor2 s = softmax_rows(Tensor2{{1000, 0}});
  EXPECT_TRUE(s.all_finite());
  EXPECT_NEAR(s(0, 0), 1.0, 1e-300);
  EXPECT_NEAR(s(0, 1), 0.0, 1e-300);
}

TEST(Softmax, LogRatio) {
  const Tensor2 s = softmax_rows(Tensor2{{std::log(1.0), std::log(3.0)}});
  EXPECT_NEAR(s(0, 0), 0.25, 1e-15);
  EXPECT_NEAR(s(0, 1), 0.75, 1e-15);
}

TEST(Softmax, RowsSumToOneProperty) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const double scale = std::pow(10.0, static_cast<double>(rng() % 6) - 2.0);
    const Tensor2 x = random_tensor(1 + rng() % 6, 1 + rng() % 40, rng, scale);
    const Tensor2 s = softmax_rows(x);
    for (std::size_t r = 0; r < s.rows(); ++r) {
      double sum = 0.0;
      for (double v : s.row(r)) {
        EXPECT_GE(v, 0.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(LayerNorm, ConstantRowBecomesZero) {
  const Tensor2 y = layer_norm(Tensor2{{3, 3, 3, 3}}, Tensor2(1, 4, 1.0), Tensor2(1, 4));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, AlreadyNormalizedRow) {
  const Tensor2 y = layer_norm(Tensor2{{1, -1}}, Tensor2(1, 2, 1.0), Tensor2(1, 2), 1e-15);
  EXPECT_NEAR(y(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(y(0, 1), -1.0, 1e-12);
}

TEST(LayerNorm, ZeroGainLeavesBias) {
  const Tensor2 y = layer_norm(Tensor2{{1, 7, -2}}, Tensor2(1, 3), Tensor2(1, 3, 5.0));
  for (double v : y.data()) EXPECT_EQ(v, 5.0);
}

TEST(LayerNorm, NonPositiveEpsIsRejected) {
  EXPECT_THROW(layer_norm(Tensor2{{1, 2}}, Tensor2(1, 2, 1.0), Tensor2(1, 2), 0.0),
               ParameterError);
  EXPECT_THROW(layer_norm(Tensor2{{1, 2}}, Tensor2(1, 2, 1.0), Tensor2(1, 2), -1.0),
               ParameterError);
}

TEST(CrossEntropy, UniformLogits) {
  const Tensor2 logits(1, 8);
  const int target[] = {5};
  EXPECT_NEAR(cross_entropy(logits, target), std::log(8.0), 1e-14);
}

TEST(CrossEntropy, ConfidentCorrectIsNearZero) {
  Tensor2 logits(1, 4);
  logits(0, 2) = 1000.0;
  const int target[] = {2};
  EXPECT_NEAR(cross_entropy(logits, target), 0.0, 1e-12);
}

TEST(CrossEntropy, SumsOverPositions) {
  const Tensor2 logits(2, 4);
  const int targets[] = {0, 3};
  EXPECT_NEAR(cross_entropy(logits, targets), 2.0 * std::log(4.0), 1e-14);
}

TEST(CrossEntropy, TargetOutOfVocabulary) {
  const int bad[] = {4};
  EXPECT_THROW(cross_entropy(Tensor2(1, 4), bad), IndexError);
  const int negative[] = {-1};
  EXPECT_THROW(cross_entropy(Tensor2(1, 4), negative), IndexError);
}

TEST(CrossEntropy, NonNegativeProperty) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor2 logits = random_tensor(3, 10, rng, 5.0);
    const int targets[] = {static_cast<int>(rng() % 10), static_cast<int>(rng() % 10),
                           static_cast<int>(rng() % 10)};
    EXPECT_GE(cross_entropy(logits, targets), 0.0);
  }
}

TEST(Kernels, BitReproducible) {
  std::mt19937_64 rng(13);
  const Tensor2 a = random_tensor(7, 9, rng), b = random_tensor(9, 5, rng);
  EXPECT_EQ(matmul(a, b), matmul(a, b));
  EXPECT_EQ(softmax_rows(a), softmax_rows(a));
  const Tensor2 g = random_tensor(1, 9, rng), bias = random_tensor(1, 9, rng);
  EXPECT_EQ(layer_norm(a, g, bias), layer_norm(a, g, bias));
}

TEST(Argmax, LowestIndexWinsTies) {
  const double row[] = {0.1, 0.4, 0.4, 0.1};
  EXPECT_EQ(argmax(row), 1u);
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  Var x = tape.leaf(Tensor2{{1, 2, 3}, {4, 5, 6}});
  tape.backward(ad::sum(x));
  const Tensor2 g = tape.grad(x);
  for (double v : g.data()) EXPECT_EQ(v, 1.0);
}

TEST(Backward, SoftmaxCrossEntropyGradientIsPMinusOneHot) {
  Tape tape;
  const Tensor2 z{{0.3, -1.2, 2.0, 0.5}};
  Var logits = tape.leaf(z);
  const int target[] = {1};
  tape.backward(ad::cross_entropy(logits, target));
  const Tensor2 p = softmax_rows(z);
  const Tensor2 g = tape.grad(logits);
  for (std::size_t j = 0; j < 4; ++j)
    EXPECT_NEAR(g(0, j), p(0, j) - (j == 1 ? 1.0 : 0.0), 1e-15);
}

TEST(Backward, LossNotOnTapeIsUsageError) {
  Tape a, b;
  Var x = a.leaf(Tensor2(1, 1, 2.0));
  Var loss = ad::sum(x);
  EXPECT_THROW(b.backward(loss), UsageError);
  EXPECT_THROW(b.backward(Var{}), UsageError);
}

TEST(Backward, NonScalarLossIsUsageError) {
  Tape tape;
  Var x = tape.leaf(Tensor2(2, 2, 1.0));
  EXPECT_THROW(tape.backward(ad::scale(x, 2.0)), UsageError);
}

TEST(Backward, ConstantsReceiveNoGradient) {
  Tape tape;
  const Tensor2 w{{1, 2}, {3, 4}};
  Var frozen = tape.constant(w);
  Var x = tape.leaf(Tensor2{{1, 1}});
  Var y = ad::matmul(x, frozen);
  EXPECT_FALSE(frozen.requires_grad());
  EXPECT_TRUE(y.requires_grad());
  tape.backward(ad::sum(y));
  EXPECT_EQ(tape.grad_slot(frozen), nullptr);
  EXPECT_THROW(tape.grad(frozen), UsageError);
  EXPECT_EQ(tape.grad(x), (Tensor2{{3, 7}}));
  EXPECT_EQ(tape.leaves().size(), 1u);
}

TEST(Backward, VisitsOperationsInReverseOrder) {
  Tape tape;
  std::vector<int> visited;
  Var x = tape.leaf(Tensor2(1, 1, 1.0));
  Var cur = x;
  for (int i = 0; i < 5; ++i) {
    Tensor2 v = cur.value();
    cur = tape.record(std::move(v), {cur},
                      [i, &visited, prev = cur](Tape& t, const Tensor2&, const Tensor2& g) {
                        visited.push_back(i);
                        if (auto* gp = t.grad_slot(prev)) (*gp)(0, 0) += g(0, 0);
                      });
  }
  tape.backward(cur);
  EXPECT_EQ(visited, (std::vector<int>{4, 3, 2, 1, 0}));
  EXPECT_EQ(tape.grad(x)(0, 0), 1.0);
}

// Two-layer toy network: softmax cross-entropy of gelu(LN(x W1 + b1)) W2.
double toy_loss(const Tensor2& x, const Tensor2& w1, const Tensor2& b1, const Tensor2& g,
                const Tensor2& beta, const Tensor2& w2, std::span<const int> targets,
                Tensor2* grad_x) {
  Tape tape;
  Var vx = tape.leaf(x);
  Var h = ad::add_row(ad::matmul(vx, tape.constant(w1)), tape.constant(b1));
  h = ad::gelu(ad::layer_norm(h, tape.constant(g), tape.constant(beta)));
  Var scores = ad::causal_softmax(ad::matmul_bt(h, h));
  h = ad::add(h, ad::matmul(scores, h));
  Var logits = ad::matmul(h, tape.constant(w2));
  Var loss = ad::cross_entropy(logits, targets);
  if (grad_x) {
    tape.backward(loss);
    *grad_x = tape.grad(vx);
  }
  return loss.value()(0, 0);
}

TEST(Backward, ToyGraphMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const Tensor2 x = random_tensor(4, 5, rng), w1 = random_tensor(5, 6, rng, 0.5),
                  b1 = random_tensor(1, 6, rng), g = random_tensor(1, 6, rng),
                  beta = random_tensor(1, 6, rng), w2 = random_tensor(6, 7, rng, 0.5);
    const int targets[] = {1, 6, 0, 3};
    Tensor2 analytic;
    toy_loss(x, w1, b1, g, beta, w2, targets, &analytic);
    const Tensor2 numeric = finite_diff_grad(
        [&](const Tensor2& xx) { return toy_loss(xx, w1, b1, g, beta, w2, targets, nullptr); },
        x, 1e-5);
    EXPECT_LT(max_relative_error(analytic, numeric), 1e-4) << "seed " << seed;
  }
}

TEST(Backward, EveryOpMatchesFiniteDifferencesOnAllInputs) {
  std::mt19937_64 rng(21);
  const Tensor2 a0 = random_tensor(3, 4, rng), b0 = random_tensor(4, 4, rng),
                r0 = random_tensor(1, 4, rng);
  const int ids[] = {2, 0, 2};
  const int targets[] = {1, 3, 0, 2, 2, 1};
  auto build = [&](const Tensor2& a, const Tensor2& b, const Tensor2& r, Tape& t, Var* va,
                   Var* vb, Var* vr) {
    *va = t.leaf(a);
    *vb = t.leaf(b);
    *vr = t.leaf(r);
    Var x = ad::layer_norm(*va, *vr, ad::slice_rows(*vb, 1, 1));
    Var y = ad::matmul(x, *vb);
    Var z = ad::softmax_rows(ad::scale(y, 0.7));
    Var picked = ad::gather_rows(*vb, ids);
    Var stacked_parts[] = {ad::add(z, picked), ad::slice_cols(ad::concat_cols(std::vector<Var>{x, y}), 2, 4)};
    Var stacked = ad::concat_rows(stacked_parts);
    return ad::cross_entropy(ad::add_row(stacked, *vr), targets);
  };
  Tape tape;
  Var va, vb, vr;
  Var loss = build(a0, b0, r0, tape, &va, &vb, &vr);
  tape.backward(loss);
  auto numeric_for = [&](int which) {
    const Tensor2& base = which == 0 ? a0 : which == 1 ? b0 : r0;
    return finite_diff_grad(
        [&](const Tensor2& v) {
          Tape t;
          Var x, y, z;
          return build(which == 0 ? v : a0, which == 1 ? v : b0, which == 2 ? v : r0, t, &x,
                       &y, &z)
              .value()(0, 0);
        },
        base, 1e-5);
  };
  EXPECT_LT(max_relative_error(tape.grad(va), numeric_for(0)), 1e-4);
  EXPECT_LT(max_relative_error(tape.grad(vb), numeric_for(1)), 1e-4);
  EXPECT_LT(max_relative_error(tape.grad(vr), numeric_for(2)), 1e-4);
}

TEST(FiniteDiff, SumOfSquares) {
  const Tensor2 g = finite_diff_grad(
      [](const Tensor2& x) {
        double s = 0.0;
        for (double v : x.data()) s += v * v;
        return s;
      },
      Tensor2{{1, 2}}, 1e-5);
  EXPECT_NEAR(g(0, 0), 2.0, 1e-6);
  EXPECT_NEAR(g(0, 1), 4.0, 1e-6);
}

TEST(FiniteDiff, ConstantFunction) {
  const Tensor2 g = finite_diff_grad([](const Tensor2&) { return 3.5; }, Tensor2(2, 3, 1.0));
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(FiniteDiff, RejectsNonPositiveStep) {
  EXPECT_THROW(finite_diff_grad([](const Tensor2&) { return 0.0; }, Tensor2(1, 1), 0.0),
               ParameterError);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
  Adam adam(1, 3, AdamConfig{0.1});
  Tensor2 p{{1.0, 1.0, 1.0}};
  adam.step(p, Tensor2{{2.0, -0.5, 0.0}});
  // After bias correction the first step is lr * g / (|g| + eps).
  EXPECT_NEAR(p(0, 0), 1.0 - 0.1 * 2.0 / (2.0 + 1e-8), 1e-14);
  EXPECT_NEAR(p(0, 1), 1.0 + 0.1 * 0.5 / (0.5 + 1e-8), 1e-14);
  EXPECT_EQ(p(0, 2), 1.0);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Sha256, KnownVector) {
  const std::string abc = "abc";
  const Digest d = sha256({reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()});
  EXPECT_EQ(to_hex(d), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(digest_from_hex(to_hex(d)), d);
}

}  // namespace
}  // namespace promptopt
