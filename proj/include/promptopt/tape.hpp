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

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "promptopt/tensor.hpp"

namespace promptopt {

class Tape;

// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  const Tensor2& value() const;
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode differentiation tape.
//
// Only leaves registered through leaf() accumulate gradients. Constants
// (frozen weights, inputs) are held by reference or by value and never
// receive a gradient; operations whose inputs are all constants record no
// backward closure at all.
class Tape {
 public:
  // Receives the node's own value and the gradient flowing into it.
  using BackwardFn =
      std::function<void(Tape&, const Tensor2& out, const Tensor2& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor2 value);
  // `external` must outlive the tape.
  Var constant(const Tensor2& external);
  Var constant_value(Tensor2 value);

  Var record(Tensor2 value, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(Tensor2 value, std::span<const Var> parents, BackwardFn fn);

  const Tensor2& value(Var v) const;
  bool requires_grad(Var v) const;
  bool is_leaf(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Var>& leaves() const { return leaves_; }

  // Seeds d(loss)/d(loss) = 1 and replays recorded closures in exact
  // reverse execution order. `loss` must be a 1x1 node of this tape.
  void backward(Var loss);

  // Gradient of a registered leaf; zeros if the loss did not depend on it.
  Tensor2 grad(Var leaf) const;

  // Used by backward closures. Returns nullptr when `v` needs no gradient.
  Tensor2* grad_slot(Var v);

 private:
  struct Node {
    Tensor2 owned;
    const Tensor2* external = nullptr;
    Tensor2 grad;
    bool has_grad = false;
    bool requires_grad = false;
    bool is_leaf = false;
    BackwardFn backward;

    const Tensor2& value() const { return external ? *external : owned; }
  };

  void check(Var v) const;

  // deque: values stay at stable addresses while the tape grows.
  std::deque<Node> nodes_;
  std::vector<Var> leaves_;
};

// Differentiable operations. Each returns a node on the tape of its first
// argument.
namespace ad {

Var add(Var a, Var b);
// x (r x c) plus a 1 x c row broadcast over rows.
Var add_row(Var x, Var row);
Var scale(Var x, double s);
Var matmul(Var a, Var b);
// a * b^T
Var matmul_bt(Var a, Var b);
Var gelu(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps = kLayerNormEps);
Var softmax_rows(Var x);
// Row-wise softmax of a square score matrix with entries above the
// diagonal masked out.
Var causal_softmax(Var scores);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
// Rows of `table` selected by `ids`.
Var gather_rows(Var table, std::span<const int> ids);
Var sum(Var x);
// 1x1 node holding the summed per-row cross-entropy.
Var cross_entropy(Var logits, std::span<const int> targets);

}  // namespace ad

}  // namespace promptopt
