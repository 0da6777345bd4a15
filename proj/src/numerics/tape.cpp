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

#include "promptopt/tape.hpp"

#include <algorithm>
#include <cmath>

#include "promptopt/errors.hpp"

namespace promptopt {

const Tensor2& Var::value() const {
  if (!tape_) throw UsageError("value() on an unbound Var");
  return tape_->value(*this);
}

bool Var::requires_grad() const {
  return tape_ != nullptr && tape_->requires_grad(*this);
}

Var Tape::leaf(Tensor2 value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  Var v(this, nodes_.size() - 1);
  leaves_.push_back(v);
  return v;
}

Var Tape::constant(const Tensor2& external) {
  Node n;
  n.external = &external;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant_value(Tensor2 value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor2 value, std::initializer_list<Var> parents,
                 BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(fn));
}

Var Tape::record(Tensor2 value, std::span<const Var> parents, BackwardFn fn) {
  bool needs = false;
  for (const Var& p : parents) {
    check(p);
    needs = needs || nodes_[p.id()].requires_grad;
  }
  Node n;
  n.owned = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::check(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw UsageError("variable does not belong to this tape");
  }
}

const Tensor2& Tape::value(Var v) const {
  check(v);
  return nodes_[v.id()].value();
}

bool Tape::requires_grad(Var v) const {
  check(v);
  return nodes_[v.id()].requires_grad;
}

bool Tape::is_leaf(Var v) const {
  check(v);
  return nodes_[v.id()].is_leaf;
}

Tensor2* Tape::grad_slot(Var v) {
  check(v);
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    const Tensor2& val = n.value();
    n.grad = Tensor2(val.rows(), val.cols());
    n.has_grad = true;
  }
  return &n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this || loss.id() >= nodes_.size()) {
    throw UsageError("loss is not recorded on this tape");
  }
  const Tensor2& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw UsageError("loss must be a scalar, got " + lv.shape_string());
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor2();
  }
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Tensor2(1, 1, 1.0);
  nodes_[loss.id()].has_grad = true;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    // Copy: closures may allocate parent slots but never touch this node.
    const Tensor2 g = n.grad;
    n.backward(*this, n.value(), g);
  }
}

Tensor2 Tape::grad(Var leaf) const {
  check(leaf);
  const Node& n = nodes_[leaf.id()];
  if (!n.is_leaf) throw UsageError("gradient requested for a non-leaf variable");
  if (!n.has_grad) return Tensor2(n.value().rows(), n.value().cols());
  return n.grad;
}

namespace ad {

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) {
    throw UsageError("operands recorded on different tapes");
  }
}

void accumulate(Tensor2& dst, const Tensor2& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

Var add(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor2& av = a.value();
  const Tensor2& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
    throw ShapeError("add shape mismatch: " + av.shape_string() + " + " +
                     bv.shape_string());
  }
  Tensor2 out = av;
  accumulate(out, bv);
  return a.tape()->record(std::move(out), {a, b},
                          [a, b](Tape& t, const Tensor2&, const Tensor2& g) {
                            if (auto* ga = t.grad_slot(a)) accumulate(*ga, g);
                            if (auto* gb = t.grad_slot(b)) accumulate(*gb, g);
                          });
}

Var add_row(Var x, Var row) {
  require_same_tape(x, row);
  const Tensor2& xv = x.value();
  const Tensor2& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != xv.cols()) {
    throw ShapeError("add_row: row " + rv.shape_string() +
                     " does not broadcast over " + xv.shape_string());
  }
  Tensor2 out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto o = out.row(r);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += rv(0, j);
  }
  return x.tape()->record(std::move(out), {x, row},
                          [x, row](Tape& t, const Tensor2&, const Tensor2& g) {
                            if (auto* gx = t.grad_slot(x)) accumulate(*gx, g);
                            if (auto* gr = t.grad_slot(row)) {
                              for (std::size_t r = 0; r < g.rows(); ++r)
                                for (std::size_t j = 0; j < g.cols(); ++j)
                                  (*gr)(0, j) += g(r, j);
                            }
                          });
}

Var scale(Var x, double s) {
  Tensor2 out = x.value();
  for (double& v : out.data()) v *= s;
  return x.tape()->record(std::move(out), {x}, [x, s](Tape& t, const Tensor2&, const Tensor2& g) {
    if (auto* gx = t.grad_slot(x)) {
      auto d = gx->data();
      auto gs = g.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gs[i] * s;
    }
  });
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  return a.tape()->record(promptopt::matmul(a.value(), b.value()), {a, b},
                          [a, b](Tape& t, const Tensor2&, const Tensor2& g) {
                            if (auto* ga = t.grad_slot(a))
                              accumulate(*ga, matmul_bt(g, b.value()));
                            if (auto* gb = t.grad_slot(b))
                              accumulate(*gb, matmul_at(a.value(), g));
                          });
}

Var matmul_bt(Var a, Var b) {
  require_same_tape(a, b);
  return a.tape()->record(promptopt::matmul_bt(a.value(), b.value()), {a, b},
                          [a, b](Tape& t, const Tensor2&, const Tensor2& g) {
                            // out = a b^T: da = g b, db = g^T a
                            if (auto* ga = t.grad_slot(a))
                              accumulate(*ga, promptopt::matmul(g, b.value()));
                            if (auto* gb = t.grad_slot(b))
                              accumulate(*gb, matmul_at(g, a.value()));
                          });
}

Var gelu(Var x) {
  Tensor2 out = x.value();
  for (double& v : out.data()) v = promptopt::gelu(v);
  return x.tape()->record(std::move(out), {x}, [x](Tape& t, const Tensor2&, const Tensor2& g) {
    if (auto* gx = t.grad_slot(x)) {
      auto in = x.value().data();
      auto d = gx->data();
      auto gs = g.data();
      for (std::size_t i = 0; i < d.size(); ++i)
        d[i] += gs[i] * gelu_derivative(in[i]);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require_same_tape(x, gain);
  require_same_tape(x, bias);
  Tensor2 out = promptopt::layer_norm(x.value(), gain.value(), bias.value(), eps);
  return x.tape()->record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, eps](Tape& t, const Tensor2&, const Tensor2& g) {
        const Tensor2& xv = x.value();
        const Tensor2& gv = gain.value();
        const std::size_t d = xv.cols();
        Tensor2* gx = t.grad_slot(x);
        Tensor2* gg = t.grad_slot(gain);
        Tensor2* gb = t.grad_slot(bias);
        std::vector<double> xhat(d), dxhat(d);
        for (std::size_t r = 0; r < xv.rows(); ++r) {
          auto in = xv.row(r);
          double mean = 0.0;
          for (double v : in) mean += v;
          mean /= static_cast<double>(d);
          double var = 0.0;
          for (double v : in) var += (v - mean) * (v - mean);
          var /= static_cast<double>(d);
          const double inv = 1.0 / std::sqrt(var + eps);
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            xhat[j] = (in[j] - mean) * inv;
            dxhat[j] = g(r, j) * gv(0, j);
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xhat[j];
          }
          mean_dxhat /= static_cast<double>(d);
          mean_dxhat_xhat /= static_cast<double>(d);
          if (gx) {
            for (std::size_t j = 0; j < d; ++j)
              (*gx)(r, j) += inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
          }
          if (gg)
            for (std::size_t j = 0; j < d; ++j) (*gg)(0, j) += g(r, j) * xhat[j];
          if (gb)
            for (std::size_t j = 0; j < d; ++j) (*gb)(0, j) += g(r, j);
        }
      });
}

namespace {

// Softmax backward for row-stochastic output y: dx = y * (g - <g, y>).
void softmax_backward(const Tensor2& y, const Tensor2& g, Tensor2& gx) {
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double dot = 0.0;
    for (std::size_t j = 0; j < y.cols(); ++j) dot += g(r, j) * y(r, j);
    for (std::size_t j = 0; j < y.cols(); ++j) gx(r, j) += y(r, j) * (g(r, j) - dot);
  }
}

}  // namespace

Var softmax_rows(Var x) {
  return x.tape()->record(promptopt::softmax_rows(x.value()), {x},
                          [x](Tape& t, const Tensor2& y, const Tensor2& g) {
                            if (auto* gx = t.grad_slot(x)) softmax_backward(y, g, *gx);
                          });
}

Var causal_softmax(Var scores) {
  const Tensor2& sv = scores.value();
  if (sv.rows() != sv.cols()) {
    throw ShapeError("causal_softmax needs a square matrix, got " + sv.shape_string());
  }
  const std::size_t n = sv.rows();
  Tensor2 out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = sv(i, 0);
    for (std::size_t j = 1; j <= i; ++j) mx = std::max(mx, sv(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      out(i, j) = std::exp(sv(i, j) - mx);
      sum += out(i, j);
    }
    for (std::size_t j = 0; j <= i; ++j) out(i, j) /= sum;
  }
  // Masked entries are exactly zero in y, so the unmasked backward formula
  // leaves them with zero gradient.
  return scores.tape()->record(std::move(out), {scores},
                               [scores](Tape& t, const Tensor2& y, const Tensor2& g) {
                                 if (auto* gs = t.grad_slot(scores))
                                   softmax_backward(y, g, *gs);
                               });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const Tensor2& xv = x.value();
  if (begin + count > xv.rows()) {
    throw ShapeError("slice_rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of " + xv.shape_string());
  }
  Tensor2 out(count, xv.cols());
  std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>(begin * xv.cols()),
              count * xv.cols(), out.data().begin());
  return x.tape()->record(std::move(out), {x},
                          [x, begin](Tape& t, const Tensor2&, const Tensor2& g) {
                            if (auto* gx = t.grad_slot(x)) {
                              for (std::size_t r = 0; r < g.rows(); ++r)
                                for (std::size_t j = 0; j < g.cols(); ++j)
                                  (*gx)(begin + r, j) += g(r, j);
                            }
                          });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Tensor2& xv = x.value();
  if (begin + count > xv.cols()) {
    throw ShapeError("slice_cols [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of " + xv.shape_string());
  }
  Tensor2 out(xv.rows(), count);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t j = 0; j < count; ++j) out(r, j) = xv(r, begin + j);
  return x.tape()->record(std::move(out), {x},
                          [x, begin](Tape& t, const Tensor2&, const Tensor2& g) {
                            if (auto* gx = t.grad_slot(x)) {
                              for (std::size_t r = 0; r < g.rows(); ++r)
                                for (std::size_t j = 0; j < g.cols(); ++j)
                                  (*gx)(r, begin + j) += g(r, j);
                            }
                          });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_rows of nothing");
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p);
    if (p.value().cols() != cols) {
      throw ShapeError("concat_rows column mismatch: " + p.value().shape_string());
    }
    rows += p.value().rows();
  }
  Tensor2 out(rows, cols);
  std::size_t at = 0;
  for (const Var& p : parts) {
    const auto src = p.value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(at));
    at += src.size();
  }
  std::vector<Var> kept(parts.begin(), parts.end());
  return parts[0].tape()->record(std::move(out), parts,
                                 [kept](Tape& t, const Tensor2&, const Tensor2& g) {
                                   std::size_t row = 0;
                                   for (const Var& p : kept) {
                                     const std::size_t n = p.value().rows();
                                     if (auto* gp = t.grad_slot(p)) {
                                       for (std::size_t r = 0; r < n; ++r)
                                         for (std::size_t j = 0; j < g.cols(); ++j)
                                           (*gp)(r, j) += g(row + r, j);
                                     }
                                     row += n;
                                   }
                                 });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_cols of nothing");
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p);
    if (p.value().rows() != rows) {
      throw ShapeError("concat_cols row mismatch: " + p.value().shape_string());
    }
    cols += p.value().cols();
  }
  Tensor2 out(rows, cols);
  std::size_t at = 0;
  for (const Var& p : parts) {
    const Tensor2& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < pv.cols(); ++j) out(r, at + j) = pv(r, j);
    at += pv.cols();
  }
  std::vector<Var> kept(parts.begin(), parts.end());
  return parts[0].tape()->record(std::move(out), parts,
                                 [kept](Tape& t, const Tensor2&, const Tensor2& g) {
                                   std::size_t col = 0;
                                   for (const Var& p : kept) {
                                     const std::size_t n = p.value().cols();
                                     if (auto* gp = t.grad_slot(p)) {
                                       for (std::size_t r = 0; r < g.rows(); ++r)
                                         for (std::size_t j = 0; j < n; ++j)
                                           (*gp)(r, j) += g(r, col + j);
                                     }
                                     col += n;
                                   }
                                 });
}

Var gather_rows(Var table, std::span<const int> ids) {
  const Tensor2& tv = table.value();
  Tensor2 out(ids.size(), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const int id = ids[r];
    if (id < 0 || static_cast<std::size_t>(id) >= tv.rows()) {
      throw IndexError("row id " + std::to_string(id) + " out of table " +
                       tv.shape_string());
    }
    auto src = tv.row(static_cast<std::size_t>(id));
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  std::vector<int> kept(ids.begin(), ids.end());
  return table.tape()->record(std::move(out), {table},
                              [table, kept](Tape& t, const Tensor2&, const Tensor2& g) {
                                if (auto* gt = t.grad_slot(table)) {
                                  for (std::size_t r = 0; r < kept.size(); ++r)
                                    for (std::size_t j = 0; j < g.cols(); ++j)
                                      (*gt)(static_cast<std::size_t>(kept[r]), j) += g(r, j);
                                }
                              });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.tape()->record(Tensor2(1, 1, total), {x},
                          [x](Tape& t, const Tensor2&, const Tensor2& g) {
                            if (auto* gx = t.grad_slot(x))
                              for (double& v : gx->data()) v += g(0, 0);
                          });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  const double loss = promptopt::cross_entropy(logits.value(), targets);
  std::vector<int> kept(targets.begin(), targets.end());
  return logits.tape()->record(
      Tensor2(1, 1, loss), {logits},
      [logits, kept](Tape& t, const Tensor2&, const Tensor2& g) {
        if (auto* gl = t.grad_slot(logits)) {
          const Tensor2 p = promptopt::softmax_rows(logits.value());
          const double s = g(0, 0);
          for (std::size_t r = 0; r < p.rows(); ++r) {
            for (std::size_t j = 0; j < p.cols(); ++j) {
              const double onehot = static_cast<int>(j) == kept[r] ? 1.0 : 0.0;
              (*gl)(r, j) += s * (p(r, j) - onehot);
            }
          }
        }
      });
}

}  // namespace ad
}  // namespace promptopt
