// Copyright 2026 The ivusnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file
// except in compliance with the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License
// is distributed on an "AS IS" BASIS WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and limitations under the License.

#pragma once

// Define-by-run reverse-mode differentiation.
//
// A Tape records every operation of one forward pass as a node holding the
// output value and a closure that maps the node's gradient onto its parents.
// Nodes are appended in execution order, so the node list is a topological
// order and backward() is a single reverse sweep. A tape is single use: the
// closures are released once backward() has run.

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ivusnet/errors.hpp"
#include "ivusnet/tensor.hpp"

namespace ivus {

/// Trainable tensor with its accumulated gradient.
template <class T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  explicit Parameter(Tensor<T> v) : value(std::move(v)), grad(Tensor<T>::zeros(value.shape())) {}

  void zero_grad() { grad.fill(T{0}); }
};

template <class T>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const { return tape_->value(*this); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape_->requires_grad(*this); }
  /// Gradient after backward(); zeros if the node received none.
  Tensor<T> grad() const { return tape_->grad(*this); }

  Tape<T>* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <class T>
class Tape {
 public:
  /// Receives the gradient of the node's output and pushes it to the parents.
  using BackwardFn = std::function<void(Tape&, const Tensor<T>&)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Leaf that never receives a gradient.
  Var<T> constant(Tensor<T> v) { return push_leaf(std::move(v), false, nullptr); }

  /// Leaf whose gradient is kept on the tape (read it with Var::grad()).
  Var<T> variable(Tensor<T> v) { return push_leaf(std::move(v), grad_enabled_, nullptr); }

  /// Leaf bound to a parameter; backward() adds the node gradient into p.grad.
  Var<T> parameter(Parameter<T>& p) { return push_leaf(p.value, grad_enabled_, &p); }

  /// Appends an operation result. The closure is dropped when no parent needs a gradient.
  Var<T> record([[maybe_unused]] std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> parents,
                BackwardFn fn) {
#ifndef NDEBUG
    if (!value.all_finite())
      throw ContractError("non-finite value produced by " + std::string(op));
#endif
    bool needs = false;
    for (const auto& p : parents) {
      check_owned(p);
      needs = needs || nodes_[p.id()].requires_grad;
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = needs && grad_enabled_;
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  const Tensor<T>& value(const Var<T>& v) const {
    check_owned(v);
    return nodes_[v.id()].value;
  }

  bool requires_grad(const Var<T>& v) const {
    check_owned(v);
    return nodes_[v.id()].requires_grad;
  }

  Tensor<T> grad(const Var<T>& v) const {
    check_owned(v);
    const auto& n = nodes_[v.id()];
    return n.grad.empty() ? Tensor<T>::zeros(n.value.shape()) : n.grad;
  }

  /// Gradient buffer of `v` for accumulation inside a backward closure, or
  /// nullptr when `v` does not need one.
  Tensor<T>* grad_sink(const Var<T>& v) {
    auto& n = nodes_[v.id()];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad = Tensor<T>::zeros(n.value.shape());
    return &n.grad;
  }

  /// Reverse sweep from a scalar loss. Parameters off every path to the loss
  /// keep whatever gradient they had (callers zero them before the pass).
  void backward(const Var<T>& loss) {
    check_owned(loss);
    if (!nodes_[loss.id()].value.is_scalar())
      throw ContractError("backward() needs a scalar loss, got shape " +
                          shape_str(nodes_[loss.id()].value.shape()));
    if (consumed_) throw ContractError("backward() already ran on this tape");
    consumed_ = true;
    if (!nodes_[loss.id()].requires_grad) return;
    nodes_[loss.id()].grad = Tensor<T>(Shape{1}, T{1});
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.grad.empty()) continue;
      if (n.backward) {
        n.backward(*this, n.grad);
        n.backward = nullptr;
      }
      if (n.param) n.param->grad += n.grad;
    }
    for (auto& n : nodes_) n.backward = nullptr;
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };

  Var<T> push_leaf(Tensor<T> v, bool requires_grad, Parameter<T>* p) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    n.param = requires_grad ? p : nullptr;
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  void check_owned(const Var<T>& v) const {
    if (v.tape() != this || v.id() >= nodes_.size())
      throw ContractError("variable does not belong to this tape");
  }

  std::deque<Node> nodes_;
  bool grad_enabled_;
  bool consumed_ = false;
};

// ---------------------------------------------------------------------------
// Elementary differentiable operations.

/// Element-wise a + b. `b` may instead be a per-channel bias, shape (C) or
/// (1,C,1,1), broadcast over a rank-4 `a`.
template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  Tape<T>& tape = *a.tape();
  if (av.shape() == bv.shape()) {
    Tensor<T> out = av;
    out += bv;
    return tape.record("add", std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
      if (auto* ga = t.grad_sink(a)) *ga += g;
      if (auto* gb = t.grad_sink(b)) *gb += g;
    });
  }
  const bool bias = av.rank() == 4 &&
                    ((bv.rank() == 1 && bv.dim(0) == av.dim(1)) ||
                     (bv.rank() == 4 && bv.dim(0) == 1 && bv.dim(1) == av.dim(1) &&
                      bv.dim(2) == 1 && bv.dim(3) == 1));
  if (!bias)
    throw DimensionError("add: shapes " + shape_str(av.shape()) + " and " +
                         shape_str(bv.shape()) + " are neither equal nor bias-broadcastable");
  const std::size_t N = av.dim(0), C = av.dim(1), HW = av.dim(2) * av.dim(3);
  Tensor<T> out = av;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      T* o = out.ptr() + (n * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) o[i] += bv[c];
    }
  return tape.record("add", std::move(out), {a, b}, [a, b, N, C, HW](Tape<T>& t, const Tensor<T>& g) {
    if (auto* ga = t.grad_sink(a)) *ga += g;
    if (auto* gb = t.grad_sink(b)) {
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
          const T* gp = g.ptr() + (n * C + c) * HW;
          T s{0};
          for (std::size_t i = 0; i < HW; ++i) s += gp[i];
          (*gb)[c] += s;
        }
    }
  });
}

/// Element-wise product of equally shaped tensors.
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape())
    throw DimensionError("mul: shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  return a.tape()->record("mul", std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    const auto& av = a.value();
    const auto& bv = b.value();
    if (auto* ga = t.grad_sink(a))
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * bv[i];
    if (auto* gb = t.grad_sink(b))
      for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] += g[i] * av[i];
  });
}

/// Channel-wise concatenation of rank-4 tensors; `a` takes the leading channels.
template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 4 || bv.rank() != 4 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) ||
      av.dim(3) != bv.dim(3))
    throw DimensionError("concat_channels: incompatible shapes " + shape_str(av.shape()) +
                         " and " + shape_str(bv.shape()));
  const std::size_t N = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), HW = av.dim(2) * av.dim(3);
  Tensor<T> out(Shape{N, Ca + Cb, av.dim(2), av.dim(3)});
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(av.ptr() + n * Ca * HW, Ca * HW, out.ptr() + n * (Ca + Cb) * HW);
    std::copy_n(bv.ptr() + n * Cb * HW, Cb * HW, out.ptr() + (n * (Ca + Cb) + Ca) * HW);
  }
  return a.tape()->record("concat_channels", std::move(out), {a, b},
                          [a, b, N, Ca, Cb, HW](Tape<T>& t, const Tensor<T>& g) {
                            auto* ga = t.grad_sink(a);
                            auto* gb = t.grad_sink(b);
                            for (std::size_t n = 0; n < N; ++n) {
                              const T* src = g.ptr() + n * (Ca + Cb) * HW;
                              if (ga)
                                for (std::size_t i = 0; i < Ca * HW; ++i)
                                  (*ga)[n * Ca * HW + i] += src[i];
                              if (gb)
                                for (std::size_t i = 0; i < Cb * HW; ++i)
                                  (*gb)[n * Cb * HW + i] += src[Ca * HW + i];
                            }
                          });
}

/// Sum of all entries, as a shape-(1) tensor.
template <class T>
Var<T> reduce_sum(const Var<T>& a) {
  const auto& av = a.value();
  T s{0};
  for (std::size_t i = 0; i < av.numel(); ++i) s += av[i];
  return a.tape()->record("reduce_sum", Tensor<T>::scalar(s), {a},
                          [a](Tape<T>& t, const Tensor<T>& g) {
                            if (auto* ga = t.grad_sink(a))
                              for (auto& v : ga->data()) v += g[0];
                          });
}

/// Arithmetic mean of all entries, as a shape-(1) tensor.
template <class T>
Var<T> reduce_mean(const Var<T>& a) {
  const auto& av = a.value();
  const T n = static_cast<T>(av.numel());
  T s{0};
  for (std::size_t i = 0; i < av.numel(); ++i) s += av[i];
  return a.tape()->record("reduce_mean", Tensor<T>::scalar(s / n), {a},
                          [a, n](Tape<T>& t, const Tensor<T>& g) {
                            if (auto* ga = t.grad_sink(a))
                              for (auto& v : ga->data()) v += g[0] / n;
                          });
}

}  // namespace ivus
