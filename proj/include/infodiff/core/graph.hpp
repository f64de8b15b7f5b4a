// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "infodiff/core/tensor.hpp"

namespace infodiff::ad {

using infodiff::Shape;
using infodiff::Tensor;

template <typename T>
using MatMap =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap = Eigen::Map<
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first contribution during backward
  bool requires_grad = false;
  std::function<void()> backward;  // pulls from this->grad into input grads
};

// Reverse-mode tape. Nodes live for the lifetime of the Graph; a fresh Graph
// is built per training step. Handles are raw pointers owned by the tape.
template <typename T>
class Graph {
 public:
  struct Var {
    Node<T>* n = nullptr;

    const Tensor<T>& value() const { return n->value; }
    const Shape& shape() const { return n->value.shape(); }
    bool requires_grad() const { return n->requires_grad; }
  };

  // When false, ops skip building backward closures (inference mode).
  bool grad_enabled = true;

  Var emplace(Tensor<T> value, bool requires_grad) {
    nodes_.push_back(std::make_unique<Node<T>>());
    Node<T>* n = nodes_.back().get();
    n->value = std::move(value);
    n->requires_grad = requires_grad && grad_enabled;
    return Var{n};
  }

  Var constant(Tensor<T> value) { return emplace(std::move(value), false); }
  Var constant_scalar(T v) { return constant(Tensor<T>::scalar(v)); }

  // Leaf whose grad accumulates into `grad_sink` (shared storage); used to
  // bind persistent parameters into the tape.
  Var leaf(const Tensor<T>& value, const Tensor<T>& grad_sink) {
    Var v = emplace(value, true);
    if (v.n->requires_grad) v.n->grad = grad_sink;
    return v;
  }

  static Tensor<T>& grad_of(Node<T>* n) {
    if (!n->grad.defined()) n->grad = Tensor<T>::zeros(n->value.shape());
    return n->grad;
  }

  // Adds g into in->grad, summing over broadcast axes if shapes differ.
  static void accumulate(Node<T>* in, const Tensor<T>& g) {
    if (!in->requires_grad) return;
    Tensor<T> r =
        g.shape() == in->value.shape() ? g : reduce_to_shape(g, in->value.shape());
    Tensor<T>& dst = grad_of(in);
    for (int64_t i = 0; i < dst.size(); ++i) dst[i] += r[i];
  }

  void backward(Var loss) {
    if (loss.value().size() != 1)
      throw std::invalid_argument("backward: loss must be a scalar");
    grad_of(loss.n).fill(T(1));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>* n = it->get();
      if (n->backward && n->grad.defined()) n->backward();
    }
  }

  size_t node_count() const { return nodes_.size(); }

 private:
  std::deque<std::unique_ptr<Node<T>>> nodes_;
};

template <typename T>
using Var = typename Graph<T>::Var;

namespace detail {

template <typename T>
bool any_grad(std::initializer_list<Var<T>> vs) {
  for (const Var<T>& v : vs)
    if (v.n->requires_grad) return true;
  return false;
}

}  // namespace detail

// ---- elementwise binary ops (broadcasting) --------------------------------

template <typename T>
Var<T> add(Graph<T>& g, Var<T> a, Var<T> b) {
  Var<T> out = g.emplace(
      broadcast_binary(a.value(), b.value(), [](T x, T y) { return x + y; }),
      detail::any_grad<T>({a, b}));
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [an = a.n, bn = b.n, on]() {
      Graph<T>::accumulate(an, on->grad);
      Graph<T>::accumulate(bn, on->grad);
    };
  }
  return out;
}

template <typename T>
Var<T> sub(Graph<T>& g, Var<T> a, Var<T> b) {
  Var<T> out = g.emplace(
      broadcast_binary(a.value(), b.value(), [](T x, T y) { return x - y; }),
      detail::any_grad<T>({a, b}));
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [an = a.n, bn = b.n, on]() {
      Graph<T>::accumulate(an, on->grad);
      Tensor<T> neg(on->grad.shape());
      for (int64_t i = 0; i < neg.size(); ++i) neg[i] = -on->grad[i];
      Graph<T>::accumulate(bn, neg);
    };
  }
  return out;
}

template <typename T>
Var<T> mul(Graph<T>& g, Var<T> a, Var<T> b) {
  Var<T> out = g.emplace(
      broadcast_binary(a.value(), b.value(), [](T x, T y) { return x * y; }),
      detail::any_grad<T>({a, b}));
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [an = a.n, bn = b.n, on]() {
      if (an->requires_grad)
        Graph<T>::accumulate(
            an, broadcast_binary(on->grad, bn->value, [](T x, T y) { return x * y; }));
      if (bn->requires_grad)
        Graph<T>::accumulate(
            bn, broadcast_binary(on->grad, an->value, [](T x, T y) { return x * y; }));
    };
  }
  return out;
}

template <typename T>
Var<T> div(Graph<T>& g, Var<T> a, Var<T> b) {
  Var<T> out = g.emplace(
      broadcast_binary(a.value(), b.value(), [](T x, T y) { return x / y; }),
      detail::any_grad<T>({a, b}));
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [an = a.n, bn = b.n, on]() {
      if (an->requires_grad)
        Graph<T>::accumulate(
            an, broadcast_binary(on->grad, bn->value, [](T x, T y) { return x / y; }));
      if (bn->requires_grad) {
        Tensor<T> t = broadcast_binary(an->value, bn->value,
                                       [](T x, T y) { return -x / (y * y); });
        Graph<T>::accumulate(
            bn, broadcast_binary(on->grad, t, [](T x, T y) { return x * y; }));
      }
    };
  }
  return out;
}

// ---- elementwise unary ops -------------------------------------------------

// f: value op; dfdx(x, y): derivative given input x and output y.
template <typename T, typename F, typename DF>
Var<T> unary_op(Graph<T>& g, Var<T> a, F f, DF dfdx) {
  Tensor<T> v(a.shape());
  for (int64_t i = 0; i < v.size(); ++i) v[i] = f(a.value()[i]);
  Var<T> out = g.emplace(std::move(v), a.n->requires_grad);
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [an = a.n, on, dfdx]() {
      Tensor<T> gx(on->grad.shape());
      for (int64_t i = 0; i < gx.size(); ++i)
        gx[i] = on->grad[i] * dfdx(an->value[i], on->value[i]);
      Graph<T>::accumulate(an, gx);
    };
  }
  return out;
}

template <typename T>
Var<T> neg(Graph<T>& g, Var<T> a) {
  return unary_op(
      g, a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <typename T>
Var<T> exp(Graph<T>& g, Var<T> a) {
  return unary_op(
      g, a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(Graph<T>& g, Var<T> a) {
  return unary_op(
      g, a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Var<T> sqrt(Graph<T>& g, Var<T> a) {
  return unary_op(
      g, a, [](T x) { return std::sqrt(x); },
      [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Var<T> sigmoid(Graph<T>& g, Var<T> a) {
  return unary_op(
      g, a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> silu(Graph<T>& g, Var<T> a) {
  return unary_op(
      g, a,
      [](T x) { return x / (T(1) + std::exp(-x)); },
      [](T x, T) {
        T s = T(1) / (T(1) + std::exp(-x));
        return s * (T(1) + x * (T(1) - s));
      });
}

template <typename T>
Var<T> softplus(Graph<T>& g, Var<T> a) {
  return unary_op(
      g, a,
      [](T x) {
        return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
      },
      [](T x, T) { return T(1) / (T(1) + std::exp(-x)); });
}

template <typename T>
Var<T> square(Graph<T>& g, Var<T> a) {
  return unary_op(
      g, a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

// Clamp with zero gradient outside [lo, hi].
template <typename T>
Var<T> clamp(Graph<T>& g, Var<T> a, T lo, T hi) {
  return unary_op(
      g, a, [lo, hi](T x) { return std::min(hi, std::max(lo, x)); },
      [lo, hi](T x, T) { return (x < lo || x > hi) ? T(0) : T(1); });
}

template <typename T>
Var<T> scalar_mul(Graph<T>& g, Var<T> a, T c) {
  return unary_op(
      g, a, [c](T x) { return c * x; }, [c](T, T) { return c; });
}

template <typename T>
Var<T> scalar_add(Graph<T>& g, Var<T> a, T c) {
  return unary_op(
      g, a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

// ---- shape ops --------------------------------------------------------------

template <typename T>
Var<T> reshape(Graph<T>& g, Var<T> a, Shape shape) {
  Var<T> out = g.emplace(a.value().reshape(shape).clone(), a.n->requires_grad);
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [an = a.n, on]() {
      Graph<T>::accumulate(an, on->grad.reshape(an->value.shape()));
    };
  }
  return out;
}

template <typename T>
Var<T> transpose2d(Graph<T>& g, Var<T> a) {
  if (a.shape().size() != 2)
    throw std::invalid_argument("transpose2d expects a rank-2 tensor");
  int64_t r = a.shape()[0], c = a.shape()[1];
  Tensor<T> v({c, r});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) v[j * r + i] = a.value()[i * c + j];
  Var<T> out = g.emplace(std::move(v), a.n->requires_grad);
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [an = a.n, on, r, c]() {
      Tensor<T> gx({r, c});
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) gx[i * c + j] = on->grad[j * r + i];
      Graph<T>::accumulate(an, gx);
    };
  }
  return out;
}

// Concatenate rank-2 tensors along axis 1.
template <typename T>
Var<T> concat_cols(Graph<T>& g, Var<T> a, Var<T> b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[0] != b.shape()[0])
    throw std::invalid_argument("concat_cols: need rank-2 with equal rows");
  int64_t n = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
  Tensor<T> v({n, ca + cb});
  for (int64_t i = 0; i < n; ++i) {
    std::copy(a.value().data() + i * ca, a.value().data() + (i + 1) * ca,
              v.data() + i * (ca + cb));
    std::copy(b.value().data() + i * cb, b.value().data() + (i + 1) * cb,
              v.data() + i * (ca + cb) + ca);
  }
  Var<T> out = g.emplace(std::move(v), detail::any_grad<T>({a, b}));
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [an = a.n, bn = b.n, on, n, ca, cb]() {
      if (an->requires_grad) {
        Tensor<T> ga({n, ca});
        for (int64_t i = 0; i < n; ++i)
          std::copy(on->grad.data() + i * (ca + cb),
                    on->grad.data() + i * (ca + cb) + ca, ga.data() + i * ca);
        Graph<T>::accumulate(an, ga);
      }
      if (bn->requires_grad) {
        Tensor<T> gb({n, cb});
        for (int64_t i = 0; i < n; ++i)
          std::copy(on->grad.data() + i * (ca + cb) + ca,
                    on->grad.data() + (i + 1) * (ca + cb), gb.data() + i * cb);
        Graph<T>::accumulate(bn, gb);
      }
    };
  }
  return out;
}

// Columns [lo, hi) of a rank-2 tensor.
template <typename T>
Var<T> slice_cols(Graph<T>& g, Var<T> a, int64_t lo, int64_t hi) {
  if (a.shape().size() != 2)
    throw std::invalid_argument("slice_cols expects a rank-2 tensor");
  int64_t n = a.shape()[0], c = a.shape()[1];
  if (lo < 0 || hi > c || lo >= hi)
    throw std::invalid_argument("slice_cols: bad column range");
  int64_t w = hi - lo;
  Tensor<T> v({n, w});
  for (int64_t i = 0; i < n; ++i)
    std::copy(a.value().data() + i * c + lo, a.value().data() + i * c + hi,
              v.data() + i * w);
  Var<T> out = g.emplace(std::move(v), a.n->requires_grad);
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [an = a.n, on, n, c, lo, w]() {
      Tensor<T> gx({n, c});
      for (int64_t i = 0; i < n; ++i)
        std::copy(on->grad.data() + i * w, on->grad.data() + (i + 1) * w,
                  gx.data() + i * c + lo);
      Graph<T>::accumulate(an, gx);
    };
  }
  return out;
}

// ---- matmul -----------------------------------------------------------------

template <typename T>
Var<T> matmul(Graph<T>& g, Var<T> a, Var<T> b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[1] != b.shape()[0])
    throw std::invalid_argument("matmul: incompatible shapes " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  int64_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  Tensor<T> v({n, m});
  {
    ConstMatMap<T> A(a.value().data(), n, k), B(b.value().data(), k, m);
    MatMap<T> O(v.data(), n, m);
    O.noalias() = A * B;
  }
  Var<T> out = g.emplace(std::move(v), detail::any_grad<T>({a, b}));
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [an = a.n, bn = b.n, on, n, k, m]() {
      ConstMatMap<T> G(on->grad.data(), n, m);
      if (an->requires_grad) {
        Tensor<T> ga({n, k});
        ConstMatMap<T> B(bn->value.data(), k, m);
        MatMap<T>(ga.data(), n, k).noalias() = G * B.transpose();
        Graph<T>::accumulate(an, ga);
      }
      if (bn->requires_grad) {
        Tensor<T> gb({k, m});
        ConstMatMap<T> A(an->value.data(), n, k);
        MatMap<T>(gb.data(), k, m).noalias() = A.transpose() * G;
        Graph<T>::accumulate(bn, gb);
      }
    };
  }
  return out;
}

// ---- reductions -------------------------------------------------------------

template <typename T>
Var<T> sum_all(Graph<T>& g, Var<T> a) {
  T s = 0;
  for (int64_t i = 0; i < a.value().size(); ++i) s += a.value()[i];
  Var<T> out = g.emplace(Tensor<T>::scalar(s), a.n->requires_grad);
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [an = a.n, on]() {
      Graph<T>::accumulate(an, Tensor<T>::full(an->value.shape(), on->grad[0]));
    };
  }
  return out;
}

template <typename T>
Var<T> mean_all(Graph<T>& g, Var<T> a) {
  return scalar_mul(g, sum_all(g, a), T(1) / static_cast<T>(a.value().size()));
}

// Sum over all axes but the first: (N, ...) -> (N, 1).
template <typename T>
Var<T> sum_per_example(Graph<T>& g, Var<T> a) {
  int64_t n = a.shape()[0];
  int64_t d = a.value().size() / n;
  Tensor<T> v({n, 1});
  for (int64_t i = 0; i < n; ++i) {
    T s = 0;
    const T* p = a.value().data() + i * d;
    for (int64_t j = 0; j < d; ++j) s += p[j];
    v[i] = s;
  }
  Var<T> out = g.emplace(std::move(v), a.n->requires_grad);
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [an = a.n, on, n, d]() {
      Tensor<T> gx(an->value.shape());
      for (int64_t i = 0; i < n; ++i) {
        T* p = gx.data() + i * d;
        for (int64_t j = 0; j < d; ++j) p[j] = on->grad[i];
      }
      Graph<T>::accumulate(an, gx);
    };
  }
  return out;
}

// Row-wise softmax of a rank-2 tensor.
template <typename T>
Var<T> softmax_rows(Graph<T>& g, Var<T> a) {
  if (a.shape().size() != 2)
    throw std::invalid_argument("softmax_rows expects a rank-2 tensor");
  int64_t n = a.shape()[0], k = a.shape()[1];
  Tensor<T> v({n, k});
  for (int64_t i = 0; i < n; ++i) {
    const T* x = a.value().data() + i * k;
    T* y = v.data() + i * k;
    T mx = x[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, x[j]);
    T z = 0;
    for (int64_t j = 0; j < k; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (int64_t j = 0; j < k; ++j) y[j] /= z;
  }
  Var<T> out = g.emplace(std::move(v), a.n->requires_grad);
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [an = a.n, on, n, k]() {
      Tensor<T> gx({n, k});
      for (int64_t i = 0; i < n; ++i) {
        const T* y = on->value.data() + i * k;
        const T* gy = on->grad.data() + i * k;
        T dot = 0;
        for (int64_t j = 0; j < k; ++j) dot += gy[j] * y[j];
        T* p = gx.data() + i * k;
        for (int64_t j = 0; j < k; ++j) p[j] = (gy[j] - dot) * y[j];
      }
      Graph<T>::accumulate(an, gx);
    };
  }
  return out;
}

}  // namespace infodiff::ad
