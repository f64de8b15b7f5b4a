// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "infodiff/core/graph.hpp"
#include "infodiff/core/ops_image.hpp"
#include "infodiff/core/rng.hpp"
#include "infodiff/core/tensor.hpp"

namespace infodiff::nn {

using ad::Graph;
using ad::Var;

// A named trainable tensor. `grad` persists across graph rebuilds; ops bind
// it into the tape through Graph::leaf so backward accumulates here.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(Tensor<T>::zeros(value.shape())) {}

  Var<T> bind(Graph<T>& g) const { return g.leaf(value, grad); }
};

template <typename T>
using ParamList = std::vector<Parameter<T>*>;

template <typename T>
void zero_grads(const ParamList<T>& ps) {
  for (auto* p : ps) p->grad.fill(T(0));
}

// Fan-in scaled normal init; gain 0 gives exact zeros (AGN conditioning maps).
template <typename T>
Tensor<T> init_normal(Shape shape, int64_t fan_in, Rng& rng, T gain = T(1)) {
  Tensor<T> t(std::move(shape));
  if (gain == T(0)) return t;
  T s = gain / static_cast<T>(std::sqrt(static_cast<double>(fan_in)));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.normal()) * s;
  return t;
}

// Fully connected layer.
template <typename T>
struct Dense {
  Parameter<T> W;  // (in, out)
  Parameter<T> b;  // (1, out)

  Dense() = default;
  Dense(const std::string& name, int64_t in, int64_t out, Rng& rng,
        T gain = T(1))
      : W(name + ".W", init_normal<T>({in, out}, in, rng, gain)),
        b(name + ".b", Tensor<T>::zeros({1, out})) {}

  Var<T> operator()(Graph<T>& g, Var<T> x) const {
    return ad::add(g, ad::matmul(g, x, W.bind(g)), b.bind(g));
  }

  void collect(ParamList<T>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
};

// Convolution layer wrapper.
template <typename T>
struct Conv2d {
  Parameter<T> W;  // (out, in, k, k)
  Parameter<T> b;  // (out)
  int64_t stride = 1;
  int64_t pad = 0;

  Conv2d() = default;
  Conv2d(const std::string& name, int64_t in, int64_t out, int64_t k,
         int64_t stride_, int64_t pad_, Rng& rng, T gain = T(1))
      : W(name + ".W", init_normal<T>({out, in, k, k}, in * k * k, rng, gain)),
        b(name + ".b", Tensor<T>::zeros({out})),
        stride(stride_),
        pad(pad_) {}

  Var<T> operator()(Graph<T>& g, Var<T> x) const {
    return ad::conv2d(g, x, W.bind(g), b.bind(g), stride, pad);
  }

  void collect(ParamList<T>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
};

// Adam with bias correction; state tensors are exposed for checkpointing.
template <typename T>
class Adam {
 public:
  T lr = T(1e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);

  explicit Adam(ParamList<T> params, T lr_ = T(1e-4))
      : lr(lr_), params_(std::move(params)) {
    for (auto* p : params_) {
      m_.push_back(Tensor<T>::zeros(p->value.shape()));
      v_.push_back(Tensor<T>::zeros(p->value.shape()));
    }
  }

  void zero_grad() { zero_grads(params_); }

  void step() {
    ++t_;
    T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1),
                                           static_cast<double>(t_)));
    T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2),
                                           static_cast<double>(t_)));
    for (size_t k = 0; k < params_.size(); ++k) {
      Parameter<T>* p = params_[k];
      Tensor<T>& m = m_[k];
      Tensor<T>& v = v_[k];
      for (int64_t i = 0; i < p->value.size(); ++i) {
        T gi = p->grad[i];
        m[i] = beta1 * m[i] + (T(1) - beta1) * gi;
        v[i] = beta2 * v[i] + (T(1) - beta2) * gi * gi;
        T mh = m[i] / bc1;
        T vh = v[i] / bc2;
        p->value[i] -= lr * mh / (std::sqrt(vh) + eps);
      }
    }
  }

  int64_t steps_taken() const { return t_; }
  void set_steps_taken(int64_t t) { t_ = t; }
  const ParamList<T>& params() const { return params_; }
  std::vector<Tensor<T>>& moment1() { return m_; }
  std::vector<Tensor<T>>& moment2() { return v_; }

 private:
  ParamList<T> params_;
  std::vector<Tensor<T>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace infodiff::nn
