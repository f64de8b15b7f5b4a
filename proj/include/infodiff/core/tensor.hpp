// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace infodiff {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

// Dense n-d array with shared storage. Copies are shallow; use clone() for a
// deep copy. Row-major layout, last axis contiguous.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(numel(shape_), T(0))) {}

  Tensor(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(std::move(values))) {
    if (static_cast<int64_t>(data_->size()) != numel(shape_))
      throw std::invalid_argument("Tensor: value count does not match shape " +
                                  shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    std::fill(t.begin(), t.end(), v);
    return t;
  }

  static Tensor scalar(T v) { return full({1}, v); }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int64_t i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

  T* data() { return data_->data(); }
  const T* data() const { return data_->data(); }
  T* begin() { return data(); }
  T* end() { return data() + size(); }
  const T* begin() const { return data(); }
  const T* end() const { return data() + size(); }

  T& operator[](int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

  // Shares storage; only the shape changes.
  Tensor reshape(Shape shape) const {
    if (numel(shape) != size())
      throw std::invalid_argument("Tensor::reshape " + shape_str(shape_) +
                                  " -> " + shape_str(shape) + " changes size");
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }

  Tensor clone() const {
    Tensor out;
    out.shape_ = shape_;
    out.data_ = std::make_shared<std::vector<T>>(*data_);
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (int64_t i = 0; i < size(); ++i) out[i] = static_cast<U>((*data_)[i]);
    return out;
  }

  void fill(T v) { std::fill(begin(), end(), v); }

  bool all_finite() const {
    for (const T& v : *data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;

  template <typename U>
  friend class Tensor;
};

// NumPy-style broadcast of two shapes; throws if incompatible.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (size_t i = 0; i < r; ++i) {
    int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1)
      throw std::invalid_argument("broadcast: incompatible shapes " +
                                  shape_str(a) + " vs " + shape_str(b));
    out[r - 1 - i] = std::max(da, db);
  }
  return out;
}

// Row-major strides with 0 on axes that broadcast (dim 1 against dim > 1).
inline std::vector<int64_t> broadcast_strides(const Shape& from, const Shape& to) {
  std::vector<int64_t> strides(to.size(), 0);
  int64_t acc = 1;
  for (size_t i = 0; i < from.size(); ++i) {
    size_t ai = from.size() - 1 - i;
    size_t oi = to.size() - 1 - i;
    strides[oi] = (from[ai] == 1 && to[oi] != 1) ? 0 : acc;
    acc *= from[ai];
  }
  return strides;
}

template <typename T, typename F>
Tensor<T> broadcast_binary(const Tensor<T>& a, const Tensor<T>& b, F f) {
  if (a.shape() == b.shape()) {
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (int64_t i = 0; i < a.size(); ++i) po[i] = f(pa[i], pb[i]);
    return out;
  }
  if (b.size() == 1) {
    Tensor<T> out(a.shape());
    const T bv = b[0];
    for (int64_t i = 0; i < a.size(); ++i) out[i] = f(a[i], bv);
    return out;
  }
  if (a.size() == 1) {
    Tensor<T> out(b.shape());
    const T av = a[0];
    for (int64_t i = 0; i < b.size(); ++i) out[i] = f(av, b[i]);
    return out;
  }
  Shape os = broadcast_shape(a.shape(), b.shape());
  auto sa = broadcast_strides(a.shape(), os);
  auto sb = broadcast_strides(b.shape(), os);
  Tensor<T> out(os);
  int64_t n = out.size();
  size_t r = os.size();
  std::vector<int64_t> idx(r, 0);
  int64_t offa = 0, offb = 0;
  for (int64_t i = 0; i < n; ++i) {
    out[i] = f(a[offa], b[offb]);
    // Advance the multi-index (odometer order: last axis fastest).
    for (size_t k = r; k-- > 0;) {
      ++idx[k];
      offa += sa[k];
      offb += sb[k];
      if (idx[k] < os[k]) break;
      offa -= sa[k] * os[k];
      offb -= sb[k] * os[k];
      idx[k] = 0;
    }
  }
  return out;
}

// Sum grad over axes that were broadcast so the result has `target` shape.
template <typename T>
Tensor<T> reduce_to_shape(const Tensor<T>& g, const Shape& target) {
  if (g.shape() == target) return g;
  Shape os = g.shape();
  auto st = broadcast_strides(target, os);
  Tensor<T> out(target);
  size_t r = os.size();
  std::vector<int64_t> idx(r, 0);
  int64_t off = 0;
  for (int64_t i = 0; i < g.size(); ++i) {
    out[off] += g[i];
    for (size_t k = r; k-- > 0;) {
      ++idx[k];
      off += st[k];
      if (idx[k] < os[k]) break;
      off -= st[k] * os[k];
      idx[k] = 0;
    }
  }
  return out;
}

}  // namespace infodiff
