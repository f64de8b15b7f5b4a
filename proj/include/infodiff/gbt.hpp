// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace infodiff::gbt {

struct TreeOptions {
  int max_depth = 3;
  double min_gain = 1e-12;  // skip splits that only shuffle rounding noise
};

struct BoostOptions {
  int rounds = 100;
  double learning_rate = 0.1;
  TreeOptions tree;
};

namespace detail {

struct Node {
  int feature = -1;  // -1: leaf
  double threshold = 0;
  double value = 0;
  int left = -1, right = -1;
};

}  // namespace detail

// Exact-greedy regression tree on squared error. Features are addressed in a
// row-major (n, d) buffer; split gains accumulate into feature_gain.
class RegTree {
 public:
  void fit(const double* X, int64_t d, const double* target,
           std::vector<int64_t> idx, const TreeOptions& opt,
           std::vector<double>& feature_gain) {
    d_ = d;
    nodes_.clear();
    build(X, target, std::move(idx), 0, opt, feature_gain);
  }

  double predict(const double* row) const {
    int cur = 0;
    while (nodes_[static_cast<size_t>(cur)].feature >= 0) {
      const auto& nd = nodes_[static_cast<size_t>(cur)];
      cur = row[nd.feature] <= nd.threshold ? nd.left : nd.right;
    }
    return nodes_[static_cast<size_t>(cur)].value;
  }

 private:
  int build(const double* X, const double* target, std::vector<int64_t> idx,
            int depth, const TreeOptions& opt, std::vector<double>& gain_out) {
    int me = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    double sum = 0;
    for (int64_t i : idx) sum += target[i];
    double n = static_cast<double>(idx.size());
    nodes_[static_cast<size_t>(me)].value = sum / n;

    if (depth >= opt.max_depth || idx.size() < 2) return me;

    // best split: maximize SL^2/nL + SR^2/nR - S^2/n over sorted thresholds
    int best_f = -1;
    double best_gain = opt.min_gain, best_thr = 0;
    std::vector<std::pair<double, double>> vt(idx.size());
    for (int64_t f = 0; f < d_; ++f) {
      for (size_t i = 0; i < idx.size(); ++i)
        vt[i] = {X[idx[i] * d_ + f], target[idx[i]]};
      std::sort(vt.begin(), vt.end());
      double sl = 0, nl = 0;
      for (size_t i = 0; i + 1 < vt.size(); ++i) {
        sl += vt[i].second;
        nl += 1;
        if (vt[i].first == vt[i + 1].first) continue;
        double sr = sum - sl, nr = n - nl;
        double gain = sl * sl / nl + sr * sr / nr - sum * sum / n;
        if (gain > best_gain) {
          best_gain = gain;
          best_f = static_cast<int>(f);
          best_thr = 0.5 * (vt[i].first + vt[i + 1].first);
        }
      }
    }
    if (best_f < 0) return me;

    std::vector<int64_t> li, ri;
    for (int64_t i : idx)
      (X[i * d_ + best_f] <= best_thr ? li : ri).push_back(i);
    idx.clear();
    idx.shrink_to_fit();

    gain_out[static_cast<size_t>(best_f)] += best_gain;
    nodes_[static_cast<size_t>(me)].feature = best_f;
    nodes_[static_cast<size_t>(me)].threshold = best_thr;
    int l = build(X, target, std::move(li), depth + 1, opt, gain_out);
    int r = build(X, target, std::move(ri), depth + 1, opt, gain_out);
    nodes_[static_cast<size_t>(me)].left = l;
    nodes_[static_cast<size_t>(me)].right = r;
    return me;
  }

  int64_t d_ = 0;
  std::vector<detail::Node> nodes_;
};

// Binary gradient-boosted classifier: log-odds prior, trees fit to the
// logistic residual y - sigmoid(F), plain gradient leaf values.
class GbtBinary {
 public:
  void fit(const double* X, int64_t n, int64_t d, const std::vector<int>& y,
           const BoostOptions& opt = {}) {
    if (static_cast<int64_t>(y.size()) != n)
      throw std::invalid_argument("gbt: label count mismatch");
    d_ = d;
    feature_gain.assign(static_cast<size_t>(d), 0.0);
    trees_.clear();

    double pos = 0;
    for (int v : y) {
      if (v != 0 && v != 1) throw std::invalid_argument("gbt: labels must be 0/1");
      pos += v;
    }
    double p = std::clamp(pos / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
    f0_ = std::log(p / (1.0 - p));
    lr_ = opt.learning_rate;

    std::vector<double> f(static_cast<size_t>(n), f0_);
    std::vector<double> resid(static_cast<size_t>(n));
    std::vector<int64_t> all(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;

    for (int m = 0; m < opt.rounds; ++m) {
      for (int64_t i = 0; i < n; ++i)
        resid[static_cast<size_t>(i)] =
            y[static_cast<size_t>(i)] - sigmoid(f[static_cast<size_t>(i)]);
      RegTree t;
      t.fit(X, d, resid.data(), all, opt.tree, feature_gain);
      for (int64_t i = 0; i < n; ++i)
        f[static_cast<size_t>(i)] += opt.learning_rate * t.predict(X + i * d);
      trees_.push_back(std::move(t));
    }
  }

  // raw additive score F(x); the class probability is sigmoid(F)
  double score(const double* row) const {
    double f = f0_;
    for (const auto& t : trees_) f += lr_ * t.predict(row);
    return f;
  }

  double predict_proba(const double* row) const { return sigmoid(score(row)); }

  std::vector<double> feature_gain;

 private:
  static double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

  int64_t d_ = 0;
  double f0_ = 0;
  double lr_ = 0.1;
  std::vector<RegTree> trees_;
};

// One-vs-rest multiclass wrapper; feature gains are summed over classes.
class GbtOvR {
 public:
  void fit(const double* X, int64_t n, int64_t d, const std::vector<int>& y,
           int num_classes, const BoostOptions& opt = {}) {
    if (num_classes < 2) throw std::invalid_argument("gbt: need >= 2 classes");
    feature_gain.assign(static_cast<size_t>(d), 0.0);
    per_class_.assign(static_cast<size_t>(num_classes), GbtBinary{});
    std::vector<int> y01(y.size());
    for (int c = 0; c < num_classes; ++c) {
      for (size_t i = 0; i < y.size(); ++i) y01[i] = y[i] == c ? 1 : 0;
      per_class_[static_cast<size_t>(c)].fit(X, n, d, y01, opt);
      for (int64_t j = 0; j < d; ++j)
        feature_gain[static_cast<size_t>(j)] +=
            per_class_[static_cast<size_t>(c)].feature_gain[static_cast<size_t>(j)];
    }
  }

  int predict(const double* row) const {
    int best = 0;
    double best_s = per_class_[0].score(row);
    for (size_t c = 1; c < per_class_.size(); ++c) {
      double s = per_class_[c].score(row);
      if (s > best_s) {
        best_s = s;
        best = static_cast<int>(c);
      }
    }
    return best;
  }

  std::vector<double> feature_gain;

 private:
  std::vector<GbtBinary> per_class_;
};

}  // namespace infodiff::gbt
