// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "infodiff/core/errors.hpp"
#include "infodiff/core/rng.hpp"
#include "infodiff/core/tensor.hpp"
#include "infodiff/gbt.hpp"

namespace infodiff::metrics {

struct AttributeColumn {
  std::string name;
  std::vector<int> values;
  int cardinality = 2;

  bool binary() const { return cardinality == 2; }
};

// Labels aligned with an encoded latent batch; every column fully observed.
struct AttributeTable {
  int64_t n = 0;
  std::vector<AttributeColumn> columns;

  void add(std::string name, std::vector<int> values, int cardinality) {
    AttributeColumn c{std::move(name), std::move(values), cardinality};
    columns.push_back(std::move(c));
  }

  void validate() const {
    for (const auto& c : columns) {
      if (static_cast<int64_t>(c.values.size()) != n)
        throw std::invalid_argument("attribute table: column " + c.name +
                                    " has wrong length");
      if (c.cardinality < 2)
        throw std::invalid_argument("attribute table: column " + c.name +
                                    " needs cardinality >= 2");
      for (int v : c.values)
        if (v < 0 || v >= c.cardinality)
          throw std::invalid_argument("attribute table: column " + c.name +
                                      " has out-of-range label");
    }
  }
};

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double m = std::accumulate(xs.begin(), xs.end(), 0.0) /
             static_cast<double>(xs.size());
  double s = 0;
  for (double x : xs) s += (x - m) * (x - m);
  return {m, xs.size() > 1 ? std::sqrt(s / static_cast<double>(xs.size() - 1))
                           : 0.0};
}

// Rank-based AUROC with midranks on ties.
inline double auroc(const std::vector<double>& score, const std::vector<int>& y) {
  if (score.size() != y.size() || score.empty())
    throw std::invalid_argument("auroc: size mismatch");
  int64_t n = static_cast<int64_t>(score.size());
  std::vector<int64_t> ord(static_cast<size_t>(n));
  std::iota(ord.begin(), ord.end(), 0);
  std::sort(ord.begin(), ord.end(),
            [&](int64_t a, int64_t b) { return score[static_cast<size_t>(a)] <
                                               score[static_cast<size_t>(b)]; });
  double rank_pos = 0, npos = 0;
  int64_t i = 0;
  while (i < n) {
    int64_t j = i;
    while (j < n && score[static_cast<size_t>(ord[static_cast<size_t>(j)])] ==
                        score[static_cast<size_t>(ord[static_cast<size_t>(i)])])
      ++j;
    double mid = 0.5 * static_cast<double>(i + j - 1) + 1.0;  // 1-based midrank
    for (int64_t k = i; k < j; ++k)
      if (y[static_cast<size_t>(ord[static_cast<size_t>(k)])] == 1) {
        rank_pos += mid;
        npos += 1;
      }
    i = j;
  }
  double nneg = static_cast<double>(n) - npos;
  if (npos == 0 || nneg == 0)
    throw std::invalid_argument("auroc: needs both classes");
  return (rank_pos - npos * (npos + 1) / 2.0) / (npos * nneg);
}

namespace detail {

// Newton-IRLS logistic regression on standardized features with a tiny ridge
// term; deterministic and robust to separable folds.
class Logistic {
 public:
  void fit(const Eigen::MatrixXd& X, const std::vector<int>& y) {
    int64_t n = X.rows(), d = X.cols();
    mu_ = X.colwise().mean().transpose();
    sd_.resize(d);
    for (int64_t j = 0; j < d; ++j) {
      double v = (X.col(j).array() - mu_[j]).square().sum() /
                 std::max<double>(1.0, static_cast<double>(n - 1));
      sd_[j] = v > 1e-12 ? std::sqrt(v) : 1.0;
    }
    Eigen::MatrixXd Z(n, d + 1);
    Z.col(0).setOnes();
    for (int64_t j = 0; j < d; ++j)
      Z.col(j + 1) = (X.col(j).array() - mu_[j]) / sd_[j];

    Eigen::VectorXd yy(n);
    for (int64_t i = 0; i < n; ++i) yy[i] = y[static_cast<size_t>(i)];
    w_ = Eigen::VectorXd::Zero(d + 1);
    const double lambda = 1e-6;
    for (int it = 0; it < 30; ++it) {
      Eigen::VectorXd p = (Z * w_).unaryExpr(
          [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
      Eigen::VectorXd grad = Z.transpose() * (yy - p) - lambda * w_;
      if (grad.lpNorm<Eigen::Infinity>() < 1e-9) break;
      Eigen::VectorXd wdiag =
          (p.array() * (1.0 - p.array())).max(1e-9).matrix();
      Eigen::MatrixXd H = Z.transpose() * wdiag.asDiagonal() * Z;
      H.diagonal().array() += lambda;
      w_ += H.ldlt().solve(grad);
    }
  }

  double score(const Eigen::RowVectorXd& x) const {
    double s = w_[0];
    for (int64_t j = 0; j < x.size(); ++j)
      s += w_[j + 1] * (x[j] - mu_[j]) / sd_[j];
    return s;
  }

 private:
  Eigen::VectorXd w_, mu_;
  std::vector<double> sd_;
};

inline Eigen::MatrixXd rows(const Tensor<double>& z,
                            const std::vector<int64_t>& idx) {
  int64_t d = z.dim(1);
  Eigen::MatrixXd out(static_cast<int64_t>(idx.size()), d);
  for (size_t i = 0; i < idx.size(); ++i)
    for (int64_t j = 0; j < d; ++j) out(static_cast<int64_t>(i), j) =
        z[idx[i] * d + j];
  return out;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& v, const std::vector<int64_t>& idx) {
  std::vector<T> out(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) out[i] = v[static_cast<size_t>(idx[i])];
  return out;
}

}  // namespace detail

struct ProbeScore {
  std::vector<double> folds;
  double mean = 0, std = 0;
  bool is_binary = true;  // AUROC if binary, accuracy otherwise
};

struct LatentQualityReport {
  std::map<std::string, ProbeScore> per_attribute;
  std::vector<std::string> skipped;
  double mean = 0, std = 0;  // across attributes, of fold means
  int folds = 5;
};

// §6.1 probes: 5-fold 80/20 linear probes per attribute; AUROC for binary
// columns, one-vs-rest accuracy for categorical ones.
inline LatentQualityReport latent_quality(const Tensor<double>& z,
                                          const AttributeTable& table,
                                          int folds = 5, uint64_t seed = 0) {
  table.validate();
  if (z.rank() != 2 || z.dim(0) != table.n)
    throw std::invalid_argument("latent_quality: z must be (n, d) aligned");
  if (table.n < 50) throw std::invalid_argument("latent_quality: n >= 50");
  if (table.columns.empty())
    throw std::invalid_argument("latent_quality: need at least one attribute");
  if (folds < 2) throw std::invalid_argument("latent_quality: folds >= 2");

  int64_t n = table.n;
  std::vector<int64_t> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(splitmix64(seed ^ 0x70726f6265ULL));
  rng.shuffle(perm);

  LatentQualityReport rep;
  rep.folds = folds;
  for (const auto& col : table.columns) {
    if (*std::min_element(col.values.begin(), col.values.end()) ==
        *std::max_element(col.values.begin(), col.values.end())) {
      std::cerr << "[infodiff] latent_quality: skipping constant attribute "
                << col.name << "\n";
      rep.skipped.push_back(col.name);
      continue;
    }
    ProbeScore ps;
    ps.is_binary = col.binary();
    for (int f = 0; f < folds; ++f) {
      int64_t lo = f * n / folds, hi = (f + 1) * n / folds;
      std::vector<int64_t> test(perm.begin() + lo, perm.begin() + hi);
      std::vector<int64_t> train;
      train.reserve(static_cast<size_t>(n - (hi - lo)));
      train.insert(train.end(), perm.begin(), perm.begin() + lo);
      train.insert(train.end(), perm.begin() + hi, perm.end());

      Eigen::MatrixXd Xtr = detail::rows(z, train), Xte = detail::rows(z, test);
      auto ytr = detail::gather(col.values, train);
      auto yte = detail::gather(col.values, test);

      if (ps.is_binary) {
        detail::Logistic probe;
        probe.fit(Xtr, ytr);
        std::vector<double> s(yte.size());
        for (size_t i = 0; i < yte.size(); ++i)
          s[i] = probe.score(Xte.row(static_cast<int64_t>(i)));
        ps.folds.push_back(auroc(s, yte));
      } else {
        std::vector<detail::Logistic> ovr(static_cast<size_t>(col.cardinality));
        std::vector<int> y01(ytr.size());
        for (int c = 0; c < col.cardinality; ++c) {
          for (size_t i = 0; i < ytr.size(); ++i) y01[i] = ytr[i] == c ? 1 : 0;
          ovr[static_cast<size_t>(c)].fit(Xtr, y01);
        }
        int64_t hits = 0;
        for (size_t i = 0; i < yte.size(); ++i) {
          int best = 0;
          double best_s = ovr[0].score(Xte.row(static_cast<int64_t>(i)));
          for (int c = 1; c < col.cardinality; ++c) {
            double s = ovr[static_cast<size_t>(c)].score(
                Xte.row(static_cast<int64_t>(i)));
            if (s > best_s) {
              best_s = s;
              best = c;
            }
          }
          hits += best == yte[i];
        }
        ps.folds.push_back(static_cast<double>(hits) /
                           static_cast<double>(yte.size()));
      }
    }
    std::tie(ps.mean, ps.std) = mean_std(ps.folds);
    rep.per_attribute.emplace(col.name, std::move(ps));
  }
  if (rep.per_attribute.empty())
    throw std::invalid_argument("latent_quality: all attributes constant");

  std::vector<double> means;
  for (const auto& [_, ps] : rep.per_attribute) means.push_back(ps.mean);
  std::tie(rep.mean, rep.std) = mean_std(means);
  return rep;
}

// DCI disentanglement from a (d x k) importance matrix: per-dim probabilities
// across factors, score 1 - H/log k, averaged with relative-importance weights.
inline double dci_from_importance(const std::vector<std::vector<double>>& R) {
  if (R.empty()) throw std::invalid_argument("dci: empty importance matrix");
  size_t k = R[0].size();
  if (k < 2) throw std::invalid_argument("dci: need >= 2 factors");
  double total = 0;
  for (const auto& row : R) {
    if (row.size() != k) throw std::invalid_argument("dci: ragged matrix");
    for (double v : row) {
      if (v < 0) throw std::invalid_argument("dci: negative importance");
      total += v;
    }
  }
  if (total == 0) return 0.0;

  double score = 0;
  for (const auto& row : R) {
    double rs = std::accumulate(row.begin(), row.end(), 0.0);
    if (rs == 0) continue;  // dead dim carries no weight
    double h = 0;
    for (double v : row)
      if (v > 0) {
        double p = v / rs;
        h -= p * std::log(p);
      }
    score += (rs / total) * (1.0 - h / std::log(static_cast<double>(k)));
  }
  return score;
}

// Importance of each latent dim for each factor via boosted-tree split gains.
inline std::vector<std::vector<double>> gbt_importance(
    const Tensor<double>& z, const AttributeTable& factors,
    const gbt::BoostOptions& opt = {}) {
  factors.validate();
  if (z.rank() != 2 || z.dim(0) != factors.n)
    throw std::invalid_argument("dci: z must be (n, d) aligned with factors");
  if (factors.columns.empty())
    throw std::invalid_argument("dci: need at least one factor");
  int64_t d = z.dim(1), n = z.dim(0);

  std::vector<std::vector<double>> R(
      static_cast<size_t>(d),
      std::vector<double>(factors.columns.size(), 0.0));
  for (size_t j = 0; j < factors.columns.size(); ++j) {
    const auto& col = factors.columns[j];
    std::vector<double> gain;
    if (col.binary()) {
      gbt::GbtBinary clf;
      clf.fit(z.data(), n, d, col.values, opt);
      gain = clf.feature_gain;
    } else {
      gbt::GbtOvR clf;
      clf.fit(z.data(), n, d, col.values, col.cardinality, opt);
      gain = clf.feature_gain;
    }
    for (int64_t i = 0; i < d; ++i)
      R[static_cast<size_t>(i)][j] = gain[static_cast<size_t>(i)];
  }
  return R;
}

inline double dci_disentanglement(const Tensor<double>& z,
                                  const AttributeTable& factors,
                                  const gbt::BoostOptions& opt = {}) {
  return dci_from_importance(gbt_importance(z, factors, opt));
}

namespace detail {

inline double entropy01(const std::vector<int>& a) {
  double n = static_cast<double>(a.size());
  double p = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double h = 0;
  if (p > 0) h -= p * std::log(p);
  if (p < 1) h -= (1 - p) * std::log(1 - p);
  return h;
}

inline double cond_entropy01(const std::vector<int>& a,
                             const std::vector<int>& b) {
  double n = static_cast<double>(a.size());
  double h = 0;
  for (int bv = 0; bv <= 1; ++bv) {
    std::vector<int> sub;
    for (size_t i = 0; i < a.size(); ++i)
      if (b[i] == bv) sub.push_back(a[i]);
    if (sub.empty()) continue;
    h += (static_cast<double>(sub.size()) / n) * entropy01(sub);
  }
  return h;
}

}  // namespace detail

struct TadResult {
  double score = 0;
  int captured = 0;
  std::vector<std::string> filtered;  // dropped by the entropy-reduction rule
};

// §6.2.2 TAD: drop attributes predictable from another one (normalized
// entropy reduction > 0.2), then per attribute rank latent dims by
// direction-corrected AUROC; captured iff best >= 0.75, score sums the
// margins between the two most predictive dims.
inline TadResult tad(const Tensor<double>& z, const AttributeTable& table) {
  table.validate();
  if (z.rank() != 2 || z.dim(0) != table.n)
    throw std::invalid_argument("tad: z must be (n, d) aligned");
  if (z.dim(1) < 2) throw std::invalid_argument("tad: need >= 2 latent dims");
  if (table.n < 100) throw std::invalid_argument("tad: n >= 100");
  for (const auto& c : table.columns)
    if (!c.binary())
      throw std::invalid_argument("tad: attributes must be binary");

  int64_t n = table.n, d = z.dim(1);
  TadResult out;
  std::vector<const AttributeColumn*> kept;
  for (const auto& a : table.columns) {
    double ha = detail::entropy01(a.values);
    bool drop = ha == 0.0;  // constant attribute, nothing to capture
    for (const auto& b : table.columns) {
      if (drop || &a == &b) continue;
      double red = (ha - detail::cond_entropy01(a.values, b.values)) / ha;
      drop = red > 0.2;
    }
    if (drop)
      out.filtered.push_back(a.name);
    else
      kept.push_back(&a);
  }

  for (const auto* a : kept) {
    std::vector<double> scores;
    for (int64_t j = 0; j < d; ++j) {
      std::vector<double> col(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) col[static_cast<size_t>(i)] = z[i * d + j];
      double v = auroc(col, a->values);
      scores.push_back(std::max(v, 1.0 - v));
    }
    std::sort(scores.begin(), scores.end(), std::greater<>());
    if (scores[0] >= 0.75) {
      out.captured += 1;
      out.score += scores[0] - scores[1];
    }
  }
  return out;
}

// Frechet distance between Gaussian moment fits.
inline double fid_from_moments(const Eigen::VectorXd& mu_a,
                               Eigen::MatrixXd cov_a,
                               const Eigen::VectorXd& mu_b,
                               Eigen::MatrixXd cov_b) {
  const double reg = 1e-6, tol = -1e-8;
  cov_a.diagonal().array() += reg;
  cov_b.diagonal().array() += reg;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(cov_a);
  if (ea.eigenvalues().minCoeff() < tol)
    throw NumericalFault("fid_proxy: covariance not PSD after regularization");
  Eigen::MatrixXd a_half =
      ea.eigenvectors() *
      ea.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
      ea.eigenvectors().transpose();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(a_half * cov_b * a_half);
  if (em.eigenvalues().minCoeff() < tol)
    throw NumericalFault("fid_proxy: cross term not PSD");

  double tr_sqrt = em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() -
         2.0 * tr_sqrt;
}

// feature_fn maps a (n, ...) batch to (n, f) features.
template <typename FeatureFn>
double fid_proxy(const Tensor<double>& samples, const Tensor<double>& reference,
                 FeatureFn&& feature_fn) {
  if (samples.dim(0) < 500 || reference.dim(0) < 500)
    throw std::invalid_argument("fid_proxy: both batches need >= 500 examples");
  Tensor<double> fa = feature_fn(samples);
  Tensor<double> fb = feature_fn(reference);
  if (fa.rank() != 2 || fb.rank() != 2 || fa.dim(1) != fb.dim(1))
    throw std::invalid_argument("fid_proxy: feature_fn must emit (n, f)");

  auto moments = [](const Tensor<double>& f) {
    int64_t n = f.dim(0), d = f.dim(1);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>
        m(f.data(), n, d);
    Eigen::VectorXd mu = m.colwise().mean().transpose();
    Eigen::MatrixXd centered = m.rowwise() - mu.transpose();
    Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(n - 1);
    return std::make_pair(mu, cov);
  };
  auto [mu_a, cov_a] = moments(fa);
  auto [mu_b, cov_b] = moments(fb);
  double v = fid_from_moments(mu_a, cov_a, mu_b, cov_b);
  if (!std::isfinite(v)) throw NumericalFault("fid_proxy: non-finite result");
  return v;
}

struct MetricReport {
  LatentQualityReport latent_quality;
  double dci = 0, dci_std = 0;
  double tad_score = 0, tad_std = 0;
  double captured = 0, captured_std = 0;
  double fid = 0, fid_std = 0;
  int folds = 5;
  bool has_dci = true;   // needs >= 2 factor columns
  bool has_tad = true;   // needs binary attributes and n >= 100
  bool has_fid = false;

  nlohmann::json to_json() const {
    nlohmann::json per;
    for (const auto& [name, ps] : latent_quality.per_attribute)
      per[name] = {{"mean", ps.mean},
                   {"std", ps.std},
                   {"metric", ps.is_binary ? "auroc" : "accuracy"},
                   {"folds", ps.folds}};
    nlohmann::json j{
        {"latent_quality",
         {{"per_attribute", per},
          {"mean", latent_quality.mean},
          {"std", latent_quality.std},
          {"skipped", latent_quality.skipped}}},
        {"folds", folds}};
    if (has_dci) j["dci"] = {{"mean", dci}, {"std", dci_std}};
    if (has_tad)
      j["tad"] = {{"score", {{"mean", tad_score}, {"std", tad_std}}},
                  {"captured_attrs", {{"mean", captured}, {"std", captured_std}}}};
    if (has_fid) j["fid_proxy"] = {{"mean", fid}, {"std", fid_std}};
    return j;
  }
};

}  // namespace infodiff::metrics
