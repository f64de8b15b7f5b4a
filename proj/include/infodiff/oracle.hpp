// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
//
// Brute-force verification of the Appendix A / B derivations on tiny models
// where everything is exactly enumerable or closed-form.
#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include <json.hpp>

#include "infodiff/objectives.hpp"

namespace infodiff::oracle {

// ---- discrete toy machinery -----------------------------------------------------

constexpr int kMaxX0 = 8;
constexpr int kMaxZ = 4;

struct DiscreteToyModel {
  std::vector<double> q_x0;                       // |X0|
  std::vector<std::vector<double>> q_z_given_x0;  // |X0| x |Z|
  std::vector<double> p_z;                        // |Z|

  int64_t nx() const { return static_cast<int64_t>(q_x0.size()); }
  int64_t nz() const { return static_cast<int64_t>(p_z.size()); }

  void validate() const {
    auto check_simplex = [](const std::vector<double>& v, const char* what) {
      double s = 0;
      for (double p : v) {
        if (p < 0) throw std::invalid_argument(std::string(what) + ": negative entry");
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-12)
        throw std::invalid_argument(std::string(what) + ": does not sum to 1");
    };
    if (nx() < 1 || nx() > kMaxX0 || nz() < 1 || nz() > kMaxZ)
      throw std::invalid_argument("toy model: alphabet caps are |X0|<=8, |Z|<=4");
    if (static_cast<int64_t>(q_z_given_x0.size()) != nx())
      throw std::invalid_argument("toy model: q_z_given_x0 needs one row per x0");
    check_simplex(q_x0, "q_x0");
    check_simplex(p_z, "p_z");
    for (const auto& row : q_z_given_x0) {
      if (static_cast<int64_t>(row.size()) != nz())
        throw std::invalid_argument("toy model: row width != |Z|");
      check_simplex(row, "q_z_given_x0 row");
    }
  }

  // q_phi(z) = sum_x q(x0) q(z | x0)
  std::vector<double> marginal_z() const {
    std::vector<double> qz(static_cast<size_t>(nz()), 0.0);
    for (int64_t i = 0; i < nx(); ++i)
      for (int64_t k = 0; k < nz(); ++k)
        qz[static_cast<size_t>(k)] +=
            q_x0[static_cast<size_t>(i)] * q_z_given_x0[static_cast<size_t>(i)][static_cast<size_t>(k)];
    return qz;
  }

  static DiscreteToyModel random(Rng& rng, int64_t nx, int64_t nz) {
    auto simplex = [&rng](int64_t n) {
      std::vector<double> v(static_cast<size_t>(n));
      double s = 0;
      for (double& p : v) {
        p = -std::log(rng.uniform());  // Exp(1) gives a Dirichlet(1,...,1) draw
        s += p;
      }
      for (double& p : v) p /= s;
      return v;
    };
    DiscreteToyModel m;
    m.q_x0 = simplex(nx);
    m.p_z = simplex(nz);
    for (int64_t i = 0; i < nx; ++i) m.q_z_given_x0.push_back(simplex(nz));
    m.validate();
    return m;
  }
};

// KL(p || q) with 0 log 0 := 0; a zero in q against positive p gives the
// +inf sentinel (reported, never thrown).
inline double discrete_kl(const std::vector<double>& p,
                          const std::vector<double>& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("discrete_kl: size mismatch");
  double acc = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    acc += p[i] * std::log(p[i] / q[i]);
  }
  return acc;
}

// I(x0; z) under q(x0) q(z|x0), by enumeration of the joint.
inline double mutual_information(const DiscreteToyModel& m) {
  std::vector<double> qz = m.marginal_z();
  double mi = 0;
  for (int64_t i = 0; i < m.nx(); ++i)
    for (int64_t k = 0; k < m.nz(); ++k) {
      double joint = m.q_x0[static_cast<size_t>(i)] *
                     m.q_z_given_x0[static_cast<size_t>(i)][static_cast<size_t>(k)];
      if (joint == 0.0) continue;
      mi += joint * std::log(m.q_z_given_x0[static_cast<size_t>(i)][static_cast<size_t>(k)] /
                             qz[static_cast<size_t>(k)]);
    }
  return mi;
}

// ---- Appendix A identity checks --------------------------------------------------

struct MiCheck {
  double lhs = 0, rhs = 0, gap = 0;
};

// Eq. 25: -E_{q(x0)}[KL(q(z|x0) || p(z))] = -KL(q(z) || p(z)) - I(x0; z)
inline MiCheck mi_decomposition_check(const DiscreteToyModel& m) {
  m.validate();
  MiCheck r;
  for (int64_t i = 0; i < m.nx(); ++i)
    r.lhs -= m.q_x0[static_cast<size_t>(i)] *
             discrete_kl(m.q_z_given_x0[static_cast<size_t>(i)], m.p_z);
  r.rhs = -discrete_kl(m.marginal_z(), m.p_z) - mutual_information(m);
  r.gap = r.lhs == r.rhs ? 0.0 : std::abs(r.lhs - r.rhs);
  return r;
}

struct RewriteCheck {
  double direct = 0, rewritten = 0, gap = 0;
};

// Eq. 26-30: -lam KL(q(z)||p) - I + zeta I
//            == -(lam+zeta-1) KL(q(z)||p) - (1-zeta) E[KL(q(z|x0)||p)].
// Purely algebraic, so any real zeta, lam are accepted.
inline RewriteCheck objective_rewrite_check(const DiscreteToyModel& m,
                                            double zeta, double lam) {
  m.validate();
  double kl_marg = discrete_kl(m.marginal_z(), m.p_z);
  double mi = mutual_information(m);
  double e_kl = 0;
  for (int64_t i = 0; i < m.nx(); ++i)
    e_kl += m.q_x0[static_cast<size_t>(i)] *
            discrete_kl(m.q_z_given_x0[static_cast<size_t>(i)], m.p_z);
  RewriteCheck r;
  r.direct = -lam * kl_marg - mi + zeta * mi;
  r.rewritten = -(lam + zeta - 1.0) * kl_marg - (1.0 - zeta) * e_kl;
  r.gap = r.direct == r.rewritten ? 0.0 : std::abs(r.direct - r.rewritten);
  return r;
}

// ---- linear-Gaussian ELBO oracle --------------------------------------------------

namespace detail {

// Affine form c + w . u over a fixed basis of four independent N(0,1)
// variables (x0', eps_1, eta, eps_t). Squared expectations are then exact.
struct Affine {
  double c = 0;
  std::array<double, 4> w{};

  Affine operator+(const Affine& o) const {
    Affine r;
    r.c = c + o.c;
    for (int i = 0; i < 4; ++i) r.w[static_cast<size_t>(i)] = w[static_cast<size_t>(i)] + o.w[static_cast<size_t>(i)];
    return r;
  }
  Affine operator-(const Affine& o) const {
    Affine r;
    r.c = c - o.c;
    for (int i = 0; i < 4; ++i) r.w[static_cast<size_t>(i)] = w[static_cast<size_t>(i)] - o.w[static_cast<size_t>(i)];
    return r;
  }
  Affine operator*(double s) const {
    Affine r;
    r.c = c * s;
    for (int i = 0; i < 4; ++i) r.w[static_cast<size_t>(i)] = w[static_cast<size_t>(i)] * s;
    return r;
  }
  Affine shifted(double s) const {
    Affine r = *this;
    r.c += s;
    return r;
  }
  double mean_sq() const {
    double v = c * c;
    for (double x : w) v += x * x;
    return v;
  }
};

}  // namespace detail

// A 1-D model whose encoder and denoiser are linear with known coefficients,
// so every Eq. 4 term has a closed form. Shapes follow the (n, 1) convention
// the real models use.
struct LinearToyModel {
  double enc_a = 0, enc_b = 0, enc_log_s2 = 0;
  std::vector<double> den_c, den_d, den_e;  // index t in 1..T, slot 0 unused

  nn::Posterior<double> encode(ad::Graph<double>& g, ad::Var<double> x) const {
    nn::Posterior<double> p;
    p.family = nn::LatentFamily::gaussian;
    p.mean = ad::scalar_add(g, ad::scalar_mul(g, x, enc_a), enc_b);
    p.log_var = g.constant(Tensor<double>::full(x.shape(), enc_log_s2));
    return p;
  }

  ad::Var<double> eps_theta(ad::Graph<double>& g, ad::Var<double> xt,
                            const std::vector<int64_t>& ts,
                            ad::Var<double> z) const {
    int64_t n = xt.shape()[0];
    Tensor<double> c({n, 1}), d({n, 1}), e({n, 1});
    for (int64_t i = 0; i < n; ++i) {
      c[i] = den_c[static_cast<size_t>(ts[i])];
      d[i] = den_d[static_cast<size_t>(ts[i])];
      e[i] = den_e[static_cast<size_t>(ts[i])];
    }
    auto term = ad::add(g, ad::mul(g, xt, g.constant(c)),
                        ad::mul(g, z, g.constant(d)));
    return ad::add(g, term, g.constant(e));
  }

  static LinearToyModel random(int64_t steps, Rng& rng) {
    LinearToyModel m;
    m.enc_a = rng.uniform(-1.0, 1.0);
    m.enc_b = rng.uniform(-0.5, 0.5);
    m.enc_log_s2 = rng.uniform(-1.0, 0.5);
    m.den_c.resize(static_cast<size_t>(steps) + 1);
    m.den_d.resize(static_cast<size_t>(steps) + 1);
    m.den_e.resize(static_cast<size_t>(steps) + 1);
    for (int64_t t = 1; t <= steps; ++t) {
      m.den_c[static_cast<size_t>(t)] = rng.uniform(-0.8, 0.8);
      m.den_d[static_cast<size_t>(t)] = rng.uniform(-0.8, 0.8);
      m.den_e[static_cast<size_t>(t)] = rng.uniform(-0.3, 0.3);
    }
    return m;
  }
};

struct LinGaussCheck {
  double mc_elbo = 0, exact = 0, stderr_ = 0;
  double exact_recon = 0, exact_denoise = 0, exact_kl_z = 0, exact_prior = 0;
};

// Closed-form L_D for the linear toy with x0 ~ N(mu0, v0), against the
// Monte-Carlo elbo_terms estimate. Exact expectations use the affine-form
// trick: every residual is affine in four independent standard normals.
inline LinGaussCheck linear_gaussian_elbo_check(
    int64_t steps, uint64_t seed, int64_t draws = 100000,
    const LinearToyModel* fixed = nullptr, double mu0 = 0.3, double v0 = 0.8) {
  if (steps < 1 || steps > 3)
    throw std::invalid_argument("linear_gaussian_elbo_check: T must be in 1..3");
  Rng rng(splitmix64(seed));
  std::vector<double> betas;
  for (int64_t t = 0; t < steps; ++t) betas.push_back(rng.uniform(0.1, 0.4));
  auto sched = diffusion::schedule_from_betas(betas);
  LinearToyModel model = fixed ? *fixed : LinearToyModel::random(steps, rng);

  using detail::Affine;
  const double sv0 = std::sqrt(v0);
  Affine x0{mu0, {sv0, 0, 0, 0}};
  const double s2 = std::exp(model.enc_log_s2);
  Affine z{model.enc_a * mu0 + model.enc_b,
           {model.enc_a * sv0, 0, std::sqrt(s2), 0}};

  LinGaussCheck out;
  {  // recon: E[log N(x0 ; mu_theta(x1, 1, z), beta_1)]
    Affine x1 = x0 * std::sqrt(sched.alpha_bar[1]);
    x1.w[1] = std::sqrt(1.0 - sched.alpha_bar[1]);
    Affine eps_hat =
        (x1 * model.den_c[1] + z * model.den_d[1]).shifted(model.den_e[1]);
    double k1 = sched.beta[1] / std::sqrt(1.0 - sched.alpha_bar[1]);
    Affine mu = (x1 - eps_hat * k1) * (1.0 / std::sqrt(sched.alpha[1]));
    double var1 = sched.recon_variance();
    out.exact_recon = -0.5 * (1.8378770664093454835606594728112353 + std::log(var1)) -
                      (x0 - mu).mean_sq() / (2.0 * var1);
  }
  for (int64_t t = 2; t <= steps; ++t) {  // sum of posterior-matching KLs
    Affine xt = x0 * std::sqrt(sched.alpha_bar[t]);
    xt.w[3] = std::sqrt(1.0 - sched.alpha_bar[t]);
    double denom = 1.0 - sched.alpha_bar[t];
    Affine mu_q = x0 * (std::sqrt(sched.alpha_bar[t - 1]) * sched.beta[t] / denom) +
                  xt * (std::sqrt(sched.alpha[t]) * (1.0 - sched.alpha_bar[t - 1]) / denom);
    Affine eps_hat = (xt * model.den_c[static_cast<size_t>(t)] +
                      z * model.den_d[static_cast<size_t>(t)])
                         .shifted(model.den_e[static_cast<size_t>(t)]);
    double kco = sched.beta[t] / std::sqrt(1.0 - sched.alpha_bar[t]);
    Affine mu_p = (xt - eps_hat * kco) * (1.0 / std::sqrt(sched.alpha[t]));
    out.exact_denoise +=
        (mu_q - mu_p).mean_sq() / (2.0 * sched.posterior_variance(t));
  }
  {  // kl_z and the prior constant
    double m2 = (model.enc_a * mu0 + model.enc_b) *
                    (model.enc_a * mu0 + model.enc_b) +
                model.enc_a * model.enc_a * v0;
    out.exact_kl_z = 0.5 * (s2 + m2 - 1.0 - model.enc_log_s2);
    double abar = sched.alpha_bar[steps];
    out.exact_prior = 0.5 * (abar * (mu0 * mu0 + v0) - abar - std::log1p(-abar));
  }
  out.exact =
      out.exact_recon - out.exact_prior - out.exact_denoise - out.exact_kl_z;

  // Monte-Carlo side through the real estimator, batched for the stderr.
  auto prior = objectives::Prior<double>::standard_normal(1);
  const int64_t batch = 500;
  const int64_t reps = std::max<int64_t>(1, draws / batch);
  std::vector<double> means;
  means.reserve(static_cast<size_t>(reps));
  for (int64_t r = 0; r < reps; ++r) {
    Tensor<double> x0b({batch, 1});
    for (int64_t i = 0; i < batch; ++i) x0b[i] = mu0 + sv0 * rng.normal();
    ad::Graph<double> g;
    g.grad_enabled = false;
    auto terms = objectives::elbo_terms(g, x0b, model, sched, prior, rng);
    means.push_back(terms.recon.value()[0] - static_cast<double>(terms.prior_xT) -
                    terms.denoise_sum.value()[0] - terms.kl_z.value()[0]);
  }
  double mean = 0;
  for (double v : means) mean += v;
  mean /= static_cast<double>(reps);
  double var = 0;
  for (double v : means) var += (v - mean) * (v - mean);
  var /= static_cast<double>(reps - 1);
  out.mc_elbo = mean;
  out.stderr_ = std::sqrt(var / static_cast<double>(reps));
  return out;
}

// ---- divergence substitution (Prop. 5.2) ------------------------------------------

// V-statistic MMD^2 between two empirical symbol distributions under the
// one-hot RBF embedding: k(i,j) = 1 if i == j else exp(-1/sigma^2), since
// ||e_i - e_j||^2 = 2. Equal to objectives::mmd_value on the one-hot batches.
inline double discrete_mmd(const std::vector<int64_t>& counts_q,
                           const std::vector<int64_t>& counts_p,
                           double sigma_sq = 1.0) {
  size_t k = counts_q.size();
  if (counts_p.size() != k)
    throw std::invalid_argument("discrete_mmd: alphabet mismatch");
  double nq = 0, np = 0;
  for (int64_t c : counts_q) nq += static_cast<double>(c);
  for (int64_t c : counts_p) np += static_cast<double>(c);
  if (nq < 2 || np < 2)
    throw std::invalid_argument("discrete_mmd: need at least 2 samples per side");
  double off = std::exp(-1.0 / sigma_sq);
  double acc = 0;
  for (size_t i = 0; i < k; ++i)
    for (size_t j = 0; j < k; ++j) {
      double kij = i == j ? 1.0 : off;
      double dq_i = static_cast<double>(counts_q[i]) / nq -
                    static_cast<double>(counts_p[i]) / np;
      double dq_j = static_cast<double>(counts_q[j]) / nq -
                    static_cast<double>(counts_p[j]) / np;
      acc += dq_i * dq_j * kij;
    }
  return acc;
}

inline std::vector<int64_t> sample_counts(const std::vector<double>& dist,
                                          int64_t n, Rng& rng) {
  std::vector<int64_t> counts(dist.size(), 0);
  for (int64_t i = 0; i < n; ++i) {
    double u = rng.uniform();
    double acc = 0;
    size_t k = 0;
    for (; k < dist.size(); ++k) {
      acc += dist[k];
      if (u <= acc) break;
    }
    counts[std::min(k, dist.size() - 1)]++;
  }
  return counts;
}

struct DivergenceReport {
  double kl_at_match = 0;
  double mmd_at_match = 0;
  double kl_perturbed = 0;
  double mmd_perturbed = 0;
  double null_q99 = 0;
  bool pass = false;
};

// At q_phi(z) == p(z) both divergences vanish; an eps total-variation
// perturbation makes both strictly positive, with the MMD compared against
// the 99th percentile of its sampling null.
inline DivergenceReport divergence_substitution_check(const DiscreteToyModel& m,
                                                      uint64_t seed,
                                                      double eps = 0.1,
                                                      int64_t n = 10000) {
  m.validate();
  Rng rng(splitmix64(seed ^ 0x6469766572ULL));
  DivergenceReport rep;

  rep.kl_at_match = discrete_kl(m.p_z, m.p_z);  // exactly 0
  rep.mmd_at_match = discrete_mmd(sample_counts(m.p_z, n, rng),
                                  sample_counts(m.p_z, n, rng));

  // move eps of mass from the heaviest symbol to the lightest
  std::vector<double> pert = m.p_z;
  size_t hi = 0, lo = 0;
  for (size_t i = 1; i < pert.size(); ++i) {
    if (pert[i] > pert[hi]) hi = i;
    if (pert[i] < pert[lo]) lo = i;
  }
  if (hi == lo || pert[hi] < eps)
    throw std::invalid_argument("divergence check: cannot perturb this p_z");
  pert[hi] -= eps;
  pert[lo] += eps;
  rep.kl_perturbed = discrete_kl(pert, m.p_z);
  rep.mmd_perturbed =
      discrete_mmd(sample_counts(pert, n, rng), sample_counts(m.p_z, n, rng));

  // sampling null: both sides drawn from p_z
  std::vector<double> null_vals;
  for (int it = 0; it < 300; ++it)
    null_vals.push_back(discrete_mmd(sample_counts(m.p_z, n, rng),
                                     sample_counts(m.p_z, n, rng)));
  std::sort(null_vals.begin(), null_vals.end());
  rep.null_q99 = null_vals[static_cast<size_t>(
      std::floor(0.99 * static_cast<double>(null_vals.size() - 1)))];

  rep.pass = rep.kl_at_match == 0.0 && rep.mmd_at_match < 0.01 &&
             rep.kl_perturbed > 0.0 && rep.mmd_perturbed > 3.0 * rep.null_q99;
  return rep;
}

// ---- full suite -------------------------------------------------------------------

// Runs every oracle with seeded randomness; `ok` false on any gap breach.
// Backs the `infodiff verify` subcommand.
inline nlohmann::json run_all(uint64_t seed, int64_t instances = 100) {
  Rng rng(splitmix64(seed ^ 0x6f7261636c65ULL));
  nlohmann::json rep;
  bool ok = true;

  double worst_mi = 0, worst_rw = 0;
  for (int64_t i = 0; i < instances; ++i) {
    auto m = DiscreteToyModel::random(rng, rng.uniform_int(2, kMaxX0),
                                      rng.uniform_int(2, kMaxZ));
    worst_mi = std::max(worst_mi, mi_decomposition_check(m).gap);
    double zeta = rng.uniform(-1.0, 2.0);
    double lam = rng.uniform(-1.0, 2.0);
    worst_rw = std::max(worst_rw, objective_rewrite_check(m, zeta, lam).gap);
  }
  ok = ok && worst_mi < 1e-10 && worst_rw < 1e-10;
  rep["mi_decomposition"] = {{"instances", instances}, {"max_gap", worst_mi}};
  rep["objective_rewrite"] = {{"instances", instances}, {"max_gap", worst_rw}};

  nlohmann::json lin = nlohmann::json::array();
  for (int64_t t = 1; t <= 3; ++t) {
    auto r = linear_gaussian_elbo_check(t, seed + static_cast<uint64_t>(t));
    bool pass = std::abs(r.mc_elbo - r.exact) <= 3.0 * r.stderr_;
    ok = ok && pass;
    lin.push_back({{"T", t},
                   {"mc_elbo", r.mc_elbo},
                   {"exact", r.exact},
                   {"stderr", r.stderr_},
                   {"pass", pass}});
  }
  rep["linear_gaussian_elbo"] = lin;

  auto m = DiscreteToyModel::random(rng, 4, 4);
  auto div = divergence_substitution_check(m, seed);
  ok = ok && div.pass;
  rep["divergence_substitution"] = {{"kl_at_match", div.kl_at_match},
                                    {"mmd_at_match", div.mmd_at_match},
                                    {"kl_perturbed", div.kl_perturbed},
                                    {"mmd_perturbed", div.mmd_perturbed},
                                    {"null_q99", div.null_q99},
                                    {"pass", div.pass}};
  rep["ok"] = ok;
  return rep;
}

}  // namespace infodiff::oracle
