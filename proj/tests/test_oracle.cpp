// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "infodiff/oracle.hpp"

using namespace infodiff;
namespace orc = infodiff::oracle;

namespace {

orc::DiscreteToyModel uniform_permutation_model(int64_t k) {
  orc::DiscreteToyModel m;
  m.q_x0.assign(static_cast<size_t>(k), 1.0 / static_cast<double>(k));
  m.p_z.assign(static_cast<size_t>(k), 1.0 / static_cast<double>(k));
  for (int64_t i = 0; i < k; ++i) {
    std::vector<double> row(static_cast<size_t>(k), 0.0);
    row[static_cast<size_t>((i + 1) % k)] = 1.0;  // deterministic permutation
    m.q_z_given_x0.push_back(row);
  }
  m.validate();
  return m;
}

}  // namespace

TEST_CASE("toy model validation enforces caps and simplex rows") {
  Rng rng(1);
  auto m = orc::DiscreteToyModel::random(rng, 5, 3);
  m.validate();
  double s = 0;
  for (double v : m.marginal_z()) s += v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(orc::DiscreteToyModel::random(rng, 9, 3),
                  std::invalid_argument);
  CHECK_THROWS_AS(orc::DiscreteToyModel::random(rng, 4, 5),
                  std::invalid_argument);

  auto bad = m;
  bad.q_x0[0] += 0.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = m;
  bad.q_z_given_x0[1][0] = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("discrete KL conventions: 0 log 0 and the infinity sentinel") {
  // zero in the first argument contributes nothing
  CHECK(orc::discrete_kl({0.0, 1.0}, {0.5, 0.5}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // zero in the second argument against positive mass reports +inf
  CHECK(std::isinf(orc::discrete_kl({0.5, 0.5}, {1.0, 0.0})));
  CHECK(orc::discrete_kl({0.3, 0.7}, {0.3, 0.7}) == 0.0);  // exactly

  // Gibbs strictness: KL = 0 iff the distributions are equal
  Rng rng(2);
  for (int it = 0; it < 50; ++it) {
    auto m = orc::DiscreteToyModel::random(rng, 2, 4);
    double kl = orc::discrete_kl(m.q_z_given_x0[0], m.q_z_given_x0[1]);
    bool equal = m.q_z_given_x0[0] == m.q_z_given_x0[1];
    CHECK(kl >= 0.0);
    CHECK((kl == 0.0) == equal);
    CHECK(orc::discrete_kl(m.p_z, m.p_z) == 0.0);
  }
}

TEST_CASE("mi decomposition: independence and deterministic coding cases") {
  // identical rows: MI = 0, both sides are -KL(row || p_z)
  orc::DiscreteToyModel ind;
  ind.q_x0 = {0.3, 0.7};
  ind.p_z = {0.25, 0.25, 0.5};
  ind.q_z_given_x0 = {{0.2, 0.3, 0.5}, {0.2, 0.3, 0.5}};
  ind.validate();
  CHECK(orc::mutual_information(ind) == doctest::Approx(0.0).epsilon(1e-14));
  auto r = orc::mi_decomposition_check(ind);
  CHECK(r.gap < 1e-12);
  CHECK(r.lhs ==
        doctest::Approx(-orc::discrete_kl(ind.q_z_given_x0[0], ind.p_z))
            .epsilon(1e-12));

  // permutation rows with uniform marginals: MI = log|Z|, marginal KL = 0
  auto perm = uniform_permutation_model(4);
  CHECK(orc::mutual_information(perm) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(orc::discrete_kl(perm.marginal_z(), perm.p_z) ==
        doctest::Approx(0.0).epsilon(1e-14));
  auto r2 = orc::mi_decomposition_check(perm);
  CHECK(r2.lhs == doctest::Approx(-std::log(4.0)).epsilon(1e-12));
  CHECK(r2.gap < 1e-12);
}

TEST_CASE("mi decomposition holds on 100 random models") {
  Rng rng(33);
  double worst = 0;
  for (int it = 0; it < 100; ++it) {
    auto m = orc::DiscreteToyModel::random(rng, rng.uniform_int(2, 8),
                                           rng.uniform_int(2, 4));
    worst = std::max(worst, orc::mi_decomposition_check(m).gap);
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("objective rewrite identity") {
  Rng rng(44);
  auto m = orc::DiscreteToyModel::random(rng, 5, 4);

  // zeta = 1 collapses both sides to -lam KL(q(z)||p)
  auto r1 = orc::objective_rewrite_check(m, 1.0, 0.7);
  double kl_marg = orc::discrete_kl(m.marginal_z(), m.p_z);
  CHECK(r1.direct == doctest::Approx(-0.7 * kl_marg).epsilon(1e-12));
  CHECK(r1.rewritten == doctest::Approx(-0.7 * kl_marg).epsilon(1e-12));
  CHECK(r1.gap < 1e-12);

  // zeta = 0, lam = 1: rewritten side is exactly -E[KL(q(z|x0)||p)]
  auto r2 = orc::objective_rewrite_check(m, 0.0, 1.0);
  double e_kl = 0;
  for (size_t i = 0; i < m.q_x0.size(); ++i)
    e_kl += m.q_x0[i] * orc::discrete_kl(m.q_z_given_x0[i], m.p_z);
  CHECK(r2.rewritten == doctest::Approx(-e_kl).epsilon(1e-12));
  CHECK(r2.gap < 1e-12);

  // 100 random draws including negative and >1 coefficients
  double worst = 0;
  for (int it = 0; it < 100; ++it) {
    auto mm = orc::DiscreteToyModel::random(rng, rng.uniform_int(2, 8),
                                            rng.uniform_int(2, 4));
    double zeta = rng.uniform(-1.0, 2.0);
    double lam = rng.uniform(-1.0, 2.0);
    worst = std::max(worst, orc::objective_rewrite_check(mm, zeta, lam).gap);
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("linear-gaussian elbo: degenerate encoder and vacuous sums") {
  orc::LinearToyModel degen;
  degen.enc_a = 0.0;
  degen.enc_b = 0.0;
  degen.enc_log_s2 = 0.0;  // unit-variance, zero-mean encoder
  degen.den_c = {0.0, 0.3};
  degen.den_d = {0.0, 0.2};
  degen.den_e = {0.0, 0.1};

  auto r = orc::linear_gaussian_elbo_check(1, 5, 20000, &degen);
  CHECK(r.exact_kl_z == 0.0);
  CHECK(r.exact_denoise == 0.0);  // T = 1: no denoise sum on either side
  CHECK(std::abs(r.mc_elbo - r.exact) <= 3.0 * r.stderr_);

  // the empirical kl_z term is zero too
  auto sched = diffusion::schedule_from_betas(std::vector<double>{0.2});
  auto prior = objectives::Prior<double>::standard_normal(1);
  Rng rng(6);
  Tensor<double> x0 = rng.normal_tensor<double>({64, 1});
  ad::Graph<double> g;
  g.grad_enabled = false;
  auto terms = objectives::elbo_terms(g, x0, degen, sched, prior, rng);
  CHECK(terms.kl_z.value()[0] == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(terms.denoise_sum.value()[0] == 0.0);
}

TEST_CASE("linear-gaussian elbo matches closed form within 3 sigma for T=1..3") {
  for (int64_t steps = 1; steps <= 3; ++steps) {
    auto r = orc::linear_gaussian_elbo_check(steps, 101 + steps);
    INFO("T=", steps, " mc=", r.mc_elbo, " exact=", r.exact,
         " stderr=", r.stderr_);
    CHECK(std::isfinite(r.exact));
    CHECK(r.stderr_ > 0.0);
    CHECK(std::abs(r.mc_elbo - r.exact) <= 3.0 * r.stderr_);
  }
}

TEST_CASE("discrete mmd equals the dense estimator on one-hot embeddings") {
  Rng rng(9);
  auto m = orc::DiscreteToyModel::random(rng, 3, 4);
  auto cq = orc::sample_counts(m.marginal_z(), 200, rng);
  auto cp = orc::sample_counts(m.p_z, 150, rng);

  auto one_hot = [&](const std::vector<int64_t>& counts, int64_t n) {
    Tensor<double> out({n, 4});
    int64_t row = 0;
    for (size_t k = 0; k < counts.size(); ++k)
      for (int64_t c = 0; c < counts[k]; ++c)
        out[row++ * 4 + static_cast<int64_t>(k)] = 1.0;
    return out;
  };
  double dense = objectives::mmd_value(one_hot(cq, 200), one_hot(cp, 150),
                                       std::vector<double>{1.0});
  double fast = orc::discrete_mmd(cq, cp, 1.0);
  CHECK(fast == doctest::Approx(dense).epsilon(1e-10));
}

TEST_CASE("divergence substitution: zero at the optimum, positive when perturbed") {
  Rng rng(12);
  auto m = orc::DiscreteToyModel::random(rng, 4, 4);
  auto rep = orc::divergence_substitution_check(m, 2026);
  CHECK(rep.kl_at_match == 0.0);
  CHECK(rep.mmd_at_match < 0.01);
  CHECK(rep.kl_perturbed > 0.0);
  CHECK(rep.null_q99 > 0.0);
  CHECK(rep.mmd_perturbed > 3.0 * rep.null_q99);
  CHECK(rep.pass);
}

TEST_CASE("oracle suite is deterministic and green") {
  auto a = orc::run_all(4242, 100);
  auto b = orc::run_all(4242, 100);
  CHECK(a.dump() == b.dump());
  CHECK(a.at("ok").get<bool>());
  CHECK(a.at("mi_decomposition").at("max_gap").get<double>() < 1e-10);
  CHECK(a.at("objective_rewrite").at("max_gap").get<double>() < 1e-10);
}
