// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "infodiff/core/module.hpp"
#include "infodiff/core/rng.hpp"

namespace infodiff::nn {

struct GradCheckOptions {
  double eps = 1e-5;
  int64_t coords_per_param = 8;  // random coordinates probed per parameter
  uint64_t seed = 1234;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  double at_analytic = 0.0;
  double at_numeric = 0.0;
  std::string at_param;
  int64_t coords_checked = 0;

  bool ok(double tol) const { return max_rel_err <= tol; }
};

// Central finite-difference check of analytic gradients.
//
// `loss_grad` must zero the grads, run forward+backward with the current
// parameter values and return the loss; `loss_only` must return the loss for
// the current values with identical stochastic draws (reseed inside).
template <typename T>
GradCheckReport gradcheck(const ParamList<T>& params,
                          const std::function<double()>& loss_grad,
                          const std::function<double()>& loss_only,
                          GradCheckOptions opt = {}) {
  static_assert(std::is_same_v<T, double>,
                "gradcheck needs double precision to trust the differences");
  GradCheckReport rep;
  loss_grad();
  Rng pick(opt.seed);
  for (Parameter<T>* p : params) {
    int64_t n = p->value.size();
    int64_t probes = std::min<int64_t>(opt.coords_per_param, n);
    for (int64_t k = 0; k < probes; ++k) {
      int64_t i = probes == n ? k : pick.uniform_int(0, n - 1);
      T keep = p->value[i];
      p->value[i] = keep + static_cast<T>(opt.eps);
      double lp = loss_only();
      p->value[i] = keep - static_cast<T>(opt.eps);
      double lm = loss_only();
      p->value[i] = keep;
      double fd = (lp - lm) / (2.0 * opt.eps);
      double an = static_cast<double>(p->grad[i]);
      double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      double rel = std::abs(fd - an) / denom;
      ++rep.coords_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.at_analytic = an;
        rep.at_numeric = fd;
        rep.at_param = p->name;
      }
    }
  }
  return rep;
}

}  // namespace infodiff::nn
