// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "infodiff/core/errors.hpp"
#include "infodiff/core/tensor.hpp"

namespace infodiff::diffusion {

// Forward-process schedule. Arrays are indexed by timestep t in 0..T with the
// convention alpha_bar[0] = 1 (t = 0 is the clean data); beta[0] is unused.
template <typename T>
struct Schedule {
  int64_t steps = 0;  // T
  std::vector<T> beta;
  std::vector<T> alpha;
  std::vector<T> alpha_bar;

  void check_t(int64_t t, int64_t lo) const {
    if (t < lo || t > steps)
      throw std::invalid_argument("timestep t=" + std::to_string(t) +
                                  " outside [" + std::to_string(lo) + "," +
                                  std::to_string(steps) + "]");
  }

  // Variance of q(x_{t-1} | x_t, x_0); zero at t = 1 since x_0 is pinned.
  T posterior_variance(int64_t t) const {
    check_t(t, 1);
    return (T(1) - alpha_bar[t - 1]) / (T(1) - alpha_bar[t]) * beta[t];
  }

  // Fixed variance of the t = 1 Gaussian reconstruction likelihood. The
  // posterior variance degenerates to zero there, so the usual beta_1 choice
  // stands in.
  T recon_variance() const { return beta[1]; }
};

template <typename T>
Schedule<T> schedule_from_betas(const std::vector<T>& betas) {
  if (betas.empty()) throw std::invalid_argument("schedule: need T >= 1 betas");
  Schedule<T> s;
  s.steps = static_cast<int64_t>(betas.size());
  s.beta.resize(s.steps + 1, T(0));
  s.alpha.resize(s.steps + 1, T(1));
  s.alpha_bar.resize(s.steps + 1, T(1));
  for (int64_t t = 1; t <= s.steps; ++t) {
    T b = betas[t - 1];
    if (!(b > T(0) && b < T(1)))
      throw std::invalid_argument("schedule: betas must lie in (0, 1)");
    s.beta[t] = b;
    s.alpha[t] = T(1) - b;
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
  }
  return s;
}

// Linear beta schedule, the DDPM default range.
template <typename T>
Schedule<T> make_schedule(int64_t steps, T beta_min = T(1e-4),
                          T beta_max = T(0.02)) {
  if (steps < 1) throw std::invalid_argument("schedule: steps must be >= 1");
  if (!(beta_min > T(0)) || beta_max < beta_min || !(beta_max < T(1)))
    throw std::invalid_argument("schedule: need 0 < beta_min <= beta_max < 1");
  std::vector<T> betas(steps);
  for (int64_t i = 0; i < steps; ++i)
    betas[i] = steps == 1 ? beta_min
                          : beta_min + (beta_max - beta_min) *
                                           static_cast<T>(i) /
                                           static_cast<T>(steps - 1);
  return schedule_from_betas(betas);
}

// A point on the forward chain, with the noise that produced it when known.
template <typename T>
struct NoisyState {
  Tensor<T> x;
  int64_t t = 0;
  std::optional<Tensor<T>> eps;
};

// x_t = sqrt(alpha_bar_t) x_0 + sqrt(1 - alpha_bar_t) eps
template <typename T>
Tensor<T> q_sample(const Tensor<T>& x0, int64_t t, const Tensor<T>& eps,
                   const Schedule<T>& s) {
  s.check_t(t, 0);
  T a = std::sqrt(s.alpha_bar[t]);
  T b = std::sqrt(T(1) - s.alpha_bar[t]);
  Tensor<T> out(x0.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

// x0_hat = (x_t - sqrt(1 - alpha_bar_t) eps) / sqrt(alpha_bar_t)
template <typename T>
Tensor<T> predict_x0(const Tensor<T>& xt, int64_t t, const Tensor<T>& eps,
                     const Schedule<T>& s) {
  s.check_t(t, 0);
  T a = std::sqrt(s.alpha_bar[t]);
  T b = std::sqrt(T(1) - s.alpha_bar[t]);
  Tensor<T> out(xt.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = (xt[i] - b * eps[i]) / a;
  return out;
}

template <typename T>
struct PosteriorParams {
  Tensor<T> mean;
  T variance;
};

// Gaussian posterior q(x_{t-1} | x_t, x_0).
template <typename T>
PosteriorParams<T> q_posterior(const Tensor<T>& x0, const Tensor<T>& xt,
                               int64_t t, const Schedule<T>& s) {
  s.check_t(t, 1);
  T denom = T(1) - s.alpha_bar[t];
  T c0 = std::sqrt(s.alpha_bar[t - 1]) * s.beta[t] / denom;
  T ct = std::sqrt(s.alpha[t]) * (T(1) - s.alpha_bar[t - 1]) / denom;
  Tensor<T> mean(x0.shape());
  for (int64_t i = 0; i < mean.size(); ++i)
    mean[i] = c0 * x0[i] + ct * xt[i];
  return {std::move(mean), s.posterior_variance(t)};
}

// Mean of p(x_{t-1} | x_t, z) given the predicted noise:
// (x_t - beta_t / sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_t)
template <typename T>
Tensor<T> decoder_mean(const Tensor<T>& xt, int64_t t, const Tensor<T>& eps_hat,
                       const Schedule<T>& s) {
  s.check_t(t, 1);
  T inv_sa = T(1) / std::sqrt(s.alpha[t]);
  T k = (T(1) - s.alpha[t]) / std::sqrt(T(1) - s.alpha_bar[t]);
  Tensor<T> out(xt.shape());
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = inv_sa * (xt[i] - k * eps_hat[i]);
  return out;
}

// Deterministic DDIM-style encode step t -> t+1 using eps_hat evaluated at t:
// x_{t+1} = sqrt(alpha_bar_{t+1}) x0_hat + sqrt(1 - alpha_bar_{t+1}) eps_hat
template <typename T>
Tensor<T> ddim_encode_step(const Tensor<T>& xt, int64_t t,
                           const Tensor<T>& eps_hat, const Schedule<T>& s) {
  s.check_t(t, 0);
  if (t == s.steps)
    throw std::invalid_argument("ddim_encode_step: already at t = T");
  Tensor<T> x0_hat = predict_x0(xt, t, eps_hat, s);
  T a = std::sqrt(s.alpha_bar[t + 1]);
  T b = std::sqrt(T(1) - s.alpha_bar[t + 1]);
  Tensor<T> out(xt.shape());
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = a * x0_hat[i] + b * eps_hat[i];
  return out;
}

// Deterministic DDIM decode step t -> t-1 (eta = 0) using eps_hat at t.
template <typename T>
Tensor<T> ddim_decode_step(const Tensor<T>& xt, int64_t t,
                           const Tensor<T>& eps_hat, const Schedule<T>& s) {
  s.check_t(t, 1);
  Tensor<T> x0_hat = predict_x0(xt, t, eps_hat, s);
  T a = std::sqrt(s.alpha_bar[t - 1]);
  T b = std::sqrt(T(1) - s.alpha_bar[t - 1]);
  Tensor<T> out(xt.shape());
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = a * x0_hat[i] + b * eps_hat[i];
  return out;
}

}  // namespace infodiff::diffusion
