// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "infodiff/model.hpp"
#include "infodiff/objectives.hpp"

namespace infodiff::sampler {

enum class SampleMode {
  posterior_conditioned,
  prior_two_phase,
  learned_prior,
  reconstruction,
  interpolation,
};

inline std::string to_string(SampleMode m) {
  switch (m) {
    case SampleMode::posterior_conditioned: return "posterior_conditioned";
    case SampleMode::prior_two_phase: return "prior_two_phase";
    case SampleMode::learned_prior: return "learned_prior";
    case SampleMode::reconstruction: return "reconstruction";
    case SampleMode::interpolation: return "interpolation";
  }
  return "?";
}

template <typename T>
struct SampleRequest {
  SampleMode mode = SampleMode::posterior_conditioned;
  int64_t count = 1;
  int64_t steps = -1;  // -1: the schedule's T
  uint64_t seed = 0;
  std::optional<Tensor<T>> z_source;
  std::optional<std::pair<Tensor<T>, Tensor<T>>> endpoints;

  void validate(int64_t sched_steps) const {
    if (count < 0) throw ConfigError("sample request: count must be >= 0");
    if (steps != -1 && (steps < 1 || steps > sched_steps))
      throw ConfigError("sample request: steps must be in 1..T");
    if (mode == SampleMode::posterior_conditioned && !z_source)
      throw ConfigError("sample request: posterior_conditioned needs z_source");
    if (mode == SampleMode::interpolation && !endpoints)
      throw ConfigError("sample request: interpolation needs endpoints");
  }
};

namespace detail {

constexpr uint64_t kNoisePurpose = 0x78;   // 'x'
constexpr uint64_t kLatentPurpose = 0x7a;  // 'z'

inline uint64_t chain_seed(uint64_t seed, int64_t chain) {
  return splitmix64(seed ^ (0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(chain)));
}

// Noise for one chain at one step; order-free so phase code can't desync it.
template <typename T>
void fill_chain_noise(T* dst, int64_t d, uint64_t seed, int64_t chain,
                      int64_t t, uint64_t purpose) {
  Rng r = Rng::stream(chain_seed(seed, chain), static_cast<uint64_t>(t), purpose);
  for (int64_t j = 0; j < d; ++j) dst[j] = static_cast<T>(r.normal());
}

template <typename T>
void check_finite(const Tensor<T>& x, int64_t t, const char* what) {
  for (int64_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(static_cast<double>(x[i])))
      throw SamplingFault(std::string(what) + ": non-finite state at t=" +
                          std::to_string(t));
}

}  // namespace detail

// Binds a conditioned model and a fixed latent batch into a plain
// eps(x_t, t) function evaluated without gradients.
template <typename T, typename Model>
struct CondEps {
  const Model& model;
  Tensor<T> z;

  Tensor<T> operator()(const Tensor<T>& xt, int64_t t) const {
    ad::Graph<T> g;
    g.grad_enabled = false;
    std::vector<int64_t> ts(static_cast<size_t>(xt.shape()[0]), t);
    return model.eps_theta(g, g.constant(xt), ts, g.constant(z)).value();
  }
};

template <typename T>
struct LatentEps {
  const nn::LatentDenoiser<T>& net;

  Tensor<T> operator()(const Tensor<T>& zt, int64_t t) const {
    ad::Graph<T> g;
    g.grad_enabled = false;
    std::vector<int64_t> ts(static_cast<size_t>(zt.shape()[0]), t);
    return net(g, g.constant(zt), ts).value();
  }
};

// Ancestral chain x_T ~ N(0,I) down to x_0: decoder mean plus
// posterior-variance noise, none at the final step. Each chain owns its
// noise streams, keyed by (seed, chain, t).
template <typename T, typename EpsFn>
Tensor<T> ancestral_core(const EpsFn& eps_fn, Shape data_shape,
                         const diffusion::Schedule<T>& sched, uint64_t seed,
                         std::vector<Tensor<T>>* trace = nullptr) {
  int64_t n = data_shape[0];
  Tensor<T> x(data_shape);
  if (n == 0) return x;
  int64_t d = x.size() / n;
  for (int64_t i = 0; i < n; ++i)
    detail::fill_chain_noise(x.data() + i * d, d, seed, i, sched.steps + 1,
                             detail::kNoisePurpose);
  if (trace) trace->push_back(x.clone());
  Tensor<T> noise(data_shape);
  for (int64_t t = sched.steps; t >= 1; --t) {
    Tensor<T> eps_hat = eps_fn(x, t);
    Tensor<T> mean = diffusion::decoder_mean(x, t, eps_hat, sched);
    if (t > 1) {
      T sig = std::sqrt(sched.posterior_variance(t));
      for (int64_t i = 0; i < n; ++i)
        detail::fill_chain_noise(noise.data() + i * d, d, seed, i, t,
                                 detail::kNoisePurpose);
      for (int64_t i = 0; i < x.size(); ++i) x[i] = mean[i] + sig * noise[i];
    } else {
      x = std::move(mean);
    }
    detail::check_finite(x, t - 1, "ancestral_sample");
    if (trace) trace->push_back(x.clone());
  }
  return x;
}

template <typename T, typename Model>
Tensor<T> ancestral_sample(const Model& model, const Tensor<T>& z,
                           const diffusion::Schedule<T>& sched, uint64_t seed,
                           std::vector<Tensor<T>>* trace = nullptr) {
  if (z.rank() != 2 || z.dim(1) != model.z_dim())
    throw ConfigError("ancestral_sample: z batch must be (n, z_dim)");
  CondEps<T, Model> eps{model, z};
  return ancestral_core(eps, model.data_shape(z.dim(0)), sched, seed, trace);
}

// One z per chain from its own latent stream, so the draw can't perturb the
// x noise sequence.
template <typename T>
Tensor<T> prior_z_for_chains(const objectives::Prior<T>& prior, int64_t n,
                             uint64_t seed) {
  Tensor<T> z({n, prior.dim});
  for (int64_t i = 0; i < n; ++i) {
    Rng r = Rng::stream(detail::chain_seed(seed, i), 0, detail::kLatentPurpose);
    Tensor<T> zi = prior.sample(1, r);
    for (int64_t j = 0; j < prior.dim; ++j) z[i * prior.dim + j] = zi[j];
  }
  return z;
}

// Appendix D.1 two-phase generation: unconditional denoising from T down to
// switch_t, then conditioned denoising with z ~ p(z) the rest of the way.
// z is drawn before the first conditioned step; the t > switch_t prefix is
// bit-identical to vanilla sampling under the same seed.
template <typename T, typename BaseModel, typename Model>
Tensor<T> two_phase_prior_sample(int64_t n, int64_t switch_t,
                                 const BaseModel* base_model, const Model& model,
                                 const objectives::Prior<T>& prior,
                                 const diffusion::Schedule<T>& sched,
                                 uint64_t seed,
                                 std::vector<Tensor<T>>* trace = nullptr) {
  if (!base_model)
    throw ConfigError("two_phase_prior_sample: missing base_model");
  if (switch_t < 0 || switch_t > sched.steps)
    throw ConfigError("two_phase_prior_sample: switch_t must be in 0..T");
  if (prior.dim != model.z_dim())
    throw ConfigError("two_phase_prior_sample: prior/model z_dim mismatch");

  Shape shape = model.data_shape(n);
  Tensor<T> x(shape);
  if (n == 0) return x;
  int64_t d = x.size() / n;
  for (int64_t i = 0; i < n; ++i)
    detail::fill_chain_noise(x.data() + i * d, d, seed, i, sched.steps + 1,
                             detail::kNoisePurpose);
  if (trace) trace->push_back(x.clone());

  CondEps<T, BaseModel> base_eps{*base_model,
                                 Tensor<T>::zeros({n, base_model->z_dim()})};
  std::optional<CondEps<T, Model>> cond_eps;
  Tensor<T> noise(shape);
  for (int64_t t = sched.steps; t >= 1; --t) {
    if (t == switch_t)  // draw z right before the first conditioned step
      cond_eps.emplace(CondEps<T, Model>{model, prior_z_for_chains(prior, n, seed)});
    Tensor<T> eps_hat = t > switch_t ? base_eps(x, t) : (*cond_eps)(x, t);
    Tensor<T> mean = diffusion::decoder_mean(x, t, eps_hat, sched);
    if (t > 1) {
      T sig = std::sqrt(sched.posterior_variance(t));
      for (int64_t i = 0; i < n; ++i)
        detail::fill_chain_noise(noise.data() + i * d, d, seed, i, t,
                                 detail::kNoisePurpose);
      for (int64_t i = 0; i < x.size(); ++i) x[i] = mean[i] + sig * noise[i];
    } else {
      x = std::move(mean);
    }
    detail::check_finite(x, t - 1, "two_phase_prior_sample");
    if (trace) trace->push_back(x.clone());
  }
  return x;
}

// Appendix D.2: sample z by ancestral diffusion in latent space (standardized
// codes), then run the conditioned data chain on the destandardized draws.
template <typename T, typename LatentFn, typename Model>
Tensor<T> learned_prior_sample(int64_t n, const LatentFn& latent_eps,
                               const Model& model,
                               const diffusion::Schedule<T>& sched_z,
                               const diffusion::Schedule<T>& sched_x,
                               const Tensor<T>& z_mean, const Tensor<T>& z_std,
                               uint64_t seed,
                               Tensor<T>* z_out = nullptr) {
  int64_t zd = z_mean.size();
  if (z_std.size() != zd)
    throw ConfigError("learned_prior_sample: z_mean/z_std size mismatch");
  if (zd != model.z_dim())
    throw ConfigError("learned_prior_sample: latent/model z_dim mismatch");
  Tensor<T> z = ancestral_core(latent_eps, {n, zd}, sched_z,
                               splitmix64(seed ^ 0x6c617433ULL));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < zd; ++j)
      z[i * zd + j] = z[i * zd + j] * z_std[j] + z_mean[j];
  if (z_out) *z_out = z.clone();
  if (n == 0) return Tensor<T>(model.data_shape(0));
  return ancestral_sample(model, z, sched_x, splitmix64(seed ^ 0x64617433ULL));
}

// ---- deterministic encode / decode -------------------------------------------------

namespace detail {

// Uniform K-point grid 0 = g_0 < ... < g_K = T for strided DDIM traversal.
inline std::vector<int64_t> stride_grid(int64_t steps, int64_t sched_T) {
  int64_t k = steps <= 0 ? sched_T : steps;
  if (k > sched_T) throw ConfigError("ddim stride: steps must be <= T");
  std::vector<int64_t> grid(static_cast<size_t>(k) + 1);
  for (int64_t i = 0; i <= k; ++i)
    grid[static_cast<size_t>(i)] =
        (i * sched_T + k / 2) / k;  // rounded uniform spacing
  grid.front() = 0;
  grid.back() = sched_T;
  for (size_t i = 1; i < grid.size(); ++i)
    if (grid[i] <= grid[i - 1]) grid[i] = grid[i - 1] + 1;
  return grid;
}

// Deterministic jump t -> s through the predicted x0.
template <typename T>
Tensor<T> ddim_jump(const Tensor<T>& xt, int64_t t, int64_t s,
                    const Tensor<T>& eps_hat, const diffusion::Schedule<T>& sc) {
  Tensor<T> x0 = diffusion::predict_x0(xt, t, eps_hat, sc);
  T a = std::sqrt(sc.alpha_bar[s]);
  T b = std::sqrt(T(1) - sc.alpha_bar[s]);
  Tensor<T> out(xt.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps_hat[i];
  return out;
}

}  // namespace detail

// x_0 -> x_T along the DDIM encoding chain (Eq. in §4.2), network evaluated
// at the current timestep of each jump.
template <typename T, typename EpsFn>
Tensor<T> ddim_encode(const EpsFn& eps_fn, const Tensor<T>& x0,
                      const diffusion::Schedule<T>& sched, int64_t steps = -1) {
  auto grid = detail::stride_grid(steps, sched.steps);
  Tensor<T> x = x0.clone();
  for (size_t k = 0; k + 1 < grid.size(); ++k) {
    Tensor<T> eps_hat = eps_fn(x, grid[k]);
    x = detail::ddim_jump(x, grid[k], grid[k + 1], eps_hat, sched);
    detail::check_finite(x, grid[k + 1], "ddim_encode");
  }
  return x;
}

template <typename T, typename EpsFn>
Tensor<T> ddim_decode(const EpsFn& eps_fn, const Tensor<T>& xT,
                      const diffusion::Schedule<T>& sched, int64_t steps = -1) {
  auto grid = detail::stride_grid(steps, sched.steps);
  Tensor<T> x = xT.clone();
  for (size_t k = grid.size(); k-- > 1;) {
    Tensor<T> eps_hat = eps_fn(x, grid[k]);
    x = detail::ddim_jump(x, grid[k], grid[k - 1], eps_hat, sched);
    detail::check_finite(x, grid[k - 1], "ddim_decode");
  }
  return x;
}

// Deterministic latent code for conditioning: gaussian posterior mean, or the
// hard threshold for the relaxed-Bernoulli family.
template <typename T, typename Model>
Tensor<T> deterministic_code(const Model& model, const Tensor<T>& x0) {
  ad::Graph<T> g;
  g.grad_enabled = false;
  auto post = model.encode(g, g.constant(x0));
  Rng unused(0);  // temperature 0 draws nothing
  return nn::sample_posterior(g, post, T(0), unused).value();
}

template <typename T>
struct Reconstruction {
  Tensor<T> x_hat;
  Tensor<T> z;
  Tensor<T> xT;
  double rmse = 0;
};

// Encode (z, x_T), then decode deterministically; reports per-element RMSE.
template <typename T, typename Model>
Reconstruction<T> reconstruct(const Tensor<T>& x0, const Model& model,
                              const diffusion::Schedule<T>& sched,
                              int64_t steps = -1) {
  Reconstruction<T> out;
  out.z = deterministic_code(model, x0);
  CondEps<T, Model> eps{model, out.z};
  out.xT = ddim_encode(eps, x0, sched, steps);
  out.x_hat = ddim_decode(eps, out.xT, sched, steps);
  double acc = 0;
  for (int64_t i = 0; i < x0.size(); ++i) {
    double d = static_cast<double>(out.x_hat[i]) - static_cast<double>(x0[i]);
    acc += d * d;
  }
  out.rmse = std::sqrt(acc / static_cast<double>(x0.size()));
  return out;
}

template <typename T>
struct InterpolationResult {
  std::vector<double> grid;
  std::vector<Tensor<T>> frames;
  bool linear_fallback = false;  // zero-norm x_T endpoints
};

inline std::vector<double> default_interpolation_grid() {
  std::vector<double> g(10);
  for (int i = 0; i < 10; ++i) g[static_cast<size_t>(i)] = i / 9.0;
  return g;
}

// §6.1 spherical traversal: z^l = cos(l pi/2) z_a + sin(l pi/2) z_b and the
// angle-psi slerp on the x_T encodings. The quoted x_T formula omits the
// 1/sin(psi) factor, so the normalized form is the default; `paper_literal`
// reproduces the text verbatim (endpoints then come out scaled by sin(psi)).
template <typename T, typename Model>
InterpolationResult<T> slerp_interpolate(
    const Tensor<T>& x_a, const Tensor<T>& x_b, const Model& model,
    const diffusion::Schedule<T>& sched,
    std::vector<double> l_grid = default_interpolation_grid(),
    bool paper_literal = false, int64_t steps = -1) {
  if (x_a.shape() != x_b.shape() || x_a.shape()[0] != 1)
    throw ConfigError("slerp_interpolate: endpoints must be single examples");
  for (double l : l_grid)
    if (l < 0.0 || l > 1.0)
      throw ConfigError("slerp_interpolate: grid values must lie in [0,1]");

  Tensor<T> z_a = deterministic_code(model, x_a);
  Tensor<T> z_b = deterministic_code(model, x_b);
  CondEps<T, Model> eps_a{model, z_a};
  CondEps<T, Model> eps_b{model, z_b};
  Tensor<T> xT_a = ddim_encode(eps_a, x_a, sched, steps);
  Tensor<T> xT_b = ddim_encode(eps_b, x_b, sched, steps);

  double na = 0, nb = 0, dot = 0;
  for (int64_t i = 0; i < xT_a.size(); ++i) {
    na += static_cast<double>(xT_a[i]) * static_cast<double>(xT_a[i]);
    nb += static_cast<double>(xT_b[i]) * static_cast<double>(xT_b[i]);
    dot += static_cast<double>(xT_a[i]) * static_cast<double>(xT_b[i]);
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);

  InterpolationResult<T> out;
  out.grid = l_grid;
  double psi = 0, sin_psi = 0;
  if (na < 1e-12 || nb < 1e-12) {
    out.linear_fallback = true;
    std::cerr << "[infodiff] slerp_interpolate: zero-norm x_T encoding, "
                 "falling back to linear interpolation\n";
  } else {
    double cs = std::clamp(dot / (na * nb), -1.0, 1.0);
    psi = std::acos(cs);
    sin_psi = std::sin(psi);
    if (sin_psi < 1e-7) out.linear_fallback = true;  // parallel endpoints
  }

  for (double l : l_grid) {
    Tensor<T> z(z_a.shape());
    T cz = static_cast<T>(std::cos(l * 1.5707963267948966));
    T sz = static_cast<T>(std::sin(l * 1.5707963267948966));
    for (int64_t i = 0; i < z.size(); ++i) z[i] = cz * z_a[i] + sz * z_b[i];

    Tensor<T> xT(xT_a.shape());
    if (out.linear_fallback) {
      for (int64_t i = 0; i < xT.size(); ++i)
        xT[i] = static_cast<T>((1.0 - l) * xT_a[i] + l * xT_b[i]);
    } else {
      double ca = std::sin((1.0 - l) * psi);
      double cb = std::sin(l * psi);
      if (!paper_literal) {
        ca /= sin_psi;
        cb /= sin_psi;
      }
      for (int64_t i = 0; i < xT.size(); ++i)
        xT[i] = static_cast<T>(ca * xT_a[i] + cb * xT_b[i]);
    }

    CondEps<T, Model> eps{model, z};
    out.frames.push_back(ddim_decode(eps, xT, sched, steps));
  }
  return out;
}

}  // namespace infodiff::sampler
