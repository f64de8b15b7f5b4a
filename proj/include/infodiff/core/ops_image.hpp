// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include "infodiff/core/graph.hpp"

namespace infodiff::ad {

namespace detail {

// Unpacks conv patches of one NCHW image into a (C*kh*kw, oh*ow) row-major
// matrix so the convolution becomes a single GEMM.
template <typename T>
void im2col(const T* img, int64_t C, int64_t H, int64_t W, int64_t kh,
            int64_t kw, int64_t stride, int64_t pad, int64_t oh, int64_t ow,
            T* col) {
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < kh; ++i)
      for (int64_t j = 0; j < kw; ++j) {
        T* dst = col + ((c * kh + i) * kw + j) * oh * ow;
        for (int64_t y = 0; y < oh; ++y) {
          int64_t sy = y * stride + i - pad;
          if (sy < 0 || sy >= H) {
            std::fill(dst + y * ow, dst + (y + 1) * ow, T(0));
            continue;
          }
          const T* src = img + (c * H + sy) * W;
          for (int64_t x = 0; x < ow; ++x) {
            int64_t sx = x * stride + j - pad;
            dst[y * ow + x] = (sx < 0 || sx >= W) ? T(0) : src[sx];
          }
        }
      }
}

// Scatter-add the im2col layout back onto an image (gradient of im2col).
template <typename T>
void col2im(const T* col, int64_t C, int64_t H, int64_t W, int64_t kh,
            int64_t kw, int64_t stride, int64_t pad, int64_t oh, int64_t ow,
            T* img) {
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < kh; ++i)
      for (int64_t j = 0; j < kw; ++j) {
        const T* src = col + ((c * kh + i) * kw + j) * oh * ow;
        for (int64_t y = 0; y < oh; ++y) {
          int64_t sy = y * stride + i - pad;
          if (sy < 0 || sy >= H) continue;
          T* dst = img + (c * H + sy) * W;
          for (int64_t x = 0; x < ow; ++x) {
            int64_t sx = x * stride + j - pad;
            if (sx >= 0 && sx < W) dst[sx] += src[y * ow + x];
          }
        }
      }
}

}  // namespace detail

// 2-d convolution, NCHW input, (F, C, kh, kw) weights, per-channel bias.
// The im2col buffer is recomputed in backward instead of cached; activations
// dominate memory on a single-core desk run and the GEMM dwarfs the unpack.
template <typename T>
Var<T> conv2d(Graph<T>& g, Var<T> x, Var<T> w, Var<T> b, int64_t stride = 1,
              int64_t pad = 0) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1])
    throw std::invalid_argument("conv2d: bad shapes " + shape_str(xs) + " * " +
                                shape_str(ws));
  int64_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  int64_t F = ws[0], kh = ws[2], kw = ws[3];
  if (b.value().size() != F)
    throw std::invalid_argument("conv2d: bias size must equal out channels");
  int64_t oh = (H + 2 * pad - kh) / stride + 1;
  int64_t ow = (W + 2 * pad - kw) / stride + 1;
  int64_t K = C * kh * kw;

  Tensor<T> v({N, F, oh, ow});
  Tensor<T> col({K, oh * ow});
  ConstMatMap<T> Wm(w.value().data(), F, K);
  for (int64_t n = 0; n < N; ++n) {
    detail::im2col(x.value().data() + n * C * H * W, C, H, W, kh, kw, stride,
                   pad, oh, ow, col.data());
    ConstMatMap<T> Cm(col.data(), K, oh * ow);
    MatMap<T> Om(v.data() + n * F * oh * ow, F, oh * ow);
    Om.noalias() = Wm * Cm;
    for (int64_t f = 0; f < F; ++f) Om.row(f).array() += b.value()[f];
  }

  Var<T> out = g.emplace(std::move(v), detail::any_grad<T>({x, w, b}));
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [xn = x.n, wn = w.n, bn = b.n, on, N, C, H, W, F, kh, kw,
                       stride, pad, oh, ow, K]() {
      Tensor<T> col({K, oh * ow});
      Tensor<T> gw, gx, gcol;
      if (wn->requires_grad) gw = Tensor<T>::zeros({F, C, kh, kw});
      if (xn->requires_grad) {
        gx = Tensor<T>::zeros({N, C, H, W});
        gcol = Tensor<T>({K, oh * ow});
      }
      ConstMatMap<T> Wm(wn->value.data(), F, K);
      for (int64_t n = 0; n < N; ++n) {
        ConstMatMap<T> G(on->grad.data() + n * F * oh * ow, F, oh * ow);
        if (wn->requires_grad || xn->requires_grad)
          detail::im2col(xn->value.data() + n * C * H * W, C, H, W, kh, kw,
                         stride, pad, oh, ow, col.data());
        if (wn->requires_grad) {
          ConstMatMap<T> Cm(col.data(), K, oh * ow);
          MatMap<T>(gw.data(), F, K).noalias() += G * Cm.transpose();
        }
        if (xn->requires_grad) {
          MatMap<T>(gcol.data(), K, oh * ow).noalias() = Wm.transpose() * G;
          detail::col2im(gcol.data(), C, H, W, kh, kw, stride, pad, oh, ow,
                         gx.data() + n * C * H * W);
        }
      }
      if (wn->requires_grad) Graph<T>::accumulate(wn, gw);
      if (xn->requires_grad) Graph<T>::accumulate(xn, gx);
      if (bn->requires_grad) {
        Tensor<T> gb({F});
        for (int64_t n = 0; n < N; ++n)
          for (int64_t f = 0; f < F; ++f) {
            const T* p = on->grad.data() + (n * F + f) * oh * ow;
            T s = 0;
            for (int64_t i = 0; i < oh * ow; ++i) s += p[i];
            gb[f] += s;
          }
        Graph<T>::accumulate(bn, gb);
      }
    };
  }
  return out;
}

// GroupNorm without affine parameters: normalizes each (sample, group) slice
// to zero mean / unit variance. Rank-2 input is treated as (N, C, 1, 1).
template <typename T>
Var<T> group_norm(Graph<T>& g, Var<T> x, int64_t groups, T eps = T(1e-5)) {
  Shape xs = x.shape();
  if (xs.size() == 2) xs = {xs[0], xs[1], 1, 1};
  if (xs.size() != 4)
    throw std::invalid_argument("group_norm expects rank-2 or rank-4 input");
  int64_t N = xs[0], C = xs[1], HW = xs[2] * xs[3];
  if (C % groups != 0)
    throw std::invalid_argument("group_norm: channels not divisible by groups");
  int64_t gs = (C / groups) * HW;  // elements per (sample, group)

  Tensor<T> v(x.shape());
  auto istd = std::make_shared<std::vector<T>>(N * groups);
  const T* px = x.value().data();
  T* pv = v.data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t q = 0; q < groups; ++q) {
      const T* s = px + (n * C * HW) + q * gs;
      T* d = pv + (n * C * HW) + q * gs;
      T mean = 0;
      for (int64_t i = 0; i < gs; ++i) mean += s[i];
      mean /= static_cast<T>(gs);
      T var = 0;
      for (int64_t i = 0; i < gs; ++i) var += (s[i] - mean) * (s[i] - mean);
      var /= static_cast<T>(gs);
      T is = T(1) / std::sqrt(var + eps);
      (*istd)[n * groups + q] = is;
      for (int64_t i = 0; i < gs; ++i) d[i] = (s[i] - mean) * is;
    }

  Var<T> out = g.emplace(std::move(v), x.n->requires_grad);
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [xn = x.n, on, istd, N, groups, gs, C, HW]() {
      // dx = istd * (dy - mean(dy) - xhat * mean(dy*xhat)); xhat == value.
      Tensor<T> gx(xn->value.shape());
      for (int64_t n = 0; n < N; ++n)
        for (int64_t q = 0; q < groups; ++q) {
          int64_t off = n * C * HW + q * gs;
          const T* y = on->value.data() + off;
          const T* gy = on->grad.data() + off;
          T* d = gx.data() + off;
          T m1 = 0, m2 = 0;
          for (int64_t i = 0; i < gs; ++i) {
            m1 += gy[i];
            m2 += gy[i] * y[i];
          }
          m1 /= static_cast<T>(gs);
          m2 /= static_cast<T>(gs);
          T is = (*istd)[n * groups + q];
          for (int64_t i = 0; i < gs; ++i)
            d[i] = is * (gy[i] - m1 - y[i] * m2);
        }
      Graph<T>::accumulate(xn, gx);
    };
  }
  return out;
}

// h * (1 + s) + b with per-(sample, channel) scale/shift broadcast over the
// spatial axes; the conditioning path of adaptive group normalization.
template <typename T>
Var<T> scale_shift_channels(Graph<T>& g, Var<T> h, Var<T> s, Var<T> b) {
  Shape hs = h.shape();
  if (hs.size() == 2) hs = {hs[0], hs[1], 1, 1};
  int64_t N = hs[0], C = hs[1], HW = hs[2] * hs[3];
  if (s.shape() != Shape({N, C}) || b.shape() != Shape({N, C}))
    throw std::invalid_argument("scale_shift_channels: s and b must be (N, C)");
  Tensor<T> v(h.shape());
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const T* ph = h.value().data() + (n * C + c) * HW;
      T* pv = v.data() + (n * C + c) * HW;
      T sc = T(1) + s.value()[n * C + c];
      T sh = b.value()[n * C + c];
      for (int64_t i = 0; i < HW; ++i) pv[i] = ph[i] * sc + sh;
    }
  Var<T> out = g.emplace(std::move(v), detail::any_grad<T>({h, s, b}));
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [hn = h.n, sn = s.n, bn = b.n, on, N, C, HW]() {
      if (hn->requires_grad) {
        Tensor<T> gh(hn->value.shape());
        for (int64_t n = 0; n < N; ++n)
          for (int64_t c = 0; c < C; ++c) {
            const T* gy = on->grad.data() + (n * C + c) * HW;
            T* d = gh.data() + (n * C + c) * HW;
            T sc = T(1) + sn->value[n * C + c];
            for (int64_t i = 0; i < HW; ++i) d[i] = gy[i] * sc;
          }
        Graph<T>::accumulate(hn, gh);
      }
      if (sn->requires_grad) {
        Tensor<T> gs({N, C});
        for (int64_t n = 0; n < N; ++n)
          for (int64_t c = 0; c < C; ++c) {
            const T* gy = on->grad.data() + (n * C + c) * HW;
            const T* ph = hn->value.data() + (n * C + c) * HW;
            T acc = 0;
            for (int64_t i = 0; i < HW; ++i) acc += gy[i] * ph[i];
            gs[n * C + c] = acc;
          }
        Graph<T>::accumulate(sn, gs);
      }
      if (bn->requires_grad) {
        Tensor<T> gb({N, C});
        for (int64_t n = 0; n < N; ++n)
          for (int64_t c = 0; c < C; ++c) {
            const T* gy = on->grad.data() + (n * C + c) * HW;
            T acc = 0;
            for (int64_t i = 0; i < HW; ++i) acc += gy[i];
            gb[n * C + c] = acc;
          }
        Graph<T>::accumulate(bn, gb);
      }
    };
  }
  return out;
}

// h * gamma + beta with per-channel (C,) parameters; plain GN affine.
template <typename T>
Var<T> channel_affine(Graph<T>& g, Var<T> h, Var<T> gamma, Var<T> beta) {
  Shape hs = h.shape();
  if (hs.size() == 2) hs = {hs[0], hs[1], 1, 1};
  int64_t N = hs[0], C = hs[1], HW = hs[2] * hs[3];
  if (gamma.value().size() != C || beta.value().size() != C)
    throw std::invalid_argument("channel_affine: params must have C entries");
  Tensor<T> v(h.shape());
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const T* ph = h.value().data() + (n * C + c) * HW;
      T* pv = v.data() + (n * C + c) * HW;
      T ga = gamma.value()[c], be = beta.value()[c];
      for (int64_t i = 0; i < HW; ++i) pv[i] = ph[i] * ga + be;
    }
  Var<T> out = g.emplace(std::move(v), detail::any_grad<T>({h, gamma, beta}));
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [hn = h.n, gn = gamma.n, bn = beta.n, on, N, C, HW]() {
      if (hn->requires_grad) {
        Tensor<T> gh(hn->value.shape());
        for (int64_t n = 0; n < N; ++n)
          for (int64_t c = 0; c < C; ++c) {
            const T* gy = on->grad.data() + (n * C + c) * HW;
            T* d = gh.data() + (n * C + c) * HW;
            T ga = gn->value[c];
            for (int64_t i = 0; i < HW; ++i) d[i] = gy[i] * ga;
          }
        Graph<T>::accumulate(hn, gh);
      }
      if (gn->requires_grad || bn->requires_grad) {
        Tensor<T> gg({C}), gb({C});
        for (int64_t n = 0; n < N; ++n)
          for (int64_t c = 0; c < C; ++c) {
            const T* gy = on->grad.data() + (n * C + c) * HW;
            const T* ph = hn->value.data() + (n * C + c) * HW;
            T ag = 0, ab = 0;
            for (int64_t i = 0; i < HW; ++i) {
              ag += gy[i] * ph[i];
              ab += gy[i];
            }
            gg[c] += ag;
            gb[c] += ab;
          }
        Graph<T>::accumulate(gn, gg);
        Graph<T>::accumulate(bn, gb);
      }
    };
  }
  return out;
}

// Nearest-neighbour 2x spatial upsampling.
template <typename T>
Var<T> upsample2x(Graph<T>& g, Var<T> x) {
  const Shape& xs = x.shape();
  if (xs.size() != 4) throw std::invalid_argument("upsample2x expects NCHW");
  int64_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  Tensor<T> v({N, C, H * 2, W * 2});
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const T* src = x.value().data() + nc * H * W;
    T* dst = v.data() + nc * 4 * H * W;
    for (int64_t y = 0; y < 2 * H; ++y)
      for (int64_t x2 = 0; x2 < 2 * W; ++x2)
        dst[y * 2 * W + x2] = src[(y / 2) * W + (x2 / 2)];
  }
  Var<T> out = g.emplace(std::move(v), x.n->requires_grad);
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [xn = x.n, on, N, C, H, W]() {
      Tensor<T> gx({N, C, H, W});
      for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* gy = on->grad.data() + nc * 4 * H * W;
        T* d = gx.data() + nc * H * W;
        for (int64_t y = 0; y < 2 * H; ++y)
          for (int64_t x2 = 0; x2 < 2 * W; ++x2)
            d[(y / 2) * W + (x2 / 2)] += gy[y * 2 * W + x2];
      }
      Graph<T>::accumulate(xn, gx);
    };
  }
  return out;
}

// Global average pooling: (N, C, H, W) -> (N, C).
template <typename T>
Var<T> global_avg_pool(Graph<T>& g, Var<T> x) {
  const Shape& xs = x.shape();
  if (xs.size() != 4) throw std::invalid_argument("global_avg_pool expects NCHW");
  int64_t N = xs[0], C = xs[1], HW = xs[2] * xs[3];
  Tensor<T> v({N, C});
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const T* p = x.value().data() + nc * HW;
    T s = 0;
    for (int64_t i = 0; i < HW; ++i) s += p[i];
    v[nc] = s / static_cast<T>(HW);
  }
  Var<T> out = g.emplace(std::move(v), x.n->requires_grad);
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [xn = x.n, on, N, C, HW]() {
      Tensor<T> gx(xn->value.shape());
      for (int64_t nc = 0; nc < N * C; ++nc) {
        T gv = on->grad[nc] / static_cast<T>(HW);
        T* d = gx.data() + nc * HW;
        for (int64_t i = 0; i < HW; ++i) d[i] = gv;
      }
      Graph<T>::accumulate(xn, gx);
    };
  }
  return out;
}

// Concatenate NCHW tensors along the channel axis (UNet skip connections).
template <typename T>
Var<T> concat_channels(Graph<T>& g, Var<T> a, Var<T> b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 4 || bs.size() != 4 || as[0] != bs[0] || as[2] != bs[2] ||
      as[3] != bs[3])
    throw std::invalid_argument("concat_channels: incompatible shapes");
  int64_t N = as[0], Ca = as[1], Cb = bs[1], HW = as[2] * as[3];
  Tensor<T> v({N, Ca + Cb, as[2], as[3]});
  for (int64_t n = 0; n < N; ++n) {
    std::copy(a.value().data() + n * Ca * HW, a.value().data() + (n + 1) * Ca * HW,
              v.data() + n * (Ca + Cb) * HW);
    std::copy(b.value().data() + n * Cb * HW, b.value().data() + (n + 1) * Cb * HW,
              v.data() + n * (Ca + Cb) * HW + Ca * HW);
  }
  Var<T> out = g.emplace(std::move(v), detail::any_grad<T>({a, b}));
  if (out.n->requires_grad) {
    Node<T>* on = out.n;
    out.n->backward = [an = a.n, bn = b.n, on, N, Ca, Cb, HW]() {
      if (an->requires_grad) {
        Tensor<T> ga(an->value.shape());
        for (int64_t n = 0; n < N; ++n)
          std::copy(on->grad.data() + n * (Ca + Cb) * HW,
                    on->grad.data() + n * (Ca + Cb) * HW + Ca * HW,
                    ga.data() + n * Ca * HW);
        Graph<T>::accumulate(an, ga);
      }
      if (bn->requires_grad) {
        Tensor<T> gb(bn->value.shape());
        for (int64_t n = 0; n < N; ++n)
          std::copy(on->grad.data() + n * (Ca + Cb) * HW + Ca * HW,
                    on->grad.data() + (n + 1) * (Ca + Cb) * HW,
                    gb.data() + n * Cb * HW);
        Graph<T>::accumulate(bn, gb);
      }
    };
  }
  return out;
}

}  // namespace infodiff::ad
