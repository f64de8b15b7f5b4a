// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "infodiff/core/graph.hpp"
#include "infodiff/core/rng.hpp"

namespace infodiff::objectives {

using ad::Graph;
using ad::Var;

// Gumbel-Softmax relaxation over the last axis of (R, K) logits:
//   y_i = softmax((logits_i + g_i) / tau),   g ~ Gumbel(0, 1)
// tau = 0 degenerates to the Gumbel-max one-hot sample; that branch returns a
// constant (the gradient of an argmax is zero almost everywhere anyway).
template <typename T>
Var<T> gumbel_softmax(Graph<T>& g, Var<T> logits, T tau,
                      const Tensor<T>& gumbel_noise) {
  if (tau < T(0))
    throw std::invalid_argument("gumbel_softmax: tau must be >= 0");
  if (gumbel_noise.shape() != logits.shape())
    throw std::invalid_argument("gumbel_softmax: noise shape mismatch");
  if (logits.shape().size() != 2)
    throw std::invalid_argument("gumbel_softmax: logits must be rank-2");
  if (tau == T(0)) {
    int64_t n = logits.shape()[0], k = logits.shape()[1];
    Tensor<T> out({n, k});
    for (int64_t i = 0; i < n; ++i) {
      const T* row = logits.value().data() + i * k;
      const T* gn = gumbel_noise.data() + i * k;
      int64_t best = 0;
      T bestv = row[0] + gn[0];
      for (int64_t j = 1; j < k; ++j)
        if (row[j] + gn[j] > bestv) {
          bestv = row[j] + gn[j];
          best = j;
        }
      out[i * k + best] = T(1);
    }
    return g.constant(std::move(out));
  }
  auto noisy = ad::add(g, logits, g.constant(gumbel_noise));
  return ad::softmax_rows(g, ad::scalar_mul(g, noisy, T(1) / tau));
}

template <typename T>
Var<T> gumbel_softmax(Graph<T>& g, Var<T> logits, T tau, Rng& rng) {
  return gumbel_softmax(g, logits, tau,
                        rng.gumbel_tensor<T>(logits.shape()));
}

}  // namespace infodiff::objectives
