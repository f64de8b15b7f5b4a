// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "infodiff/core/errors.hpp"
#include "infodiff/core/module.hpp"
#include "infodiff/gumbel.hpp"

namespace infodiff::nn {

enum class LatentFamily { gaussian, relaxed_bernoulli };
enum class Conditioning { all_layers, bottleneck_only };

inline std::string to_string(LatentFamily f) {
  return f == LatentFamily::gaussian ? "gaussian" : "relaxed_bernoulli";
}
inline std::string to_string(Conditioning c) {
  return c == Conditioning::all_layers ? "all_layers" : "bottleneck_only";
}

// Encoder output q(z | x0). Gaussian posteriors carry (mean, log_var);
// relaxed-Bernoulli ones carry per-dim logits.
template <typename T>
struct Posterior {
  LatentFamily family = LatentFamily::gaussian;
  ad::Var<T> mean;
  ad::Var<T> log_var;
  ad::Var<T> logits;
};

// Transformer-style sinusoidal embedding of integer timesteps.
template <typename T>
Tensor<T> sinusoidal_embedding(const std::vector<int64_t>& t, int64_t dim) {
  if (dim < 2 || dim % 2 != 0)
    throw std::invalid_argument("sinusoidal_embedding: dim must be even >= 2");
  int64_t n = static_cast<int64_t>(t.size());
  int64_t half = dim / 2;
  Tensor<T> out({n, dim});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < half; ++j) {
      double freq = std::exp(-std::log(10000.0) * static_cast<double>(j) /
                             static_cast<double>(std::max<int64_t>(half - 1, 1)));
      double a = static_cast<double>(t[i]) * freq;
      out[i * dim + j] = static_cast<T>(std::sin(a));
      out[i * dim + half + j] = static_cast<T>(std::cos(a));
    }
  return out;
}

// Two-layer MLP applied to an embedding (shared trunk for time / z).
template <typename T>
struct EmbedMlp {
  Dense<T> fc1, fc2;

  EmbedMlp() = default;
  EmbedMlp(const std::string& name, int64_t in, int64_t out, Rng& rng)
      : fc1(name + ".fc1", in, out, rng), fc2(name + ".fc2", out, out, rng) {}

  Var<T> operator()(Graph<T>& g, Var<T> x) const {
    return fc2(g, ad::silu(g, fc1(g, x)));
  }

  void collect(ParamList<T>& out) {
    fc1.collect(out);
    fc2.collect(out);
  }
};

// Adaptive group normalization: (1 + s(e)) * GroupNorm(h) + b(e).
// The scale/shift map starts at zero, so an AGN block is exactly GroupNorm
// at initialization.
template <typename T>
struct AGN {
  int64_t groups = 8;
  int64_t channels = 0;
  Dense<T> to_sb;  // emb -> 2C

  AGN() = default;
  AGN(const std::string& name, int64_t channels_, int64_t emb_dim,
      int64_t groups_, Rng& rng)
      : groups(groups_),
        channels(channels_),
        to_sb(name + ".sb", emb_dim, 2 * channels_, rng, T(0)) {}

  Var<T> operator()(Graph<T>& g, Var<T> h, Var<T> emb) const {
    auto normed = ad::group_norm(g, h, groups);
    auto sb = to_sb(g, emb);
    auto s = ad::slice_cols(g, sb, 0, channels);
    auto b = ad::slice_cols(g, sb, channels, 2 * channels);
    return ad::scale_shift_channels(g, normed, s, b);
  }

  void collect(ParamList<T>& out) { to_sb.collect(out); }
};

namespace detail {
inline int64_t pick_groups(int64_t channels, int64_t want) {
  int64_t g = std::min(want, channels);
  while (channels % g != 0) --g;
  return g;
}

// Vector features have no spatial extent, so a single-feature group would be
// normalized to exactly zero; keep at least two features per group.
inline int64_t pick_groups_vec(int64_t dim, int64_t want) {
  return pick_groups(dim, std::min(want, std::max<int64_t>(1, dim / 2)));
}
}  // namespace detail

// Residual block conditioned through successive AGN layers, one fed by the
// auxiliary-variable embedding and one by the time embedding. use_z toggles
// the z layer so bottleneck_only models can reuse the same block type.
template <typename T>
struct CondResBlock {
  bool use_z = true;
  AGN<T> agn_z1, agn_t1, agn_z2, agn_t2;
  Conv2d<T> conv1, conv2;
  std::optional<Conv2d<T>> skip;

  CondResBlock() = default;
  CondResBlock(const std::string& name, int64_t c_in, int64_t c_out,
               int64_t emb_dim, int64_t groups, bool use_z_, Rng& rng)
      : use_z(use_z_),
        agn_z1(name + ".agn_z1", c_in, emb_dim, detail::pick_groups(c_in, groups), rng),
        agn_t1(name + ".agn_t1", c_in, emb_dim, detail::pick_groups(c_in, groups), rng),
        agn_z2(name + ".agn_z2", c_out, emb_dim, detail::pick_groups(c_out, groups), rng),
        agn_t2(name + ".agn_t2", c_out, emb_dim, detail::pick_groups(c_out, groups), rng),
        conv1(name + ".conv1", c_in, c_out, 3, 1, 1, rng),
        conv2(name + ".conv2", c_out, c_out, 3, 1, 1, rng) {
    if (c_in != c_out)
      skip.emplace(name + ".skip", c_in, c_out, 1, 1, 0, rng);
  }

  Var<T> operator()(Graph<T>& g, Var<T> h, Var<T> temb, Var<T> zemb) const {
    auto u = use_z ? agn_z1(g, h, zemb) : h;
    u = agn_t1(g, u, temb);
    u = conv1(g, ad::silu(g, u));
    u = use_z ? agn_z2(g, u, zemb) : u;
    u = agn_t2(g, u, temb);
    u = conv2(g, ad::silu(g, u));
    auto res = skip ? (*skip)(g, h) : h;
    return ad::add(g, u, res);
  }

  void collect(ParamList<T>& out) {
    if (use_z) {
      agn_z1.collect(out);
      agn_z2.collect(out);
    }
    agn_t1.collect(out);
    agn_t2.collect(out);
    conv1.collect(out);
    conv2.collect(out);
    if (skip) skip->collect(out);
  }
};

// Unconditioned residual block (encoder tower): GroupNorm + learned affine.
template <typename T>
struct PlainResBlock {
  int64_t groups1 = 8, groups2 = 8;
  Parameter<T> gamma1, beta1, gamma2, beta2;
  Conv2d<T> conv1, conv2;
  std::optional<Conv2d<T>> skip;

  PlainResBlock() = default;
  PlainResBlock(const std::string& name, int64_t c_in, int64_t c_out,
                int64_t groups, Rng& rng)
      : groups1(detail::pick_groups(c_in, groups)),
        groups2(detail::pick_groups(c_out, groups)),
        gamma1(name + ".gamma1", Tensor<T>::full({c_in}, T(1))),
        beta1(name + ".beta1", Tensor<T>::zeros({c_in})),
        gamma2(name + ".gamma2", Tensor<T>::full({c_out}, T(1))),
        beta2(name + ".beta2", Tensor<T>::zeros({c_out})),
        conv1(name + ".conv1", c_in, c_out, 3, 1, 1, rng),
        conv2(name + ".conv2", c_out, c_out, 3, 1, 1, rng) {
    if (c_in != c_out)
      skip.emplace(name + ".skip", c_in, c_out, 1, 1, 0, rng);
  }

  Var<T> operator()(Graph<T>& g, Var<T> h) const {
    auto u = ad::channel_affine(g, ad::group_norm(g, h, groups1),
                                gamma1.bind(g), beta1.bind(g));
    u = conv1(g, ad::silu(g, u));
    u = ad::channel_affine(g, ad::group_norm(g, u, groups2), gamma2.bind(g),
                           beta2.bind(g));
    u = conv2(g, ad::silu(g, u));
    auto res = skip ? (*skip)(g, h) : h;
    return ad::add(g, u, res);
  }

  void collect(ParamList<T>& out) {
    out.push_back(&gamma1);
    out.push_back(&beta1);
    out.push_back(&gamma2);
    out.push_back(&beta2);
    conv1.collect(out);
    conv2.collect(out);
    if (skip) skip->collect(out);
  }
};

struct UNetSpec {
  int64_t in_channels = 3;
  int64_t image_size = 32;
  int64_t base_channels = 16;
  std::vector<int64_t> channel_mults = {1, 2};
  int64_t groups = 8;
  int64_t temb_dim = 64;
  int64_t z_dim = 8;
  Conditioning conditioning = Conditioning::all_layers;
};

// Noise-prediction UNet conditioned on (t, z). In bottleneck_only mode the z
// embedding reaches just the two mid blocks; otherwise every residual block.
template <typename T>
struct CondUNet {
  UNetSpec spec;
  EmbedMlp<T> time_mlp, z_mlp;
  Conv2d<T> stem;
  std::vector<CondResBlock<T>> down_blocks;
  std::vector<Conv2d<T>> down_samplers;
  CondResBlock<T> mid1, mid2;
  std::vector<CondResBlock<T>> up_blocks;
  std::vector<Conv2d<T>> up_samplers;  // aligned with up_blocks[1..]
  Parameter<T> head_gamma, head_beta;
  int64_t head_groups = 8;
  Conv2d<T> head;

  CondUNet() = default;
  CondUNet(const UNetSpec& sp, Rng& rng, const std::string& name = "unet")
      : spec(sp) {
    if (sp.channel_mults.empty())
      throw ConfigError("unet: channel_mults must be non-empty");
    int64_t levels = static_cast<int64_t>(sp.channel_mults.size());
    if (sp.image_size % (1 << (levels - 1)) != 0)
      throw ConfigError("unet: image_size must be divisible by 2^(levels-1)");
    bool all = sp.conditioning == Conditioning::all_layers;
    time_mlp = EmbedMlp<T>(name + ".time_mlp", sp.temb_dim, sp.temb_dim, rng);
    z_mlp = EmbedMlp<T>(name + ".z_mlp", sp.z_dim, sp.temb_dim, rng);
    stem = Conv2d<T>(name + ".stem", sp.in_channels, sp.base_channels, 3, 1, 1,
                     rng);
    int64_t prev = sp.base_channels;
    for (int64_t i = 0; i < levels; ++i) {
      int64_t ch = sp.base_channels * sp.channel_mults[i];
      down_blocks.emplace_back(name + ".down" + std::to_string(i), prev, ch,
                               sp.temb_dim, sp.groups, all, rng);
      if (i + 1 < levels)
        down_samplers.emplace_back(name + ".downsample" + std::to_string(i),
                                   ch, ch, 3, 2, 1, rng);
      prev = ch;
    }
    mid1 = CondResBlock<T>(name + ".mid1", prev, prev, sp.temb_dim, sp.groups,
                           true, rng);
    mid2 = CondResBlock<T>(name + ".mid2", prev, prev, sp.temb_dim, sp.groups,
                           true, rng);
    for (int64_t i = levels - 1; i >= 0; --i) {
      int64_t ch = sp.base_channels * sp.channel_mults[i];
      up_blocks.emplace_back(name + ".up" + std::to_string(i), 2 * ch, ch,
                             sp.temb_dim, sp.groups, all, rng);
      if (i > 0) {
        int64_t ch_next = sp.base_channels * sp.channel_mults[i - 1];
        up_samplers.emplace_back(name + ".upsample" + std::to_string(i), ch,
                                 ch_next, 3, 1, 1, rng);
      }
    }
    head_groups = detail::pick_groups(sp.base_channels * sp.channel_mults[0],
                                      sp.groups);
    int64_t ch0 = sp.base_channels * sp.channel_mults[0];
    head_gamma = Parameter<T>(name + ".head_gamma", Tensor<T>::full({ch0}, T(1)));
    head_beta = Parameter<T>(name + ".head_beta", Tensor<T>::zeros({ch0}));
    head = Conv2d<T>(name + ".head", ch0, sp.in_channels, 3, 1, 1, rng);
  }

  Var<T> operator()(Graph<T>& g, Var<T> x, const std::vector<int64_t>& t,
                    Var<T> z) const {
    if (x.shape()[0] != static_cast<int64_t>(t.size()))
      throw std::invalid_argument("unet: batch size and t count differ");
    auto temb =
        time_mlp(g, g.constant(sinusoidal_embedding<T>(t, spec.temb_dim)));
    auto zemb = z_mlp(g, z);
    auto h = stem(g, x);
    std::vector<Var<T>> skips;
    int64_t levels = static_cast<int64_t>(spec.channel_mults.size());
    for (int64_t i = 0; i < levels; ++i) {
      h = down_blocks[static_cast<size_t>(i)](g, h, temb, zemb);
      skips.push_back(h);
      if (i + 1 < levels) h = down_samplers[static_cast<size_t>(i)](g, h);
    }
    h = mid1(g, h, temb, zemb);
    h = mid2(g, h, temb, zemb);
    for (int64_t k = 0; k < levels; ++k) {
      int64_t i = levels - 1 - k;  // level index this up block restores
      h = ad::concat_channels(g, h, skips[static_cast<size_t>(i)]);
      h = up_blocks[static_cast<size_t>(k)](g, h, temb, zemb);
      if (i > 0)
        h = up_samplers[static_cast<size_t>(k)](g, ad::upsample2x(g, h));
    }
    h = ad::channel_affine(g, ad::group_norm(g, h, head_groups),
                           head_gamma.bind(g), head_beta.bind(g));
    return head(g, ad::silu(g, h));
  }

  void collect(ParamList<T>& out) {
    time_mlp.collect(out);
    z_mlp.collect(out);
    stem.collect(out);
    for (auto& b : down_blocks) b.collect(out);
    for (auto& c : down_samplers) c.collect(out);
    mid1.collect(out);
    mid2.collect(out);
    for (auto& b : up_blocks) b.collect(out);
    for (auto& c : up_samplers) c.collect(out);
    out.push_back(&head_gamma);
    out.push_back(&head_beta);
    head.collect(out);
  }
};

struct EncoderSpec {
  int64_t in_channels = 3;
  int64_t image_size = 32;
  int64_t base_channels = 16;
  std::vector<int64_t> channel_mults = {1, 2};
  int64_t groups = 8;
  int64_t z_dim = 8;
  LatentFamily family = LatentFamily::gaussian;
};

inline constexpr double kLogVarMin = -20.0;
inline constexpr double kLogVarMax = 2.0;

// Convolutional tower -> global average pool -> posterior head.
template <typename T>
struct ConvEncoder {
  EncoderSpec spec;
  Conv2d<T> stem;
  std::vector<PlainResBlock<T>> blocks;
  std::vector<Conv2d<T>> downs;
  Parameter<T> out_gamma, out_beta;
  int64_t out_groups = 8;
  Dense<T> headfc;

  ConvEncoder() = default;
  ConvEncoder(const EncoderSpec& sp, Rng& rng, const std::string& name = "enc")
      : spec(sp) {
    if (sp.channel_mults.empty())
      throw ConfigError("encoder: channel_mults must be non-empty");
    stem = Conv2d<T>(name + ".stem", sp.in_channels, sp.base_channels, 3, 1, 1,
                     rng);
    int64_t levels = static_cast<int64_t>(sp.channel_mults.size());
    int64_t prev = sp.base_channels;
    for (int64_t i = 0; i < levels; ++i) {
      int64_t ch = sp.base_channels * sp.channel_mults[i];
      blocks.emplace_back(name + ".block" + std::to_string(i), prev, ch,
                          sp.groups, rng);
      if (i + 1 < levels)
        downs.emplace_back(name + ".down" + std::to_string(i), ch, ch, 3, 2, 1,
                           rng);
      prev = ch;
    }
    out_groups = detail::pick_groups(prev, sp.groups);
    out_gamma = Parameter<T>(name + ".out_gamma", Tensor<T>::full({prev}, T(1)));
    out_beta = Parameter<T>(name + ".out_beta", Tensor<T>::zeros({prev}));
    int64_t head_out =
        sp.family == LatentFamily::gaussian ? 2 * sp.z_dim : sp.z_dim;
    headfc = Dense<T>(name + ".head", prev, head_out, rng);
  }

  Posterior<T> operator()(Graph<T>& g, Var<T> x) const {
    auto h = stem(g, x);
    int64_t levels = static_cast<int64_t>(spec.channel_mults.size());
    for (int64_t i = 0; i < levels; ++i) {
      h = blocks[static_cast<size_t>(i)](g, h);
      if (i + 1 < levels) h = downs[static_cast<size_t>(i)](g, h);
    }
    h = ad::channel_affine(g, ad::group_norm(g, h, out_groups),
                           out_gamma.bind(g), out_beta.bind(g));
    auto pooled = ad::global_avg_pool(g, ad::silu(g, h));
    auto out = headfc(g, pooled);
    Posterior<T> p;
    p.family = spec.family;
    if (spec.family == LatentFamily::gaussian) {
      p.mean = ad::slice_cols(g, out, 0, spec.z_dim);
      p.log_var = ad::clamp(g, ad::slice_cols(g, out, spec.z_dim, 2 * spec.z_dim),
                            static_cast<T>(kLogVarMin),
                            static_cast<T>(kLogVarMax));
    } else {
      p.logits = out;
    }
    return p;
  }

  void collect(ParamList<T>& out) {
    stem.collect(out);
    for (auto& b : blocks) b.collect(out);
    for (auto& c : downs) c.collect(out);
    out.push_back(&out_gamma);
    out.push_back(&out_beta);
    headfc.collect(out);
  }
};

// Residual MLP block with the same AGN conditioning as the conv path,
// operating on (N, D) feature vectors.
template <typename T>
struct VecResBlock {
  bool use_z = true;
  AGN<T> agn_z, agn_t;
  Dense<T> fc1, fc2;

  VecResBlock() = default;
  VecResBlock(const std::string& name, int64_t dim, int64_t emb_dim,
              int64_t groups, bool use_z_, Rng& rng)
      : use_z(use_z_),
        agn_z(name + ".agn_z", dim, emb_dim, detail::pick_groups_vec(dim, groups), rng),
        agn_t(name + ".agn_t", dim, emb_dim, detail::pick_groups_vec(dim, groups), rng),
        fc1(name + ".fc1", dim, dim, rng),
        fc2(name + ".fc2", dim, dim, rng) {}

  Var<T> operator()(Graph<T>& g, Var<T> h, Var<T> temb, Var<T> zemb) const {
    auto u = use_z ? agn_z(g, h, zemb) : h;
    u = agn_t(g, u, temb);
    u = fc2(g, ad::silu(g, fc1(g, ad::silu(g, u))));
    return ad::add(g, h, u);
  }

  void collect(ParamList<T>& out) {
    if (use_z) agn_z.collect(out);
    agn_t.collect(out);
    fc1.collect(out);
    fc2.collect(out);
  }
};

struct MlpSpec {
  int64_t data_dim = 2;
  int64_t hidden = 64;
  int64_t depth = 2;
  int64_t temb_dim = 32;
  int64_t z_dim = 2;
  int64_t groups = 8;
  Conditioning conditioning = Conditioning::all_layers;
};

// Noise predictor for low-dimensional data (two-moons and friends).
// bottleneck_only keeps z out of all but the final residual block.
template <typename T>
struct MlpDenoiser {
  MlpSpec spec;
  EmbedMlp<T> time_mlp, z_mlp;
  Dense<T> fc_in;
  std::vector<VecResBlock<T>> blocks;
  Dense<T> fc_out;

  MlpDenoiser() = default;
  MlpDenoiser(const MlpSpec& sp, Rng& rng, const std::string& name = "mlp")
      : spec(sp) {
    time_mlp = EmbedMlp<T>(name + ".time_mlp", sp.temb_dim, sp.temb_dim, rng);
    z_mlp = EmbedMlp<T>(name + ".z_mlp", sp.z_dim, sp.temb_dim, rng);
    fc_in = Dense<T>(name + ".fc_in", sp.data_dim, sp.hidden, rng);
    bool all = sp.conditioning == Conditioning::all_layers;
    for (int64_t i = 0; i < sp.depth; ++i) {
      bool use_z = all || i + 1 == sp.depth;
      blocks.emplace_back(name + ".block" + std::to_string(i), sp.hidden,
                          sp.temb_dim, sp.groups, use_z, rng);
    }
    fc_out = Dense<T>(name + ".fc_out", sp.hidden, sp.data_dim, rng);
  }

  Var<T> operator()(Graph<T>& g, Var<T> x, const std::vector<int64_t>& t,
                    Var<T> z) const {
    auto temb =
        time_mlp(g, g.constant(sinusoidal_embedding<T>(t, spec.temb_dim)));
    auto zemb = z_mlp(g, z);
    auto h = fc_in(g, x);
    for (auto& b : blocks) h = b(g, h, temb, zemb);
    return fc_out(g, ad::silu(g, h));
  }

  void collect(ParamList<T>& out) {
    time_mlp.collect(out);
    z_mlp.collect(out);
    fc_in.collect(out);
    for (auto& b : blocks) b.collect(out);
    fc_out.collect(out);
  }
};

// MLP encoder for vector data.
template <typename T>
struct MlpEncoder {
  int64_t z_dim = 2;
  LatentFamily family = LatentFamily::gaussian;
  Dense<T> fc1, fc2, head;

  MlpEncoder() = default;
  MlpEncoder(const std::string& name, int64_t data_dim, int64_t hidden,
             int64_t z_dim_, LatentFamily family_, Rng& rng)
      : z_dim(z_dim_),
        family(family_),
        fc1(name + ".fc1", data_dim, hidden, rng),
        fc2(name + ".fc2", hidden, hidden, rng),
        head(name + ".head", hidden,
             family_ == LatentFamily::gaussian ? 2 * z_dim_ : z_dim_, rng) {}

  Posterior<T> operator()(Graph<T>& g, Var<T> x) const {
    auto h = ad::silu(g, fc1(g, x));
    h = ad::silu(g, fc2(g, h));
    auto out = head(g, h);
    Posterior<T> p;
    p.family = family;
    if (family == LatentFamily::gaussian) {
      p.mean = ad::slice_cols(g, out, 0, z_dim);
      p.log_var = ad::clamp(g, ad::slice_cols(g, out, z_dim, 2 * z_dim),
                            static_cast<T>(kLogVarMin),
                            static_cast<T>(kLogVarMax));
    } else {
      p.logits = out;
    }
    return p;
  }

  void collect(ParamList<T>& out) {
    fc1.collect(out);
    fc2.collect(out);
    head.collect(out);
  }
};

// Denoiser for diffusion in latent space: residual perceptron on z with a
// time embedding, used to learn a prior over encoder codes.
template <typename T>
struct LatentDenoiser {
  int64_t z_dim = 8;
  int64_t hidden = 64;
  int64_t temb_dim = 32;
  EmbedMlp<T> time_mlp;
  Dense<T> fc_in;
  std::vector<VecResBlock<T>> blocks;
  Dense<T> fc_out;

  LatentDenoiser() = default;
  LatentDenoiser(const std::string& name, int64_t z_dim_, int64_t hidden_,
                 int64_t temb_dim_, Rng& rng)
      : z_dim(z_dim_), hidden(hidden_), temb_dim(temb_dim_) {
    time_mlp = EmbedMlp<T>(name + ".time_mlp", temb_dim, temb_dim, rng);
    fc_in = Dense<T>(name + ".fc_in", z_dim, hidden, rng);
    for (int64_t i = 0; i < 3; ++i)
      blocks.emplace_back(name + ".block" + std::to_string(i), hidden,
                          temb_dim, 8, false, rng);
    fc_out = Dense<T>(name + ".fc_out", hidden, z_dim, rng);
  }

  Var<T> operator()(Graph<T>& g, Var<T> zt, const std::vector<int64_t>& t) const {
    auto temb = time_mlp(g, g.constant(sinusoidal_embedding<T>(t, temb_dim)));
    auto h = fc_in(g, zt);
    // unused z embedding slot; VecResBlock takes (temb, zemb)
    for (auto& b : blocks) h = b(g, h, temb, temb);
    return fc_out(g, ad::silu(g, h));
  }

  void collect(ParamList<T>& out) {
    time_mlp.collect(out);
    fc_in.collect(out);
    for (auto& b : blocks) b.collect(out);
    fc_out.collect(out);
  }
};

// Reparameterized sample from the encoder posterior.
//
// Gaussian: mean + exp(log_var / 2) * eta, eta ~ N(0, I) scaled by
// `temperature` (0 returns the mean).
// Relaxed Bernoulli: per-dim binary Gumbel-Softmax at tau = temperature;
// temperature 0 does the deterministic threshold logit > 0.
template <typename T>
Var<T> sample_posterior(Graph<T>& g, const Posterior<T>& post, T temperature,
                        Rng& rng) {
  if (temperature < T(0))
    throw std::invalid_argument("sample_posterior: temperature must be >= 0");
  if (post.family == LatentFamily::gaussian) {
    if (temperature == T(0)) return post.mean;
    auto eta = rng.normal_tensor<T>(post.mean.shape());
    for (int64_t i = 0; i < eta.size(); ++i) eta[i] *= temperature;
    auto std = ad::exp(g, ad::scalar_mul(g, post.log_var, T(0.5)));
    return ad::add(g, post.mean, ad::mul(g, std, g.constant(eta)));
  }
  int64_t n = post.logits.shape()[0], d = post.logits.shape()[1];
  if (temperature == T(0)) {
    Tensor<T> hard({n, d});
    for (int64_t i = 0; i < n * d; ++i)
      hard[i] = post.logits.value()[i] > T(0) ? T(1) : T(0);
    return g.constant(std::move(hard));
  }
  // Per-dim two-class relaxation with a zero logit for the "off" class.
  auto flat = ad::reshape(g, post.logits, {n * d, 1});
  auto two = ad::concat_cols(g, flat, g.constant(Tensor<T>::zeros({n * d, 1})));
  auto soft = objectives::gumbel_softmax(g, two, temperature, rng);
  return ad::reshape(g, ad::slice_cols(g, soft, 0, 1), {n, d});
}

}  // namespace infodiff::nn
