// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "infodiff/archive.hpp"
#include "infodiff/diffusion.hpp"
#include "infodiff/networks.hpp"

namespace infodiff::nn {

// Everything needed to rebuild an auxiliary-variable diffusion model:
// data geometry, network widths, latent family and the forward schedule.
struct ModelSpec {
  bool image = true;
  int64_t in_channels = 3;
  int64_t image_size = 32;
  int64_t data_dim = 2;  // vector models
  int64_t base_channels = 32;
  std::vector<int64_t> channel_mults = {1, 2, 4};
  int64_t groups = 8;
  int64_t temb_dim = 64;
  int64_t hidden = 64;  // vector models
  int64_t mlp_depth = 2;
  int64_t z_dim = 8;
  LatentFamily family = LatentFamily::gaussian;
  Conditioning conditioning = Conditioning::all_layers;
  int64_t timesteps = 100;
  double beta_min = 1e-4;
  double beta_max = 0.02;

  nlohmann::json to_json() const {
    return {
        {"image", image},
        {"in_channels", in_channels},
        {"image_size", image_size},
        {"data_dim", data_dim},
        {"base_channels", base_channels},
        {"channel_mults", channel_mults},
        {"groups", groups},
        {"temb_dim", temb_dim},
        {"hidden", hidden},
        {"mlp_depth", mlp_depth},
        {"z_dim", z_dim},
        {"family", to_string(family)},
        {"conditioning", to_string(conditioning)},
        {"timesteps", timesteps},
        {"beta_min", beta_min},
        {"beta_max", beta_max},
    };
  }

  static ModelSpec from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.image = j.at("image").get<bool>();
    s.in_channels = j.at("in_channels").get<int64_t>();
    s.image_size = j.at("image_size").get<int64_t>();
    s.data_dim = j.at("data_dim").get<int64_t>();
    s.base_channels = j.at("base_channels").get<int64_t>();
    s.channel_mults = j.at("channel_mults").get<std::vector<int64_t>>();
    s.groups = j.at("groups").get<int64_t>();
    s.temb_dim = j.at("temb_dim").get<int64_t>();
    s.hidden = j.at("hidden").get<int64_t>();
    s.mlp_depth = j.at("mlp_depth").get<int64_t>();
    s.z_dim = j.at("z_dim").get<int64_t>();
    std::string fam = j.at("family").get<std::string>();
    if (fam == "gaussian") s.family = LatentFamily::gaussian;
    else if (fam == "relaxed_bernoulli") s.family = LatentFamily::relaxed_bernoulli;
    else throw ConfigError("model spec: unknown latent family " + fam);
    std::string cond = j.at("conditioning").get<std::string>();
    if (cond == "all_layers") s.conditioning = Conditioning::all_layers;
    else if (cond == "bottleneck_only") s.conditioning = Conditioning::bottleneck_only;
    else throw ConfigError("model spec: unknown conditioning " + cond);
    s.timesteps = j.at("timesteps").get<int64_t>();
    s.beta_min = j.at("beta_min").get<double>();
    s.beta_max = j.at("beta_max").get<double>();
    return s;
  }
};

// Encoder + conditioned denoiser pair with the schedule they were built for.
template <typename T>
struct AuxModel {
  ModelSpec spec;
  diffusion::Schedule<T> sched;
  std::optional<ConvEncoder<T>> conv_enc;
  std::optional<MlpEncoder<T>> mlp_enc;
  std::optional<CondUNet<T>> unet;
  std::optional<MlpDenoiser<T>> mlp_den;

  static AuxModel init(const ModelSpec& ms, uint64_t seed) {
    AuxModel m;
    m.spec = ms;
    m.sched = diffusion::make_schedule<T>(ms.timesteps,
                                          static_cast<T>(ms.beta_min),
                                          static_cast<T>(ms.beta_max));
    Rng rng(splitmix64(seed ^ 0x6d6f64656cULL));
    if (ms.image) {
      EncoderSpec es;
      es.in_channels = ms.in_channels;
      es.image_size = ms.image_size;
      es.base_channels = ms.base_channels;
      es.channel_mults = ms.channel_mults;
      es.groups = ms.groups;
      es.z_dim = ms.z_dim;
      es.family = ms.family;
      m.conv_enc.emplace(es, rng);
      UNetSpec us;
      us.in_channels = ms.in_channels;
      us.image_size = ms.image_size;
      us.base_channels = ms.base_channels;
      us.channel_mults = ms.channel_mults;
      us.groups = ms.groups;
      us.temb_dim = ms.temb_dim;
      us.z_dim = ms.z_dim;
      us.conditioning = ms.conditioning;
      m.unet.emplace(us, rng);
    } else {
      m.mlp_enc.emplace("enc", ms.data_dim, ms.hidden, ms.z_dim, ms.family, rng);
      MlpSpec ps;
      ps.data_dim = ms.data_dim;
      ps.hidden = ms.hidden;
      ps.depth = ms.mlp_depth;
      ps.temb_dim = ms.temb_dim;
      ps.z_dim = ms.z_dim;
      ps.conditioning = ms.conditioning;
      m.mlp_den.emplace(ps, rng);
    }
    return m;
  }

  Shape data_shape(int64_t n) const {
    return spec.image ? Shape{n, spec.in_channels, spec.image_size, spec.image_size}
                      : Shape{n, spec.data_dim};
  }
  int64_t z_dim() const { return spec.z_dim; }

  Posterior<T> encode(Graph<T>& g, Var<T> x) const {
    return spec.image ? (*conv_enc)(g, x) : (*mlp_enc)(g, x);
  }

  Var<T> eps_theta(Graph<T>& g, Var<T> xt, const std::vector<int64_t>& t,
                   Var<T> z) const {
    return spec.image ? (*unet)(g, xt, t, z) : (*mlp_den)(g, xt, t, z);
  }

  ParamList<T> params() {
    ParamList<T> out;
    if (conv_enc) conv_enc->collect(out);
    if (mlp_enc) mlp_enc->collect(out);
    if (unet) unet->collect(out);
    if (mlp_den) mlp_den->collect(out);
    return out;
  }

  // Posterior statistics for a data tensor without building gradients.
  // Returns the mean for Gaussian posteriors, sigmoid(logits) otherwise.
  Tensor<T> encode_scores(const Tensor<T>& x) {
    Graph<T> g;
    g.grad_enabled = false;
    Posterior<T> p = encode(g, g.constant(x));
    if (spec.family == LatentFamily::gaussian) return p.mean.value();
    Tensor<T> out(p.logits.shape());
    for (int64_t i = 0; i < out.size(); ++i)
      out[i] = T(1) / (T(1) + std::exp(-p.logits.value()[i]));
    return out;
  }
};

// Writes model weights plus a manifest. Callers may append extra arrays
// (optimizer state) via the returned writer before calling write().
template <typename T>
void save_model(const std::string& path, AuxModel<T>& model,
                nlohmann::json extra_manifest = {}) {
  archive::Writer w;
  nlohmann::json manifest;
  manifest["kind"] = "infodiff_checkpoint";
  manifest["model_spec"] = model.spec.to_json();
  for (auto& [k, v] : extra_manifest.items()) manifest[k] = v;
  w.set_manifest(manifest);
  for (Parameter<T>* p : model.params()) w.add("param." + p->name, p->value);
  w.write(path);
}

template <typename T>
AuxModel<T> load_model_from(const archive::Reader& r) {
  ModelSpec ms = ModelSpec::from_json(r.manifest().at("model_spec"));
  AuxModel<T> m = AuxModel<T>::init(ms, 0);
  for (Parameter<T>* p : m.params()) p->value = r.get<T>("param." + p->name);
  return m;
}

template <typename T>
AuxModel<T> load_model(const std::string& path) {
  return load_model_from<T>(archive::Reader::load(path));
}

}  // namespace infodiff::nn
