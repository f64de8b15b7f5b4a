// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "infodiff/data.hpp"
#include "infodiff/model.hpp"
#include "infodiff/objectives.hpp"
#include "infodiff/sampler.hpp"

namespace infodiff::train {

inline constexpr const char* kLibraryVersion = "infodiff-0.1.0";

// ---- optimizer ---------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. State is keyed by parameter name so checkpoints
// survive re-initialization order changes.
template <typename T>
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(const nn::ParamList<T>& params) {
    ++t_;
    T bc1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, static_cast<double>(t_)));
    T bc2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, static_cast<double>(t_)));
    T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    for (nn::Parameter<T>* p : params) {
      Tensor<T>& m = state(m_, *p);
      Tensor<T>& v = state(v_, *p);
      for (int64_t i = 0; i < p->value.size(); ++i) {
        T gr = p->grad[i];
        m[i] = b1 * m[i] + (T(1) - b1) * gr;
        v[i] = b2 * v[i] + (T(1) - b2) * gr * gr;
        p->value[i] -= static_cast<T>(cfg_.lr) * (m[i] / bc1) /
                       (std::sqrt(v[i] / bc2) + static_cast<T>(cfg_.eps));
      }
    }
  }

  int64_t t() const { return t_; }

  void save(archive::Writer& w, const std::string& prefix) const {
    for (const auto& [name, m] : m_) w.add(prefix + ".m." + name, m);
    for (const auto& [name, v] : v_) w.add(prefix + ".v." + name, v);
  }

  void load(const archive::Reader& r, const std::string& prefix, int64_t t) {
    t_ = t;
    m_.clear();
    v_.clear();
    for (const std::string& name : r.names()) {
      if (name.rfind(prefix + ".m.", 0) == 0)
        m_[name.substr(prefix.size() + 3)] = r.get<T>(name);
      else if (name.rfind(prefix + ".v.", 0) == 0)
        v_[name.substr(prefix.size() + 3)] = r.get<T>(name);
    }
  }

 private:
  Tensor<T>& state(std::map<std::string, Tensor<T>>& s, const nn::Parameter<T>& p) {
    auto it = s.find(p.name);
    if (it == s.end())
      it = s.emplace(p.name, Tensor<T>::zeros(p.value.shape())).first;
    return it->second;
  }

  AdamConfig cfg_;
  int64_t t_ = 0;
  std::map<std::string, Tensor<T>> m_, v_;
};

// ---- experiment config -------------------------------------------------------------

// Flat key/value experiment description. Desk-scale defaults; the paper's
// Appendix C settings (3DShapes row of Table 7) are one call away.
struct ExperimentConfig {
  std::string dataset = "synthetic";  // synthetic | two_moons | <image folder>
  int64_t image_size = 32;
  int64_t two_moons_n = 2000;
  double two_moons_noise = 0.05;

  nn::ModelSpec model;
  objectives::ObjectiveConfig objective;
  objectives::TemperatureSchedule temperature;

  std::string optimizer = "adam";
  double lr = 1e-4;
  int64_t epochs = 10;
  int64_t batch_size = 16;
  int64_t max_steps = -1;  // >= 0 overrides the epoch count
  uint64_t seed = 0;
  std::string output_dir = "runs/exp";
  int64_t checkpoint_every = 1000;
  int64_t keep_checkpoints = 3;
  int64_t prior_steps = 0;  // > 0 appends the learned latent prior stage

  ExperimentConfig() {
    // desk scale: small UNet, short schedule
    model.base_channels = 16;
    model.channel_mults = {1, 2};
    model.z_dim = 8;
    model.timesteps = 100;
  }

  void apply_paper_defaults() {
    model.base_channels = 32;
    model.channel_mults = {1, 2, 4, 8};
    model.z_dim = 10;
    lr = 1e-4;
    epochs = 50;
    batch_size = 64;
    max_steps = -1;
  }

  void validate() const {
    objective.validate();  // rejects zeta > 1 and zeta + lambda < 1 up front
    if (model.family == nn::LatentFamily::relaxed_bernoulli)
      temperature.validate();
    if (optimizer != "adam")
      throw ConfigError("config: unknown optimizer " + optimizer);
    if (!(lr > 0)) throw ConfigError("config: lr must be > 0");
    if (epochs < 1 && max_steps < 1)
      throw ConfigError("config: need epochs >= 1 or max_steps >= 1");
    if (batch_size < 1) throw ConfigError("config: batch_size >= 1");
    if (checkpoint_every < 1) throw ConfigError("config: checkpoint_every >= 1");
    if (keep_checkpoints < 1) throw ConfigError("config: keep_checkpoints >= 1");
    if (prior_steps < 0) throw ConfigError("config: prior_steps >= 0");
    if (dataset.empty()) throw ConfigError("config: dataset is required");
    if (dataset == "two_moons" && two_moons_n < 2)
      throw ConfigError("config: two_moons_n >= 2");
    if (model.z_dim < 1 || model.timesteps < 1 || model.base_channels < 1 ||
        model.hidden < 1)
      throw ConfigError("config: model dimensions must be positive");
    if (output_dir.empty()) throw ConfigError("config: output_dir is required");
  }

  nlohmann::json to_json() const {
    nlohmann::json j = model.to_json();
    j["dataset"] = dataset;
    j["two_moons_n"] = two_moons_n;
    j["two_moons_noise"] = two_moons_noise;
    j["zeta"] = objective.zeta;
    j["lambda"] = objective.lam;
    j["divergence"] =
        objective.divergence == objectives::Divergence::mmd ? "mmd" : "kl";
    j["simple_loss"] = objective.simple_loss;
    j["bandwidths"] = objective.bandwidths;
    j["kl_mc_samples"] = objective.kl_mc_samples;
    j["tau_init"] = temperature.tau_init;
    j["tau_min"] = temperature.tau_min;
    j["tau_decrement"] = temperature.decrement;
    j["tau_interval"] = temperature.interval_steps;
    j["optimizer"] = optimizer;
    j["lr"] = lr;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["max_steps"] = max_steps;
    j["seed"] = seed;
    j["output_dir"] = output_dir;
    j["checkpoint_every"] = checkpoint_every;
    j["keep_checkpoints"] = keep_checkpoints;
    j["prior_steps"] = prior_steps;
    return j;
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    nlohmann::json known = c.to_json();
    for (const auto& [k, v] : j.items())
      if (!known.contains(k)) throw ConfigError("config: unknown key '" + k + "'");

    nlohmann::json m = c.model.to_json();
    for (const auto& [k, v] : j.items())
      if (m.contains(k)) m[k] = v;
    c.model = nn::ModelSpec::from_json(m);

    auto get = [&j](const char* k, auto& dst) {
      if (j.contains(k)) dst = j.at(k).template get<std::decay_t<decltype(dst)>>();
    };
    get("dataset", c.dataset);
    c.image_size = c.model.image_size;
    get("two_moons_n", c.two_moons_n);
    get("two_moons_noise", c.two_moons_noise);
    get("zeta", c.objective.zeta);
    get("lambda", c.objective.lam);
    if (j.contains("divergence")) {
      std::string d = j.at("divergence").get<std::string>();
      if (d == "mmd") c.objective.divergence = objectives::Divergence::mmd;
      else if (d == "kl") c.objective.divergence = objectives::Divergence::kl;
      else throw ConfigError("config: unknown divergence " + d);
    }
    get("simple_loss", c.objective.simple_loss);
    get("bandwidths", c.objective.bandwidths);
    get("kl_mc_samples", c.objective.kl_mc_samples);
    get("tau_init", c.temperature.tau_init);
    get("tau_min", c.temperature.tau_min);
    get("tau_decrement", c.temperature.decrement);
    get("tau_interval", c.temperature.interval_steps);
    get("optimizer", c.optimizer);
    get("lr", c.lr);
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("max_steps", c.max_steps);
    get("seed", c.seed);
    get("output_dir", c.output_dir);
    get("checkpoint_every", c.checkpoint_every);
    get("keep_checkpoints", c.keep_checkpoints);
    get("prior_steps", c.prior_steps);

    // dataset kind fixes the model's input contract
    if (c.dataset == "two_moons") {
      c.model.image = false;
      c.model.data_dim = 2;
    } else {
      c.model.image = true;
      c.model.in_channels = 3;
    }
    return c;
  }

  static ExperimentConfig from_file(const std::string& path);
};

// ---- flat TOML subset --------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline nlohmann::json toml_scalar(const std::string& raw, int line_no) {
  std::string v = trim(raw);
  if (v.empty()) throw ConfigError("toml: empty value at line " + std::to_string(line_no));
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"')
      throw ConfigError("toml: unterminated string at line " + std::to_string(line_no));
    return v.substr(1, v.size() - 2);
  }
  if (v == "true") return true;
  if (v == "false") return false;
  try {
    size_t used = 0;
    if (v.find_first_of(".eE") == std::string::npos) {
      int64_t n = std::stoll(v, &used);
      if (used == v.size()) return n;
    }
    double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("toml: cannot parse value '" + v + "' at line " +
                    std::to_string(line_no));
}

}  // namespace detail

// `key = value` lines only: strings, booleans, numbers and flat arrays.
// Comments start with '#'. This is the subset the config format needs; the
// JSON mirror covers anything richer.
inline nlohmann::json parse_flat_toml(std::istream& in) {
  nlohmann::json out = nlohmann::json::object();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = detail::trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("toml: expected key = value at line " +
                        std::to_string(line_no));
    std::string key = detail::trim(line.substr(0, eq));
    if (key.empty() ||
        key.find_first_not_of(
            "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_") !=
            std::string::npos)
      throw ConfigError("toml: bad key '" + key + "' at line " +
                        std::to_string(line_no));
    if (out.contains(key))
      throw ConfigError("toml: duplicate key '" + key + "' at line " +
                        std::to_string(line_no));
    std::string val = detail::trim(line.substr(eq + 1));
    if (!val.empty() && val.front() == '[') {
      if (val.back() != ']')
        throw ConfigError("toml: unterminated array at line " +
                          std::to_string(line_no));
      nlohmann::json arr = nlohmann::json::array();
      std::string body = val.substr(1, val.size() - 2);
      std::stringstream ss(body);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!detail::trim(item).empty())
          arr.push_back(detail::toml_scalar(item, line_no));
      out[key] = arr;
    } else {
      out[key] = detail::toml_scalar(val, line_no);
    }
  }
  return out;
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  std::filesystem::path p(path);
  if (p.extension() == ".json") {
    nlohmann::json j;
    f >> j;
    return from_json(j);
  }
  if (p.extension() == ".toml") return from_json(parse_flat_toml(f));
  throw ConfigError("config: expected .toml or .json, got " + path);
}

// ---- run manifest ------------------------------------------------------------------

inline std::string content_hash_hex(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct RunManifest {
  nlohmann::json config;
  std::string content_hash;
  std::string run_dir;
  std::string metrics_path;
  std::vector<std::string> checkpoints;
  std::string status = "running";
  int64_t steps_done = 0;
  double wall_clock_sec = 0;

  nlohmann::json to_json() const {
    return {{"kind", "infodiff_run"},     {"library", kLibraryVersion},
            {"config", config},           {"content_hash", content_hash},
            {"metrics_path", metrics_path}, {"checkpoints", checkpoints},
            {"status", status},           {"steps_done", steps_done},
            {"wall_clock_sec", wall_clock_sec}};
  }

  void write() const {
    std::ofstream f((std::filesystem::path(run_dir) / "manifest.json").string());
    f << to_json().dump(2) << "\n";
  }
};

// ---- dataset resolution ------------------------------------------------------------

// Folder datasets resolve against INFODIFF_DATA_DIR unless the path is
// already absolute; synthetic renders go through the archive cache.
inline data::Dataset load_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset == "synthetic") {
    data::SyntheticFactorSpec spec;
    spec.image_size = cfg.model.image_size;
    const char* root = std::getenv("INFODIFF_DATA_DIR");
    std::string cache =
        (std::filesystem::path(root ? root : ".") / "cache").string();
    return data::cached_synthetic_dataset(spec, cache);
  }
  if (cfg.dataset == "two_moons")
    return data::two_moons_dataset(cfg.two_moons_n, cfg.two_moons_noise, cfg.seed);
  std::filesystem::path dir(cfg.dataset);
  if (dir.is_relative()) {
    const char* root = std::getenv("INFODIFF_DATA_DIR");
    if (root) dir = std::filesystem::path(root) / dir;
  }
  return data::ingest_image_folder(dir.string(),
                                   {.image_size = cfg.model.image_size});
}

// ---- trainer -----------------------------------------------------------------------

namespace detail {
constexpr uint64_t kBatchPurpose = 0x62;  // batch index draws
constexpr uint64_t kStepPurpose = 0x74;   // objective randomness
constexpr uint64_t kPriorPurpose = 0x70;  // latent prior stage
}  // namespace detail

struct StepStats {
  int64_t step = 0;
  double tau = 1.0;
  std::map<std::string, double> terms;

  std::string json_line() const {
    auto num = [](double v) {
      nlohmann::json j = v;
      return j.dump();
    };
    auto term = [&](const char* k) {
      auto it = terms.find(k);
      return num(it == terms.end() ? 0.0 : it->second);
    };
    // fixed key order so logs diff cleanly
    return "{\"step\":" + std::to_string(step) + ",\"loss\":" + term("loss") +
           ",\"recon\":" + term("recon") + ",\"denoise\":" + term("denoise") +
           ",\"kl_z\":" + term("kl_z") + ",\"mmd\":" + term("mmd") +
           ",\"tau\":" + num(tau) + "}";
  }
};

// Latent prior package: denoiser over standardized codes plus the
// de-standardization moments, trained after the main model (Appendix D.2).
template <typename T>
struct LatentPrior {
  nn::LatentDenoiser<T> net;
  Tensor<T> z_mean, z_std;  // (z_dim)
};

// Owns the model and optimizer. Every random draw comes from an
// Rng::stream(seed, step, purpose), so a resumed run replays the exact
// tail of an uninterrupted one.
template <typename T = double>
class Trainer {
 public:
  Trainer(ExperimentConfig cfg, const data::Dataset& ds)
      : cfg_(std::move(cfg)), ds_(&ds) {
    cfg_.validate();
    check_dataset();
    model_ = nn::AuxModel<T>::init(cfg_.model, cfg_.seed);
    prior_ = default_prior();
    opt_ = Adam<T>(AdamConfig{.lr = cfg_.lr});
  }

  Trainer(const std::string& checkpoint, const data::Dataset& ds) : ds_(&ds) {
    auto r = archive::Reader::load(checkpoint);
    if (r.manifest().value("kind", "") != "infodiff_checkpoint")
      throw ConfigError("resume: " + checkpoint + " is not a checkpoint");
    cfg_ = ExperimentConfig::from_json(r.manifest().at("config"));
    cfg_.validate();
    check_dataset();
    model_ = nn::load_model_from<T>(r);
    prior_ = default_prior();
    opt_ = Adam<T>(AdamConfig{.lr = cfg_.lr});
    step_ = r.manifest().at("step").get<int64_t>();
    opt_.load(r, "adam", r.manifest().at("adam_t").get<int64_t>());
    if (r.manifest().value("has_prior", false)) {
      LatentPrior<T> lp;
      Rng init(0);
      lp.net = nn::LatentDenoiser<T>("lprior", cfg_.model.z_dim, 64, 32, init);
      nn::ParamList<T> ps;
      lp.net.collect(ps);
      for (nn::Parameter<T>* p : ps) p->value = r.get<T>("lprior." + p->name);
      lp.z_mean = r.get<T>("lprior.z_mean");
      lp.z_std = r.get<T>("lprior.z_std");
      lprior_ = std::move(lp);
    }
  }

  const ExperimentConfig& config() const { return cfg_; }

  // Resuming may extend the step budget; everything else must match.
  void adopt_budget(const ExperimentConfig& c) {
    cfg_.max_steps = c.max_steps;
    cfg_.epochs = c.epochs;
  }

  nn::AuxModel<T>& model() { return model_; }
  const objectives::Prior<T>& prior() const { return prior_; }
  int64_t step() const { return step_; }
  bool has_latent_prior() const { return lprior_.has_value(); }
  const LatentPrior<T>& latent_prior() const { return *lprior_; }

  int64_t total_steps() const {
    if (cfg_.max_steps >= 0) return cfg_.max_steps;
    int64_t n = ds_->n();
    int64_t per_epoch = (n + cfg_.batch_size - 1) / cfg_.batch_size;
    return cfg_.epochs * per_epoch;
  }

  StepStats train_step() {
    Tensor<T> xb = draw_batch();
    StepStats s;
    s.step = step_;
    s.tau = current_tau();

    objectives::ObjectiveConfig oc = cfg_.objective;
    oc.temperature = s.tau;
    Rng rng = Rng::stream(cfg_.seed, static_cast<uint64_t>(step_),
                          detail::kStepPurpose);
    auto params = model_.params();
    nn::zero_grads(params);
    ad::Graph<T> g;
    auto out = objectives::info_objective(g, xb, model_, model_.sched, oc,
                                          prior_, rng);
    g.backward(out.loss);
    opt_.step(params);
    s.terms = out.terms;
    ++step_;
    return s;
  }

  // DiffAE-style second stage: freeze the encoder, fit a small denoiser to
  // the standardized code distribution with the plain noise-MSE loss.
  void train_latent_prior(int64_t steps) {
    if (steps < 1) throw ConfigError("latent prior: steps >= 1");
    Tensor<T> z = encode_dataset();
    int64_t n = z.dim(0), d = z.dim(1);

    LatentPrior<T> lp;
    lp.z_mean = Tensor<T>({d});
    lp.z_std = Tensor<T>({d});
    for (int64_t j = 0; j < d; ++j) {
      double mu = 0;
      for (int64_t i = 0; i < n; ++i) mu += z[i * d + j];
      mu /= static_cast<double>(n);
      double ss = 0;
      for (int64_t i = 0; i < n; ++i) {
        double c = z[i * d + j] - mu;
        ss += c * c;
      }
      lp.z_mean[j] = static_cast<T>(mu);
      lp.z_std[j] = static_cast<T>(
          std::max(std::sqrt(ss / static_cast<double>(std::max<int64_t>(n - 1, 1))),
                   1e-8));
    }
    Tensor<T> zs = z.clone();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j)
        zs[i * d + j] = (zs[i * d + j] - lp.z_mean[j]) / lp.z_std[j];

    Rng init(splitmix64(cfg_.seed ^ 0x6c707269ULL));
    lp.net = nn::LatentDenoiser<T>("lprior", d, 64, 32, init);
    nn::ParamList<T> params;
    lp.net.collect(params);
    Adam<T> opt(AdamConfig{.lr = cfg_.lr});
    const auto& sched = model_.sched;
    int64_t b = std::min<int64_t>(cfg_.batch_size, n);

    for (int64_t s = 0; s < steps; ++s) {
      Rng rng = Rng::stream(cfg_.seed, static_cast<uint64_t>(s),
                            detail::kPriorPurpose);
      Tensor<T> zb({b, d});
      for (int64_t i = 0; i < b; ++i) {
        int64_t src = rng.uniform_int(0, n - 1);
        for (int64_t j = 0; j < d; ++j) zb[i * d + j] = zs[src * d + j];
      }
      std::vector<int64_t> ts(static_cast<size_t>(b));
      for (auto& t : ts) t = rng.uniform_int(1, sched.steps);
      Tensor<T> eps = rng.template normal_tensor<T>(zb.shape());
      Tensor<T> zt(zb.shape());
      for (int64_t i = 0; i < b; ++i) {
        T sab = std::sqrt(sched.alpha_bar[ts[static_cast<size_t>(i)]]);
        T somb = std::sqrt(T(1) - sched.alpha_bar[ts[static_cast<size_t>(i)]]);
        for (int64_t j = 0; j < d; ++j)
          zt[i * d + j] = sab * zb[i * d + j] + somb * eps[i * d + j];
      }
      nn::zero_grads(params);
      ad::Graph<T> g;
      auto loss = ad::mean_all(
          g, ad::square(g, ad::sub(g, lp.net(g, g.constant(zt), ts),
                                   g.constant(eps))));
      if (!std::isfinite(static_cast<double>(loss.value()[0])))
        throw TrainingFault("latent prior: non-finite loss");
      g.backward(loss);
      opt.step(params);
    }
    lprior_ = std::move(lp);
  }

  // Posterior scores for the whole dataset, in row order, bounded graphs.
  Tensor<T> encode_dataset(int64_t chunk = 256) {
    int64_t n = ds_->n();
    Tensor<T> z({n, model_.z_dim()});
    int64_t row = ds_->x.size() / n;
    for (int64_t at = 0; at < n; at += chunk) {
      int64_t b = std::min(chunk, n - at);
      Shape s = ds_->x.shape();
      s[0] = b;
      Tensor<T> xb(s);
      std::copy(ds_->x.data() + at * row, ds_->x.data() + (at + b) * row,
                xb.data());
      Tensor<T> zb = model_.encode_scores(xb);
      std::copy(zb.data(), zb.data() + zb.size(), z.data() + at * model_.z_dim());
    }
    return z;
  }

  void save_checkpoint(const std::string& path) {
    archive::Writer w;
    nlohmann::json manifest;
    manifest["kind"] = "infodiff_checkpoint";
    manifest["library"] = kLibraryVersion;
    manifest["model_spec"] = model_.spec.to_json();
    manifest["config"] = cfg_.to_json();
    manifest["step"] = step_;
    manifest["adam_t"] = opt_.t();
    manifest["has_prior"] = lprior_.has_value();
    w.set_manifest(manifest);
    for (nn::Parameter<T>* p : model_.params()) w.add("param." + p->name, p->value);
    opt_.save(w, "adam");
    if (lprior_) {
      nn::ParamList<T> ps;
      lprior_->net.collect(ps);
      for (nn::Parameter<T>* p : ps) w.add("lprior." + p->name, p->value);
      w.add("lprior.z_mean", lprior_->z_mean);
      w.add("lprior.z_std", lprior_->z_std);
    }
    w.write(path);
  }

 private:
  objectives::Prior<T> default_prior() const {
    return cfg_.model.family == nn::LatentFamily::relaxed_bernoulli
               ? objectives::Prior<T>::bernoulli_half(cfg_.model.z_dim)
               : objectives::Prior<T>::standard_normal(cfg_.model.z_dim);
  }

  double current_tau() const {
    if (cfg_.model.family == nn::LatentFamily::relaxed_bernoulli)
      return objectives::anneal_temperature(step_, cfg_.temperature);
    return cfg_.objective.temperature;
  }

  void check_dataset() {
    if (!ds_->x.defined()) return;  // sampling-only use needs no data
    Shape want = cfg_.model.image
                     ? Shape{ds_->n(), cfg_.model.in_channels,
                             cfg_.model.image_size, cfg_.model.image_size}
                     : Shape{ds_->n(), cfg_.model.data_dim};
    if (ds_->x.shape() != want)
      throw ConfigError("trainer: dataset shape does not match the model spec");
  }

  Tensor<T> draw_batch() const {
    int64_t n = ds_->n();
    int64_t b = std::min<int64_t>(cfg_.batch_size, n);
    int64_t row = ds_->x.size() / n;
    Rng rng = Rng::stream(cfg_.seed, static_cast<uint64_t>(step_),
                          detail::kBatchPurpose);
    Shape s = ds_->x.shape();
    s[0] = b;
    Tensor<T> xb(s);
    for (int64_t i = 0; i < b; ++i) {
      int64_t src = rng.uniform_int(0, n - 1);
      std::copy(ds_->x.data() + src * row, ds_->x.data() + (src + 1) * row,
                xb.data() + i * row);
    }
    return xb;
  }

  ExperimentConfig cfg_;
  const data::Dataset* ds_;
  nn::AuxModel<T> model_;
  objectives::Prior<T> prior_;
  Adam<T> opt_;
  std::optional<LatentPrior<T>> lprior_;
  int64_t step_ = 0;
};

// ---- orchestration -----------------------------------------------------------------

namespace detail {

inline std::vector<std::string> list_checkpoints(const std::string& dir) {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    std::string name = e.path().filename().string();
    if (name.rfind("ckpt_step", 0) == 0 && e.path().extension() == ".idarch")
      out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::string checkpoint_name(int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_step%08lld.idarch",
                static_cast<long long>(step));
  return buf;
}

}  // namespace detail

// The full training loop: manifest up front, JSON-lines metrics per step,
// checkpoints every `checkpoint_every` steps and at exit (keeping the last
// `keep_checkpoints`), manifest finalized on success or failure.
template <typename T = double>
RunManifest run_training(const ExperimentConfig& cfg, const data::Dataset& ds,
                         const std::string& resume_checkpoint = "") {
  namespace fs = std::filesystem;
  cfg.validate();
  fs::create_directories(cfg.output_dir);

  RunManifest mf;
  mf.config = cfg.to_json();
  mf.content_hash =
      content_hash_hex(std::string(kLibraryVersion) + mf.config.dump());
  mf.run_dir = cfg.output_dir;
  mf.metrics_path = (fs::path(cfg.output_dir) / "metrics.jsonl").string();
  mf.write();
  {
    std::ofstream cf((fs::path(cfg.output_dir) / "config.json").string());
    cf << mf.config.dump(2) << "\n";
  }

  bool resuming = !resume_checkpoint.empty();
  Trainer<T> tr = resuming ? Trainer<T>(resume_checkpoint, ds)
                           : Trainer<T>(cfg, ds);
  if (resuming) {
    auto masked = [](nlohmann::json j) {
      j.erase("max_steps");  // extending the budget is a legitimate resume
      j.erase("epochs");
      return j;
    };
    if (masked(tr.config().to_json()) != masked(mf.config))
      throw ConfigError("resume: checkpoint config differs from the request");
    tr.adopt_budget(cfg);
  }

  auto t0 = std::chrono::steady_clock::now();
  auto finalize = [&](const char* status) {
    mf.status = status;
    mf.steps_done = tr.step();
    mf.checkpoints = detail::list_checkpoints(cfg.output_dir);
    mf.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    mf.write();
  };

  std::ofstream log(mf.metrics_path,
                    resuming ? std::ios::app : std::ios::trunc);
  if (!log) throw IngestError("train: cannot open " + mf.metrics_path);

  auto checkpoint_now = [&](int64_t step) {
    std::string path =
        (fs::path(cfg.output_dir) / detail::checkpoint_name(step)).string();
    tr.save_checkpoint(path);
    auto all = detail::list_checkpoints(cfg.output_dir);
    while (static_cast<int64_t>(all.size()) > cfg.keep_checkpoints) {
      fs::remove(all.front());
      all.erase(all.begin());
    }
  };

  int64_t total = tr.total_steps();
  try {
    while (tr.step() < total) {
      StepStats s = tr.train_step();
      log << s.json_line() << "\n";
      if (tr.step() % cfg.checkpoint_every == 0 && tr.step() < total)
        checkpoint_now(tr.step());
    }
    log.flush();
    if (cfg.prior_steps > 0) tr.train_latent_prior(cfg.prior_steps);
    checkpoint_now(tr.step());
  } catch (...) {
    // keep the last good checkpoint; just record the failure
    log.flush();
    finalize("aborted");
    throw;
  }
  finalize("complete");
  return mf;
}

// ---- evaluation --------------------------------------------------------------------

struct EvalOptions {
  int64_t folds = 5;
  uint64_t seed = 0;
  bool fid = false;
  int64_t fid_samples = 512;
  int64_t fid_steps = 10;  // strided deterministic decode for sample generation
};

// Latent metrics for a trained model on a labeled dataset; FID proxy uses
// the model's own encoder as the feature map over two-phase samples.
template <typename T = double>
metrics::MetricReport evaluate_model(Trainer<T>& tr, const data::Dataset& ds,
                                     const EvalOptions& opt = {}) {
  if (ds.attrs.columns.empty())
    throw ConfigError("eval: dataset has no attribute table");
  Tensor<T> z = tr.encode_dataset();

  metrics::MetricReport rep;
  rep.folds = opt.folds;
  rep.latent_quality =
      metrics::latent_quality(z, ds.attrs, opt.folds, opt.seed);

  rep.has_dci = ds.attrs.columns.size() >= 2;
  if (rep.has_dci) rep.dci = metrics::dci_disentanglement(z, ds.attrs);

  metrics::AttributeTable bin = data::binarize_attributes(ds.attrs);
  rep.has_tad = bin.n >= 100 && z.dim(1) >= 2;
  if (rep.has_tad) {
    auto tad = metrics::tad(z, bin);
    rep.tad_score = tad.score;
    rep.captured = static_cast<double>(tad.captured);
  }

  if (opt.fid) {
    auto& model = tr.model();
    int64_t n = std::min<int64_t>(opt.fid_samples, ds.n());
    if (n < 500) throw ConfigError("eval: fid needs >= 500 samples");
    // prior z + gaussian x_T, decoded on the strided deterministic grid
    Tensor<T> zp = sampler::prior_z_for_chains<T>(tr.prior(), n, opt.seed);
    Tensor<T> xT(model.data_shape(n));
    int64_t row = xT.size() / n;
    for (int64_t c = 0; c < n; ++c)
      sampler::detail::fill_chain_noise(xT.data() + c * row, row, opt.seed, c,
                                        model.sched.steps + 1,
                                        sampler::detail::kNoisePurpose);
    sampler::CondEps<T, nn::AuxModel<T>> eps{model, zp};
    Tensor<T> gen = sampler::ddim_decode(eps, xT, model.sched, opt.fid_steps);

    std::vector<int64_t> head(static_cast<size_t>(n));
    std::iota(head.begin(), head.end(), 0);
    data::Dataset ref = data::take(ds, head);
    auto feat = [&](const Tensor<T>& x) { return model.encode_scores(x); };
    rep.fid = metrics::fid_proxy(gen, ref.x, feat);
    rep.has_fid = true;
  }
  return rep;
}

}  // namespace infodiff::train
