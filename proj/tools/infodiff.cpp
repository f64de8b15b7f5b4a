// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
//
// infodiff {train|verify|eval|sample|interpolate}
//
// Exit codes: 0 success, 1 runtime fault (training/sampling/numerical),
// 2 usage or configuration error.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "infodiff/oracle.hpp"
#include "infodiff/plot.hpp"
#include "infodiff/train.hpp"

namespace fs = std::filesystem;
using namespace infodiff;

namespace {

struct TrainArgs {
  std::string config;
  std::string resume;  // checkpoint path or "latest"
  std::string out;
  int64_t seed = -1;
  int64_t max_steps = -2;
  int64_t prior_steps = -1;
  bool paper_defaults = false;
};

struct VerifyArgs {
  uint64_t seed = 0;
  int64_t instances = 100;
  std::string out;
};

struct EvalArgs {
  std::string checkpoint;
  std::string out;
  std::string plot;
  uint64_t seed = 0;
  int64_t folds = 5;
  bool fid = false;
  int64_t fid_samples = 512;
};

struct SampleArgs {
  std::string checkpoint;
  std::string base_checkpoint;
  std::string mode = "two_phase";
  std::string out;
  int64_t count = 8;
  int64_t steps = -1;
  int64_t switch_t = -1;
  uint64_t seed = 0;
};

struct InterpArgs {
  std::string checkpoint;
  std::string out;
  int64_t index_a = 0;
  int64_t index_b = 1;
  int64_t frames = 10;
  int64_t steps = -1;
  uint64_t seed = 0;
  bool paper_literal = false;
};

std::string latest_checkpoint(const std::string& dir) {
  auto all = train::detail::list_checkpoints(dir);
  if (all.empty())
    throw ConfigError("resume: no checkpoints under " + dir);
  return all.back();
}

// Writes (n, 3, h, w) batches as a PNG folder, or (n, d) batches as CSV.
void write_samples(const Tensor<double>& x, bool image, const std::string& out) {
  fs::create_directories(out);
  if (image) {
    data::Dataset ds;
    ds.image = true;
    ds.x = x;
    data::export_image_folder(ds, out);
    return;
  }
  std::ofstream f((fs::path(out) / "samples.csv").string());
  int64_t n = x.dim(0), d = x.dim(1);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", x[i * d + j]);
      f << (j ? "," : "") << buf;
    }
    f << "\n";
  }
}

int cmd_train(const TrainArgs& a) {
  train::ExperimentConfig cfg = train::ExperimentConfig::from_file(a.config);
  if (a.paper_defaults) cfg.apply_paper_defaults();
  if (a.seed >= 0) cfg.seed = static_cast<uint64_t>(a.seed);
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (a.max_steps > -2) cfg.max_steps = a.max_steps;
  if (a.prior_steps >= 0) cfg.prior_steps = a.prior_steps;
  cfg.validate();

  data::Dataset ds = train::load_dataset(cfg);
  std::string resume = a.resume == "latest"
                           ? latest_checkpoint(cfg.output_dir)
                           : a.resume;
  train::RunManifest mf = train::run_training(cfg, ds, resume);
  std::cout << "run " << mf.status << ": " << mf.steps_done << " steps, "
            << mf.checkpoints.size() << " checkpoints under " << mf.run_dir
            << "\n";
  return 0;
}

int cmd_verify(const VerifyArgs& a) {
  nlohmann::json rep = oracle::run_all(a.seed, a.instances);
  std::cout << rep.dump(2) << "\n";
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    f << rep.dump(2) << "\n";
  }
  return rep.at("ok").get<bool>() ? 0 : 1;
}

int cmd_eval(const EvalArgs& a) {
  data::Dataset ds = [&] {
    auto r = archive::Reader::load(a.checkpoint);
    return train::load_dataset(
        train::ExperimentConfig::from_json(r.manifest().at("config")));
  }();
  train::Trainer<double> tr(a.checkpoint, ds);
  train::EvalOptions opt;
  opt.folds = a.folds;
  opt.seed = a.seed;
  opt.fid = a.fid;
  opt.fid_samples = a.fid_samples;
  metrics::MetricReport rep = train::evaluate_model(tr, ds, opt);

  std::string json = rep.to_json().dump(2);
  std::cout << json << "\n";
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    f << json << "\n";
  }
  if (!a.plot.empty()) {
    std::vector<std::string> labels;
    std::vector<double> values;
    for (const auto& [name, ps] : rep.latent_quality.per_attribute) {
      labels.push_back(name);
      values.push_back(ps.mean);
    }
    if (rep.has_dci) {
      labels.push_back("dci");
      values.push_back(rep.dci);
    }
    if (rep.has_tad) {
      labels.push_back("tad");
      values.push_back(rep.tad_score);
    }
    plot::bar_chart(a.plot, "latent metrics", labels, values);
  }
  return 0;
}

int cmd_sample(const SampleArgs& a) {
  data::Dataset ds;  // only loaded for data-conditioned modes
  auto reader = archive::Reader::load(a.checkpoint);
  train::ExperimentConfig cfg =
      train::ExperimentConfig::from_json(reader.manifest().at("config"));
  bool needs_data = a.mode == "posterior" || a.mode == "reconstruction";
  if (needs_data) ds = train::load_dataset(cfg);
  train::Trainer<double> tr(a.checkpoint, ds);

  auto& model = tr.model();
  if (a.count < 1) throw ConfigError("sample: count >= 1");
  Tensor<double> out;

  if (a.mode == "posterior") {
    if (ds.n() < a.count)
      throw ConfigError("sample: dataset smaller than requested count");
    Shape s = ds.x.shape();
    s[0] = a.count;
    Tensor<double> x0(s);
    std::copy(ds.x.data(), ds.x.data() + x0.size(), x0.data());
    Tensor<double> z = sampler::deterministic_code(model, x0);
    out = sampler::ancestral_sample(model, z, model.sched, a.seed);
  } else if (a.mode == "two_phase") {
    int64_t switch_t = a.switch_t >= 0 ? a.switch_t : model.sched.steps / 2;
    std::optional<nn::AuxModel<double>> base;
    if (!a.base_checkpoint.empty())
      base = nn::load_model<double>(a.base_checkpoint);
    // default: the model itself denoises phase one with a zero code
    nn::AuxModel<double>& base_ref = base ? *base : model;
    out = sampler::two_phase_prior_sample(a.count, switch_t, &base_ref, model,
                                          tr.prior(), model.sched, a.seed);
  } else if (a.mode == "learned_prior") {
    if (!tr.has_latent_prior())
      throw ConfigError(
          "sample: checkpoint has no latent prior (train with prior_steps > 0)");
    const auto& lp = tr.latent_prior();
    sampler::LatentEps<double> eps{lp.net};
    out = sampler::learned_prior_sample(a.count, eps, model, model.sched,
                                        model.sched, lp.z_mean, lp.z_std,
                                        a.seed);
  } else if (a.mode == "reconstruction") {
    if (ds.n() < a.count)
      throw ConfigError("sample: dataset smaller than requested count");
    Shape s = ds.x.shape();
    s[0] = a.count;
    Tensor<double> x0(s);
    std::copy(ds.x.data(), ds.x.data() + x0.size(), x0.data());
    auto rec = sampler::reconstruct(x0, model, model.sched, a.steps);
    std::cout << "reconstruction rmse: " << rec.rmse << "\n";
    out = rec.x_hat;
  } else {
    throw ConfigError("sample: unknown mode " + a.mode);
  }

  write_samples(out, cfg.model.image, a.out);
  std::cout << "wrote " << a.count << " " << a.mode << " samples to " << a.out
            << "\n";
  return 0;
}

int cmd_interpolate(const InterpArgs& a) {
  auto reader = archive::Reader::load(a.checkpoint);
  train::ExperimentConfig cfg =
      train::ExperimentConfig::from_json(reader.manifest().at("config"));
  data::Dataset ds = train::load_dataset(cfg);
  train::Trainer<double> tr(a.checkpoint, ds);
  auto& model = tr.model();

  if (a.index_a < 0 || a.index_b < 0 || a.index_a >= ds.n() ||
      a.index_b >= ds.n())
    throw ConfigError("interpolate: endpoint index out of range");
  if (a.frames < 2) throw ConfigError("interpolate: frames >= 2");

  int64_t row = ds.x.size() / ds.n();
  Shape s = ds.x.shape();
  s[0] = 1;
  Tensor<double> xa(s), xb(s);
  std::copy(ds.x.data() + a.index_a * row, ds.x.data() + (a.index_a + 1) * row,
            xa.data());
  std::copy(ds.x.data() + a.index_b * row, ds.x.data() + (a.index_b + 1) * row,
            xb.data());

  std::vector<double> grid(static_cast<size_t>(a.frames));
  for (int64_t i = 0; i < a.frames; ++i)
    grid[static_cast<size_t>(i)] =
        static_cast<double>(i) / static_cast<double>(a.frames - 1);
  auto res = sampler::slerp_interpolate(xa, xb, model, model.sched, grid,
                                        a.paper_literal, a.steps);

  // stack frames into one (frames, ...) batch for export
  Shape batch = ds.x.shape();
  batch[0] = a.frames;
  Tensor<double> frames(batch);
  for (size_t k = 0; k < res.frames.size(); ++k)
    std::copy(res.frames[k].data(), res.frames[k].data() + row,
              frames.data() + static_cast<int64_t>(k) * row);
  write_samples(frames, cfg.model.image, a.out);
  std::cout << "wrote " << a.frames << " interpolation frames to " << a.out
            << (res.linear_fallback ? " (linear fallback)" : "") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"InfoDiffusion reference CLI"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "run the training loop");
  train_cmd->add_option("--config", ta.config, "experiment config (.toml/.json)")
      ->required();
  train_cmd->add_option("--seed", ta.seed, "override config seed");
  train_cmd->add_option("--out", ta.out, "override output directory");
  train_cmd->add_option("--resume", ta.resume,
                        "checkpoint path or 'latest' to continue a run");
  train_cmd->add_option("--max-steps", ta.max_steps, "override step budget");
  train_cmd->add_option("--prior-steps", ta.prior_steps,
                        "latent prior stage steps");
  train_cmd->add_flag("--paper-defaults", ta.paper_defaults,
                      "Appendix C scale instead of desk scale");

  VerifyArgs va;
  auto* verify_cmd =
      app.add_subcommand("verify", "run the derivation oracle suite");
  verify_cmd->add_option("--seed", va.seed, "oracle seed");
  verify_cmd->add_option("--instances", va.instances, "toy models per check");
  verify_cmd->add_option("--out", va.out, "write the JSON report here");

  EvalArgs ea;
  auto* eval_cmd =
      app.add_subcommand("eval", "latent metrics for a checkpoint");
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "trained model archive")
      ->required();
  eval_cmd->add_option("--seed", ea.seed, "evaluation seed");
  eval_cmd->add_option("--folds", ea.folds, "probe cross-validation folds");
  eval_cmd->add_option("--out", ea.out, "write the JSON report here");
  eval_cmd->add_option("--plot", ea.plot, "write a PNG bar chart here");
  eval_cmd->add_flag("--fid", ea.fid, "include the FID proxy (slow)");
  eval_cmd->add_option("--fid-samples", ea.fid_samples, "FID sample count");

  SampleArgs sa;
  auto* sample_cmd = app.add_subcommand("sample", "draw samples");
  sample_cmd->add_option("--checkpoint", sa.checkpoint, "trained model archive")
      ->required();
  sample_cmd->add_option("--mode", sa.mode,
                         "posterior|two_phase|learned_prior|reconstruction");
  sample_cmd->add_option("--count", sa.count, "number of samples");
  sample_cmd->add_option("--steps", sa.steps, "strided steps (reconstruction)");
  sample_cmd->add_option("--switch-t", sa.switch_t,
                         "two-phase switch step (default T/2)");
  sample_cmd->add_option("--seed", sa.seed, "sampling seed");
  sample_cmd->add_option("--base-checkpoint", sa.base_checkpoint,
                         "unconditional model for two-phase phase one");
  sample_cmd->add_option("--out", sa.out, "output directory")->required();

  InterpArgs ia;
  auto* interp_cmd =
      app.add_subcommand("interpolate", "latent slerp between two examples");
  interp_cmd->add_option("--checkpoint", ia.checkpoint, "trained model archive")
      ->required();
  interp_cmd->add_option("--index-a", ia.index_a, "first endpoint row");
  interp_cmd->add_option("--index-b", ia.index_b, "second endpoint row");
  interp_cmd->add_option("--frames", ia.frames, "interpolation frames");
  interp_cmd->add_option("--steps", ia.steps, "strided decode steps");
  interp_cmd->add_option("--seed", ia.seed, "unused; kept for symmetry");
  interp_cmd->add_flag("--paper-literal", ia.paper_literal,
                       "unnormalized slerp exactly as printed in the text");
  interp_cmd->add_option("--out", ia.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train_cmd) return cmd_train(ta);
    if (*verify_cmd) return cmd_verify(va);
    if (*eval_cmd) return cmd_eval(ea);
    if (*sample_cmd) return cmd_sample(sa);
    if (*interp_cmd) return cmd_interpolate(ia);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IngestError& e) {
    std::cerr << "ingest error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
