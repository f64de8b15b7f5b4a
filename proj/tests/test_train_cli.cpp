// Copyright (c) 2026 InfoDiffusion C++ contributors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "infodiff/train.hpp"

using namespace infodiff;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("infodiff_cli_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

train::ExperimentConfig moons_config(const std::string& out) {
  train::ExperimentConfig cfg;
  cfg.dataset = "two_moons";
  cfg.two_moons_n = 2000;
  cfg.model.image = false;
  cfg.model.data_dim = 2;
  cfg.model.hidden = 64;
  cfg.model.mlp_depth = 2;
  cfg.model.temb_dim = 32;
  cfg.model.z_dim = 2;
  cfg.model.timesteps = 50;
  cfg.objective.zeta = 1.0;
  cfg.objective.lam = 0.1;
  cfg.batch_size = 32;
  cfg.lr = 1e-3;
  cfg.seed = 0;
  cfg.output_dir = out;
  return cfg;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(static_cast<bool>(f));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(static_cast<bool>(f));
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2),
                   v.end());
  return v[v.size() / 2];
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(INFODIFF_CLI_PATH) + " " + args;
  int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -2;
}

}  // namespace

TEST_CASE("loss falls across 500-step window medians on two moons") {
  auto dir = fresh_dir("smoke");
  auto cfg = moons_config((dir / "run").string());
  cfg.max_steps = 2000;
  cfg.checkpoint_every = 1000;
  auto ds = train::load_dataset(cfg);

  auto mf = train::run_training(cfg, ds);
  CHECK(mf.status == "complete");
  CHECK(mf.steps_done == 2000);

  auto lines = read_lines(dir / "run" / "metrics.jsonl");
  REQUIRE(lines.size() == 2000);
  std::vector<double> losses;
  for (const auto& l : lines)
    losses.push_back(nlohmann::json::parse(l).at("loss").get<double>());
  double prev = median({losses.begin(), losses.begin() + 500});
  for (int w = 1; w < 4; ++w) {
    double cur = median({losses.begin() + w * 500, losses.begin() + (w + 1) * 500});
    CHECK(cur < prev);
    prev = cur;
  }

  // manifest bookkeeping: self-describing run directory
  auto manifest = nlohmann::json::parse(read_file(dir / "run" / "manifest.json"));
  CHECK(manifest.at("status") == "complete");
  CHECK(manifest.at("config") == cfg.to_json());
  CHECK(manifest.at("checkpoints").size() == 2);  // step 1000 + exit
  CHECK(manifest.at("content_hash").get<std::string>().size() == 16);
  CHECK(fs::exists(dir / "run" / "config.json"));
}

TEST_CASE("resume replays the uninterrupted run bit-identically") {
  auto dir = fresh_dir("resume");
  auto cfg = moons_config((dir / "full").string());
  cfg.max_steps = 300;
  cfg.checkpoint_every = 1000;
  auto ds = train::load_dataset(cfg);

  train::run_training(cfg, ds);
  auto full = read_lines(dir / "full" / "metrics.jsonl");
  REQUIRE(full.size() == 300);

  // interrupt by hand at step 200, then resume for the last 100
  auto cfg2 = cfg;
  cfg2.output_dir = (dir / "resumed").string();
  fs::create_directories(cfg2.output_dir);
  train::Trainer<double> head(cfg2, ds);
  for (int i = 0; i < 200; ++i) head.train_step();
  std::string ckpt = (fs::path(cfg2.output_dir) / "ckpt_step00000200.idarch").string();
  head.save_checkpoint(ckpt);

  train::run_training(cfg2, ds, ckpt);
  auto tail = read_lines(dir / "resumed" / "metrics.jsonl");
  REQUIRE(tail.size() == 100);
  for (int i = 0; i < 100; ++i) CHECK(tail[i] == full[200 + i]);

  // the resumed model lands on bit-identical weights
  auto a = nn::load_model<double>(
      (fs::path(cfg.output_dir) / "ckpt_step00000300.idarch").string());
  auto b = nn::load_model<double>(
      (fs::path(cfg2.output_dir) / "ckpt_step00000300.idarch").string());
  auto pa = a.params(), pb = b.params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i]->value.size() == pb[i]->value.size());
    for (int64_t j = 0; j < pa[i]->value.size(); ++j)
      CHECK(pa[i]->value[j] == pb[i]->value[j]);
  }

  SUBCASE("a budget extension resumes; any other change is rejected") {
    auto more = cfg2;
    more.max_steps = 320;
    train::run_training(more, ds, ckpt);  // fine
    auto changed = cfg2;
    changed.lr = 5e-4;
    CHECK_THROWS_AS(train::run_training(changed, ds, ckpt), ConfigError);
  }
}

TEST_CASE("zeta=1 lambda=0 skips the mmd branch in every logged step") {
  auto dir = fresh_dir("diffae");
  auto cfg = moons_config((dir / "run").string());
  cfg.objective.lam = 0.0;
  cfg.max_steps = 50;
  auto ds = train::load_dataset(cfg);
  train::run_training(cfg, ds);
  for (const auto& l : read_lines(dir / "run" / "metrics.jsonl")) {
    auto j = nlohmann::json::parse(l);
    CHECK(j.at("mmd").get<double>() == 0.0);
    CHECK(j.at("kl_z").get<double>() != 0.0);  // logged for monitoring only
  }
}

TEST_CASE("nan loss aborts and retains the last good checkpoint") {
  auto dir = fresh_dir("nan");
  auto cfg = moons_config((dir / "run").string());
  cfg.max_steps = 20;
  cfg.checkpoint_every = 10;
  auto ds = train::load_dataset(cfg);
  train::run_training(cfg, ds);
  auto good = train::detail::list_checkpoints(cfg.output_dir);
  REQUIRE(!good.empty());

  data::Dataset poisoned;
  poisoned.image = false;
  poisoned.x = ds.x.clone();
  poisoned.attrs = ds.attrs;
  for (int64_t i = 0; i < poisoned.x.size(); ++i)
    poisoned.x[i] = std::numeric_limits<double>::quiet_NaN();

  auto more = cfg;
  more.max_steps = 40;
  CHECK_THROWS_AS(train::run_training(more, poisoned, good.back()),
                  TrainingFault);
  auto manifest = nlohmann::json::parse(read_file(dir / "run" / "manifest.json"));
  CHECK(manifest.at("status") == "aborted");
  auto kept = train::detail::list_checkpoints(cfg.output_dir);
  REQUIRE(!kept.empty());
  CHECK(kept.back() == good.back());
}

TEST_CASE("relaxed-bernoulli runs anneal tau on the appendix schedule") {
  auto dir = fresh_dir("tau");
  auto cfg = moons_config((dir / "run").string());
  cfg.model.family = nn::LatentFamily::relaxed_bernoulli;
  cfg.temperature.tau_init = 1.0;
  cfg.temperature.tau_min = 0.5;
  cfg.temperature.decrement = 0.2;
  cfg.temperature.interval_steps = 2;
  cfg.max_steps = 8;
  auto ds = train::load_dataset(cfg);
  train::run_training(cfg, ds);
  auto lines = read_lines(dir / "run" / "metrics.jsonl");
  REQUIRE(lines.size() == 8);
  const double want[8] = {1.0, 1.0, 0.8, 0.8, 0.6, 0.6, 0.5, 0.5};
  for (int i = 0; i < 8; ++i) {
    auto j = nlohmann::json::parse(lines[static_cast<size_t>(i)]);
    CHECK(j.at("tau").get<double>() == doctest::Approx(want[i]).epsilon(1e-12));
    CHECK(std::isfinite(j.at("loss").get<double>()));
  }
}

TEST_CASE("config files parse, validate and mirror") {
  auto dir = fresh_dir("config");
  {
    std::ofstream f((dir / "exp.toml").string());
    f << "# smoke experiment\n"
         "dataset = \"two_moons\"   # inline comment\n"
         "two_moons_n = 256\n"
         "data_dim = 2\n"
         "z_dim = 4\n"
         "zeta = 0.9\n"
         "lambda = 0.2\n"
         "divergence = \"mmd\"\n"
         "bandwidths = [1.0, 2.0]\n"
         "simple_loss = true\n"
         "lr = 0.002\n"
         "max_steps = 11\n"
         "output_dir = \"out\"\n";
  }
  auto cfg = train::ExperimentConfig::from_file((dir / "exp.toml").string());
  CHECK(cfg.dataset == "two_moons");
  CHECK(cfg.model.z_dim == 4);
  CHECK(cfg.model.image == false);
  CHECK(cfg.objective.zeta == 0.9);
  CHECK(cfg.objective.lam == 0.2);
  CHECK(cfg.objective.bandwidths == std::vector<double>{1.0, 2.0});
  CHECK(cfg.lr == 0.002);
  CHECK(cfg.max_steps == 11);
  cfg.validate();

  // json mirror loads to the identical config
  {
    std::ofstream f((dir / "exp.json").string());
    f << cfg.to_json().dump(2);
  }
  auto cfg2 = train::ExperimentConfig::from_file((dir / "exp.json").string());
  CHECK(cfg2.to_json() == cfg.to_json());

  SUBCASE("invalid configurations are rejected up front") {
    auto bad = cfg;
    bad.objective.zeta = 1.2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.objective.zeta = 0.5;
    bad.objective.lam = 0.2;  // zeta + lambda < 1
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.optimizer = "sgd";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS_AS(
        train::ExperimentConfig::from_json({{"no_such_key", 1}}), ConfigError);
  }

  SUBCASE("toml subset diagnostics") {
    auto parse = [](const std::string& s) {
      std::stringstream ss(s);
      return train::parse_flat_toml(ss);
    };
    CHECK(parse("a = 1\nb = \"x # y\"\n").at("b") == "x # y");
    CHECK(parse("arr = [1, 2, 3]\n").at("arr").size() == 3);
    CHECK_THROWS_AS(parse("a = 1\na = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse("just text\n"), ConfigError);
    CHECK_THROWS_AS(parse("a = \n"), ConfigError);
    CHECK_THROWS_AS(parse("a = [1, 2\n"), ConfigError);
    CHECK_THROWS_AS(parse("bad key = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse("a = nope\n"), ConfigError);
  }

  SUBCASE("paper defaults mirror appendix c") {
    auto p = cfg;
    p.apply_paper_defaults();
    CHECK(p.lr == 1e-4);
    CHECK(p.epochs == 50);
    CHECK(p.batch_size == 64);
    CHECK(p.model.z_dim == 10);
    CHECK(p.model.base_channels == 32);
    CHECK(p.model.channel_mults == std::vector<int64_t>{1, 2, 4, 8});
  }
}

TEST_CASE("cli exit codes follow the contract") {
  auto dir = fresh_dir("exit");
  std::string null = " > /dev/null 2>&1";
  CHECK(run_cli("train --config " + (dir / "missing.toml").string() + null) == 2);
  CHECK(run_cli("eval" + null) == 2);                   // missing --checkpoint
  CHECK(run_cli("train --bogus-flag" + null) == 2);     // unknown flag
  CHECK(run_cli("frobnicate" + null) == 2);             // unknown subcommand
  CHECK(run_cli("" + null) == 2);                       // subcommand required
  CHECK(run_cli("--help" + null) == 0);

  // config that fails validation also exits 2
  {
    std::ofstream f((dir / "bad.toml").string());
    f << "dataset = \"two_moons\"\nzeta = 1.5\n";
  }
  CHECK(run_cli("train --config " + (dir / "bad.toml").string() + null) == 2);
}

TEST_CASE("cli verify reports all derivation gaps under 1e-10") {
  auto dir = fresh_dir("verify");
  std::string report = (dir / "report.json").string();
  CHECK(run_cli("verify --seed 0 --out " + report + " > /dev/null") == 0);
  auto rep = nlohmann::json::parse(read_file(report));
  CHECK(rep.at("ok").get<bool>());
  CHECK(rep.at("mi_decomposition").at("max_gap").get<double>() < 1e-10);
  CHECK(rep.at("objective_rewrite").at("max_gap").get<double>() < 1e-10);
  for (const auto& row : rep.at("linear_gaussian_elbo"))
    CHECK(row.at("pass").get<bool>());
}

TEST_CASE("cli train/eval/sample/interpolate round trip") {
  auto dir = fresh_dir("roundtrip");
  {
    std::ofstream f((dir / "exp.toml").string());
    f << "dataset = \"two_moons\"\n"
         "two_moons_n = 512\n"
         "data_dim = 2\n"
         "hidden = 32\n"
         "mlp_depth = 1\n"
         "temb_dim = 16\n"
         "z_dim = 2\n"
         "timesteps = 50\n"
         "zeta = 1.0\n"
         "lambda = 0.1\n"
         "batch_size = 32\n"
         "max_steps = 60\n"
         "lr = 0.001\n"
         "seed = 3\n"
         "checkpoint_every = 25\n"
         "prior_steps = 30\n"
      << "output_dir = \"" << (dir / "run").string() << "\"\n";
  }
  CHECK(run_cli("train --config " + (dir / "exp.toml").string() +
                " > /dev/null") == 0);
  auto ckpts = train::detail::list_checkpoints((dir / "run").string());
  REQUIRE(!ckpts.empty());
  std::string ck = ckpts.back();

  SUBCASE("fixed-seed eval is byte-identical") {
    std::string r1 = (dir / "r1.json").string(), r2 = (dir / "r2.json").string();
    CHECK(run_cli("eval --checkpoint " + ck + " --seed 11 --out " + r1 +
                  " > /dev/null") == 0);
    CHECK(run_cli("eval --checkpoint " + ck + " --seed 11 --out " + r2 +
                  " > /dev/null") == 0);
    CHECK(read_file(r1) == read_file(r2));
    auto rep = nlohmann::json::parse(read_file(r1));
    CHECK(rep.at("latent_quality").at("mean").get<double>() > 0.5);
    std::string plot = (dir / "bars.png").string();
    CHECK(run_cli("eval --checkpoint " + ck + " --plot " + plot +
                  " > /dev/null") == 0);
    CHECK(fs::file_size(plot) > 100);
  }

  SUBCASE("sampling modes write their artifacts") {
    CHECK(run_cli("sample --checkpoint " + ck +
                  " --mode learned_prior --count 16 --out " +
                  (dir / "lp").string() + " > /dev/null") == 0);
    CHECK(read_lines(dir / "lp" / "samples.csv").size() == 16);
    CHECK(run_cli("sample --checkpoint " + ck +
                  " --mode two_phase --count 4 --out " + (dir / "tp").string() +
                  " > /dev/null") == 0);
    CHECK(run_cli("sample --checkpoint " + ck +
                  " --mode reconstruction --count 4 --out " +
                  (dir / "rc").string() + " > /dev/null") == 0);
    CHECK(run_cli("sample --checkpoint " + ck + " --mode nope --out " +
                  (dir / "x").string() + " > /dev/null 2>&1") == 2);
    CHECK(run_cli("interpolate --checkpoint " + ck +
                  " --index-a 0 --index-b 1 --out " + (dir / "it").string() +
                  " > /dev/null") == 0);
    CHECK(read_lines(dir / "it" / "samples.csv").size() == 10);
  }

  SUBCASE("cli resume continues the same run directory") {
    CHECK(run_cli("train --config " + (dir / "exp.toml").string() +
                  " --resume latest --max-steps 80 > /dev/null") == 0);
    auto manifest =
        nlohmann::json::parse(read_file(dir / "run" / "manifest.json"));
    CHECK(manifest.at("steps_done").get<int64_t>() == 80);
    CHECK(manifest.at("status") == "complete");
  }
}
