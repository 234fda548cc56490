#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "lshrom/error.hpp"
#include "lshrom/romctl.hpp"
#include "test_util.hpp"

using namespace lshrom;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json tiny_config() {
  return json::parse(R"({
    "problem": {"kind": "traveling_wave", "parameters": [0.8, 0.9, 1.0, 1.1], "n_t": 16, "n_dof": 8,
                "timestep": 0.04},
    "architecture": {"n_blocks": 2, "shared_latent_dim": 4, "interp_latent_dim": 6, "filters": [6, 4],
                     "pooling": "flatten"},
    "loss": {"n_epochs": 6},
    "train": {"epochs": 3, "seed": 5},
    "targets": [0.95]
  })");
}

fs::path write_config(const fs::path& dir, const json& doc) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << doc.dump(2);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run(const std::vector<std::string>& args, std::string* out = nullptr, std::string* err = nullptr) {
  std::vector<const char*> argv{"romctl"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return code;
}

/// Exit status of the installed executable.
int run_exe(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(ROMCTL_EXE) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

SnapshotEnsemble five_variable_ensemble(const std::vector<double>& params) {
  SnapshotEnsemble ens;
  ens.parameter_values = params;
  ens.timestep = 0.04;
  ens.variable_names = {"u", "v", "p", "dX", "dY"};
  for (double mu : params) {
    std::map<std::string, FieldVariable> m;
    for (std::size_t k = 0; k < ens.variable_names.size(); ++k) {
      FieldVariable f(ens.variable_names[k], 16, 8);
      for (std::size_t t = 0; t < 16; ++t)
        for (std::size_t d = 0; d < 8; ++d)
          f.at(t, d) = static_cast<float>((k + 1) * std::sin(6.283185307 * (d / 8.0 - mu * t * 0.04) + k));
      m[ens.variable_names[k]] = f;
    }
    ens.fields.push_back(std::move(m));
  }
  return ens;
}

}  // namespace

TEST_CASE("config defaults mirror the published hyperparameters") {
  const RunConfig cfg = parse_run_config(json{{"problem", json::object()}});
  CHECK(cfg.train.epochs == 5000);
  CHECK(cfg.loss.n_epochs == 5000);
  CHECK(cfg.loss.alpha == 1e6);
  CHECK(cfg.loss.beta_target == 1.0);
  CHECK(cfg.train.learning_rate == 1e-3);
  CHECK(cfg.arch.interp_latent_dim == 32);
  CHECK(cfg.arch.shared_latent_dim == 8);
  CHECK(cfg.arch.filters == std::vector<int>{64, 32, 16, 8, 4, 2, 1});
  CHECK(cfg.arch.n_blocks == 7);
  CHECK(cfg.augment.n_resample() == 5);
  CHECK(cfg.methods() == std::vector<NetKind>{NetKind::kLshVae});
}

TEST_CASE("config errors name the offending key") {
  auto doc = tiny_config();
  doc["train"]["learning_rte"] = 1.0;
  CHECK_THROWS_WITH_AS(parse_run_config(doc), doctest::Contains("train.learning_rte"), ConfigError);
  doc = tiny_config();
  doc["extras"] = 1;
  CHECK_THROWS_WITH_AS(parse_run_config(doc), doctest::Contains("extras"), ConfigError);
  doc = tiny_config();
  doc["problem"]["wavelength"] = 2;
  CHECK_THROWS_WITH_AS(parse_run_config(doc), doctest::Contains("problem.wavelength"), ConfigError);
  doc = tiny_config();
  doc["train"]["epochs"] = "many";
  CHECK_THROWS_AS(parse_run_config(doc), ConfigError);
  doc = tiny_config();
  doc.erase("problem");
  CHECK_THROWS_AS(parse_run_config(doc), ConfigError);
  doc = tiny_config();
  doc["ensemble"] = "/nonexistent/ensemble";
  doc.erase("problem");
  CHECK_THROWS_WITH_AS(parse_run_config(doc), doctest::Contains("does not exist"), ConfigError);

  const auto dir = testutil::scratch_dir("romctl_badkey");
  doc = tiny_config();
  doc["architecture"]["filterz"] = 3;
  std::string err;
  CHECK(run({"generate", "--config", write_config(dir, doc).string()}, nullptr, &err) == 2);
  CHECK(err.find("architecture.filterz") != std::string::npos);
}

TEST_CASE("generate writes every parameter entry and is byte-reproducible") {
  const auto dir = testutil::scratch_dir("romctl_gen");
  auto doc = tiny_config();
  doc["problem"]["parameters"] = {0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3};
  const auto cfg_path = write_config(dir, doc);
  REQUIRE(run({"generate", "--config", cfg_path.string(), "--out", (dir / "a").string()}) == 0);
  REQUIRE(run({"generate", "--config", cfg_path.string(), "--out", (dir / "b").string()}) == 0);
  const auto ens = load_ensemble(dir / "a" / "ensemble");
  CHECK(ens.size() == 7);
  CHECK(ens.parameter_values.front() == 0.7);
  std::size_t arrays = 0;
  for (const auto& e : fs::directory_iterator(dir / "a" / "ensemble")) {
    if (e.path().extension() != ".f32") continue;
    ++arrays;
    CHECK(slurp(e.path()) == slurp(dir / "b" / "ensemble" / e.path().filename()));
  }
  CHECK(arrays == 7);
  // Relative output_dir resolves against the config directory.
  doc["output_dir"] = "rel";
  REQUIRE(run({"generate", "--config", write_config(dir, doc).string()}) == 0);
  CHECK(fs::exists(dir / "rel" / "ensemble" / "manifest.json"));
}

TEST_CASE("train, resume, interp and eval on a toy problem") {
  const auto dir = testutil::scratch_dir("romctl_pipeline");
  auto doc = tiny_config();
  doc["baselines"] = {{"cae", true}, {"beta_vae", true}, {"latent_dim", 6}};
  const auto cfg_path = write_config(dir, doc).string();
  std::string out;
  REQUIRE(run({"train", "--config", cfg_path}, &out) == 0);
  const RunConfig cfg = load_run_config(cfg_path);
  for (NetKind k : {NetKind::kLshVae, NetKind::kCae, NetKind::kBetaVae}) {
    CHECK(fs::exists(cfg.model_path("u", k)));
    CHECK(fs::exists(cfg.model_path("u", k).parent_path() / (to_string(k) + "_log.csv")));
  }
  CHECK(load_checkpoint(cfg.model_path("u", NetKind::kCae)).kind == NetKind::kCae);

  SUBCASE("resume continues the log to the new epoch count") {
    const auto before = load_checkpoint(cfg.model_path("u", NetKind::kLshVae));
    auto more = doc;
    more["train"]["epochs"] = 6;
    REQUIRE(run({"train", "--resume", "--config", write_config(dir, more).string()}) == 0);
    const auto after = load_checkpoint(cfg.model_path("u", NetKind::kLshVae));
    REQUIRE(after.training_log.size() == 6);
    for (std::size_t i = 0; i < 3; ++i) CHECK(after.training_log[i].total == before.training_log[i].total);
    // A fresh 6-epoch run reproduces the resumed log.
    auto fresh = more;
    fresh["output_dir"] = (dir / "fresh").string();
    REQUIRE(run({"train", "--config", write_config(dir, fresh).string()}) == 0);
    const auto ref = load_checkpoint(dir / "fresh" / "models" / "u" / "lsh_vae.ckpt");
    for (std::size_t i = 0; i < 6; ++i) CHECK(after.training_log[i].total == ref.training_log[i].total);
  }

  SUBCASE("interp records k = 0.5 at the midpoint and is loadable") {
    REQUIRE(run({"interp", "--config", cfg_path}) == 0);
    for (const char* m : {"lsh_vae", "cae", "beta_vae"}) {
      const auto ens = load_ensemble(dir / "romctl_out" / "interp" / m);
      CHECK(ens.parameter_values == std::vector<double>{0.95});
      CHECK(ens.metadata["method"] == m);
      const auto& prov = ens.metadata["provenance"][0]["u"];
      CHECK(prov["k"].get<double>() == doctest::Approx(0.5));
      CHECK(prov["p_1"].get<double>() == 0.9);
      CHECK(prov["p_2"].get<double>() == 1.0);
      CHECK(ens.field(0, "u").n_t == 16);
    }
  }

  SUBCASE("eval reports three method rows with a timing ledger") {
    std::string json_out;
    REQUIRE(run({"eval", "--config", cfg_path, "--target", "0.85", "--target", "0.95"}, &json_out) == 0);
    const auto rep = json::parse(slurp(dir / "romctl_out" / "eval" / "report.json"));
    CHECK(rep["rows"].size() == 6);
    CHECK(rep["extra"]["methods"] == json({"lsh_vae", "cae", "beta_vae"}));
    for (const auto& row : rep["rows"]) CHECK(row["rel_l2"].get<double>() >= 0.0);
    REQUIRE(rep.contains("timing"));
    CHECK(rep["timing"]["speedup"].get<double>() > 0.0);
    CHECK(fs::exists(dir / "romctl_out" / "eval" / "errors.csv"));
    CHECK(fs::exists(dir / "romctl_out" / "eval" / "cost_lines.png"));
    CHECK(fs::exists(dir / "romctl_out" / "eval" / "error_vs_parameter.png"));
    CHECK(json::parse(json_out)["rows"].size() == 6);
  }

  SUBCASE("eval against its own interpolation as truth gives zero error") {
    REQUIRE(run({"interp", "--config", cfg_path}) == 0);
    auto self = doc;
    self["baselines"] = {{"cae", false}, {"beta_vae", false}};
    self["truth"] = (dir / "romctl_out" / "interp" / "lsh_vae").string();
    REQUIRE(run({"eval", "--config", write_config(dir, self).string()}) == 0);
    const auto rep = json::parse(slurp(dir / "romctl_out" / "eval" / "report.json"));
    REQUIRE(rep["rows"].size() == 1);
    CHECK(rep["rows"][0]["rel_l2"].get<double>() == 0.0);
    CHECK(rep["rows"][0]["max_abs"].get<double>() == 0.0);
  }

  SUBCASE("extrapolation is rejected with exit code 4") {
    std::string err;
    CHECK(run({"interp", "--config", cfg_path, "--target", "1.5"}, nullptr, &err) == 4);
    CHECK(err.find("only interpolation is supported") != std::string::npos);
    CHECK(run({"eval", "--config", cfg_path, "--target", "0.5"}) == 4);
  }
}

TEST_CASE("five variables produce five checkpoints") {
  const auto dir = testutil::scratch_dir("romctl_five");
  save_ensemble(five_variable_ensemble({0.8, 0.9, 1.0, 1.1}), dir / "data");
  save_ensemble(five_variable_ensemble({0.95}), dir / "truth");
  auto doc = tiny_config();
  doc.erase("problem");
  doc["ensemble"] = "data";
  doc["truth"] = "truth";
  const auto cfg_path = write_config(dir, doc).string();
  REQUIRE(run({"train", "--config", cfg_path}) == 0);
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "romctl_out" / "models"))
    if (e.path().extension() == ".ckpt") ++n;
  CHECK(n == 5);
  REQUIRE(run({"eval", "--config", cfg_path}) == 0);
  const auto rep = json::parse(slurp(dir / "romctl_out" / "eval" / "report.json"));
  CHECK(rep["rows"].size() == 5);
  // Generation without a problem section is a config error.
  CHECK(run({"generate", "--config", cfg_path}) == 2);
}

TEST_CASE("idempotent training: identical parameters on rerun") {
  const auto dir = testutil::scratch_dir("romctl_idem");
  const auto cfg_path = write_config(dir, tiny_config()).string();
  REQUIRE(run({"train", "--config", cfg_path, "--out", (dir / "a").string()}) == 0);
  REQUIRE(run({"train", "--config", cfg_path, "--out", (dir / "b").string()}) == 0);
  const auto a = load_checkpoint(dir / "a" / "models" / "u" / "lsh_vae.ckpt");
  const auto b = load_checkpoint(dir / "b" / "models" / "u" / "lsh_vae.ckpt");
  for (std::size_t i = 0; i < a.net->params().size(); ++i)
    CHECK(a.net->params().at(i).value == b.net->params().at(i).value);
  CHECK(slurp(dir / "a" / "models" / "u" / "lsh_vae_log.csv") == slurp(dir / "b" / "models" / "u" / "lsh_vae_log.csv"));
  REQUIRE(run({"train", "--config", cfg_path, "--out", (dir / "c").string(), "--seed", "6"}) == 0);
  CHECK(slurp(dir / "a" / "models" / "u" / "lsh_vae_log.csv") != slurp(dir / "c" / "models" / "u" / "lsh_vae_log.csv"));
}

TEST_CASE("executable exit codes") {
  const auto dir = testutil::scratch_dir("romctl_exe");
  const auto cfg_path = write_config(dir, tiny_config()).string();
  const auto log = dir / "log.txt";
  CHECK(run_exe("generate --config " + cfg_path, log) == 0);
  CHECK(run_exe("train --config " + cfg_path, log) == 0);
  CHECK(run_exe("interp --config " + cfg_path + " --target 2.0", log) == 4);
  CHECK(slurp(log).find("only interpolation is supported") != std::string::npos);
  CHECK(run_exe("interp --config " + (dir / "missing.json").string(), log) == 2);
  CHECK(run_exe("bogus", log) == 2);
  CHECK(run_exe("interp", log) == 2);
  auto diverge = tiny_config();
  diverge["problem"] = {{"kind", "cubic_limit_cycle"}, {"parameters", {5000.0}}, {"n_t", 16}, {"n_dof", 8},
                        {"transient", 20.0}};
  const auto dpath = dir / "diverge";
  fs::create_directories(dpath);
  CHECK(run_exe("generate --config " + write_config(dpath, diverge).string(), log) == 3);
}
