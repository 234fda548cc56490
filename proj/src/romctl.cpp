#include "lshrom/romctl.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "lshrom/baselines.hpp"
#include "lshrom/error.hpp"
#include "lshrom/latent_nav.hpp"

namespace lshrom {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path RunConfig::ensemble_dir() const { return ensemble ? *ensemble : output_dir / "ensemble"; }

fs::path RunConfig::model_path(const std::string& variable, NetKind kind) const {
  return output_dir / "models" / variable / (to_string(kind) + ".ckpt");
}

std::vector<NetKind> RunConfig::methods() const {
  std::vector<NetKind> m{NetKind::kLshVae};
  if (baselines.cae) m.push_back(NetKind::kCae);
  if (baselines.beta_vae) m.push_back(NetKind::kBetaVae);
  return m;
}

void to_json(json& j, const BaselineToggles& b) {
  j = json{{"cae", b.cae}, {"beta_vae", b.beta_vae}, {"latent_dim", b.latent_dim}};
}

void from_json(const json& j, BaselineToggles& b) {
  b.cae = j.value("cae", b.cae);
  b.beta_vae = j.value("beta_vae", b.beta_vae);
  b.latent_dim = j.value("latent_dim", b.latent_dim);
}

namespace {

void reject_unknown(const json& section, const json& reference, const std::string& prefix) {
  if (!section.is_object()) throw ConfigError("config key '" + prefix + "' must be an object");
  for (auto it = section.begin(); it != section.end(); ++it) {
    if (!reference.contains(it.key())) throw ConfigError("unknown config key '" + prefix + "." + it.key() + "'");
  }
}

template <typename Cfg>
Cfg parse_section(const json& doc, const std::string& key, Cfg value) {
  if (!doc.contains(key)) return value;
  reject_unknown(doc.at(key), json(value), key);
  from_json(doc.at(key), value);
  return value;
}

fs::path resolve(const fs::path& p, const fs::path& base) { return p.is_absolute() || base.empty() ? p : base / p; }

}  // namespace

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  static const std::vector<std::string> top{"problem", "ensemble", "truth",     "variables", "architecture", "loss",
                                            "train",   "augment",  "baselines", "targets",   "output_dir"};
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (std::find(top.begin(), top.end(), it.key()) == top.end()) {
      throw ConfigError("unknown config key '" + it.key() + "'");
    }
  }
  RunConfig cfg;
  try {
    if (doc.contains("problem")) {
      const json& p = doc.at("problem");
      reject_unknown(p, json(ToyProblemSpec{}), "problem");
      cfg.problem = p.get<ToyProblemSpec>();
      cfg.problem->validate();
    }
    if (doc.contains("ensemble")) cfg.ensemble = resolve(doc.at("ensemble").get<std::string>(), base_dir);
    if (doc.contains("truth")) cfg.truth = resolve(doc.at("truth").get<std::string>(), base_dir);
    if (doc.contains("variables")) cfg.variables = doc.at("variables").get<std::vector<std::string>>();
    cfg.arch = parse_section(doc, "architecture", cfg.arch);
    cfg.loss = parse_section(doc, "loss", cfg.loss);
    cfg.train = parse_section(doc, "train", cfg.train);
    cfg.augment = parse_section(doc, "augment", cfg.augment);
    cfg.baselines = parse_section(doc, "baselines", cfg.baselines);
    if (doc.contains("targets")) cfg.targets = doc.at("targets").get<std::vector<double>>();
    if (doc.contains("output_dir")) cfg.output_dir = resolve(doc.at("output_dir").get<std::string>(), base_dir);
    else if (!base_dir.empty()) cfg.output_dir = base_dir / cfg.output_dir;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  if (cfg.problem.has_value() == cfg.ensemble.has_value()) {
    throw ConfigError("config needs exactly one of 'problem' or 'ensemble'");
  }
  if (cfg.ensemble && !fs::is_directory(*cfg.ensemble)) {
    throw ConfigError("ensemble directory " + cfg.ensemble->string() + " does not exist");
  }
  if (cfg.truth && !fs::is_directory(*cfg.truth)) {
    throw ConfigError("truth directory " + cfg.truth->string() + " does not exist");
  }
  if (cfg.problem && cfg.variables.empty()) cfg.variables = {cfg.problem->variable};
  if (cfg.baselines.latent_dim < 1) throw ConfigError("baselines.latent_dim must be positive");
  cfg.arch.validate();
  cfg.loss.validate();
  cfg.train.validate();
  cfg.augment.validate();
  std::sort(cfg.targets.begin(), cfg.targets.end());
  cfg.targets.erase(std::unique(cfg.targets.begin(), cfg.targets.end()), cfg.targets.end());
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

SnapshotEnsemble load_or_generate(const RunConfig& cfg) {
  const fs::path dir = cfg.ensemble_dir();
  if (!fs::exists(dir / "manifest.json")) {
    if (!cfg.problem) throw ConfigError("ensemble " + dir.string() + " has no manifest.json");
    cmd_generate(cfg);
  }
  return load_ensemble(dir);
}

fs::path cmd_generate(const RunConfig& cfg) {
  if (!cfg.problem) throw ConfigError("generate needs a 'problem' section");
  const SnapshotEnsemble ens = generate(*cfg.problem);
  save_ensemble(ens, cfg.ensemble_dir());
  return cfg.ensemble_dir();
}

namespace {

std::vector<std::string> variables_of(const RunConfig& cfg, const SnapshotEnsemble& ens) {
  std::vector<std::string> vars = cfg.variables.empty() ? ens.variable_names : cfg.variables;
  for (const auto& v : vars) {
    if (!ens.has_variable(v)) throw ConfigError("variable '" + v + "' not in ensemble");
  }
  return vars;
}

void check_targets(const RunConfig& cfg, const SnapshotEnsemble& ens) {
  if (cfg.targets.empty()) throw ConfigError("no target parameters: set 'targets' or pass --target");
  const auto [lo, hi] = std::minmax_element(ens.parameter_values.begin(), ens.parameter_values.end());
  for (double p : cfg.targets) {
    if (!(p >= *lo && p <= *hi)) {
      std::ostringstream os;
      os << "target " << p << " lies outside the sampled range [" << *lo << ", " << *hi
         << "]: only interpolation is supported";
      throw ExtrapolationError(os.str());
    }
  }
}

TrainedModel load_model(const RunConfig& cfg, const std::string& variable, NetKind kind) {
  const fs::path p = cfg.model_path(variable, kind);
  if (!fs::exists(p)) throw ConfigError("missing checkpoint " + p.string() + ": run 'romctl train' first");
  return load_checkpoint(p);
}

struct MethodInterpolation {
  NetKind kind;
  SnapshotEnsemble ens;
  std::vector<double> online_seconds;  // per target, summed over variables
  std::vector<double> training_seconds;
};

MethodInterpolation interpolate_method(const RunConfig& cfg, const std::vector<std::string>& vars, NetKind kind) {
  if (cfg.targets.empty()) throw ConfigError("no target parameters: set 'targets' or pass --target");
  MethodInterpolation r{kind, {}, std::vector<double>(cfg.targets.size(), 0.0), {}};
  r.ens.variable_names = vars;
  r.ens.parameter_values = cfg.targets;
  r.ens.fields.resize(cfg.targets.size());
  json prov = json::array();
  for (std::size_t i = 0; i < cfg.targets.size(); ++i) prov.push_back({{"parameter", cfg.targets[i]}});
  for (const auto& var : vars) {
    TrainedModel model = load_model(cfg, var, kind);
    r.ens.parameter_name = model.parameter_name;
    r.ens.timestep = model.timestep;
    r.training_seconds.push_back(model.training_seconds);
    for (std::size_t i = 0; i < cfg.targets.size(); ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      Interpolation it = interpolate_parametric(model, nullptr, var, cfg.targets[i]);
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      r.online_seconds[i] += s;
      prov[i][var] = {{"k", it.k}, {"p_1", it.p_1}, {"p_2", it.p_2}, {"on_sample", it.on_sample}};
      r.ens.fields[i][var] = std::move(it.field);
    }
  }
  r.ens.metadata["method"] = to_string(kind);
  r.ens.metadata["provenance"] = prov;
  r.ens.metadata["online_seconds"] = r.online_seconds;
  return r;
}

}  // namespace

std::vector<fs::path> cmd_train(const RunConfig& cfg, bool resume_existing, std::ostream* progress) {
  const SnapshotEnsemble ens = load_or_generate(cfg);
  std::vector<fs::path> out;
  for (const auto& var : variables_of(cfg, ens)) {
    for (NetKind kind : cfg.methods()) {
      const fs::path ckpt = cfg.model_path(var, kind);
      fs::create_directories(ckpt.parent_path());
      if (progress) *progress << "training " << to_string(kind) << " on '" << var << "'\n";
      TrainedModel model;
      if (resume_existing && fs::exists(ckpt)) {
        model = load_checkpoint(ckpt);
        resume(model, ens, cfg.train.epochs, progress);
      } else if (kind == NetKind::kLshVae) {
        model = train(ens, var, cfg.arch, cfg.loss, cfg.train, cfg.augment, kind, progress);
      } else {
        BaselineConfig b{kind, cfg.baselines.latent_dim, cfg.arch, cfg.loss};
        model = train_baseline(ens, var, b, {cfg.train, cfg.augment}, progress);
      }
      save_checkpoint(model, ckpt);
      write_training_log(model.training_log, ckpt.parent_path() / (to_string(kind) + "_log.csv"));
      out.push_back(ckpt);
    }
  }
  return out;
}

std::vector<fs::path> cmd_interp(const RunConfig& cfg) {
  const SnapshotEnsemble ens = load_or_generate(cfg);
  const auto vars = variables_of(cfg, ens);
  check_targets(cfg, ens);
  std::vector<fs::path> out;
  for (NetKind kind : cfg.methods()) {
    const MethodInterpolation r = interpolate_method(cfg, vars, kind);
    const fs::path dir = cfg.output_dir / "interp" / to_string(kind);
    save_ensemble(r.ens, dir);
    out.push_back(dir);
  }
  return out;
}

RomReport cmd_eval(const RunConfig& cfg) {
  const SnapshotEnsemble ens = load_or_generate(cfg);
  const auto vars = variables_of(cfg, ens);
  check_targets(cfg, ens);
  if (!cfg.problem && !cfg.truth) throw ConfigError("missing truth: configure a toy 'problem' or a 'truth' ensemble");

  std::optional<SnapshotEnsemble> truth_ens;
  if (cfg.truth) truth_ens = load_ensemble(*cfg.truth);
  std::vector<std::map<std::string, FieldVariable>> truth;
  std::vector<double> fom_seconds;
  for (double p : cfg.targets) {
    if (truth_ens) {
      const auto idx = truth_ens->index_of(p);
      if (!idx) throw ConfigError("truth ensemble lacks parameter " + std::to_string(p));
      truth.push_back(truth_ens->fields[*idx]);
    } else {
      ToyProblemSpec one = *cfg.problem;
      one.parameters = {p};
      const auto t0 = std::chrono::steady_clock::now();
      SnapshotEnsemble g = generate(one);
      fom_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      truth.push_back(std::move(g.fields.front()));
    }
  }

  RomReport report;
  std::vector<double> lsh_online, lsh_training;
  json methods = json::array();
  for (NetKind kind : cfg.methods()) {
    const MethodInterpolation r = interpolate_method(cfg, vars, kind);
    methods.push_back(to_string(kind));
    if (kind == NetKind::kLshVae) {
      lsh_online = r.online_seconds;
      lsh_training = r.training_seconds;
    }
    for (std::size_t i = 0; i < cfg.targets.size(); ++i) {
      for (const auto& var : vars) {
        const auto t = truth[i].find(var);
        if (t == truth[i].end()) throw ConfigError("truth lacks variable '" + var + "'");
        MethodEvaluation m = evaluate_method(to_string(kind), cfg.targets[i], r.ens.fields[i].at(var), t->second);
        m.provenance = r.ens.metadata["provenance"][i].value(var, json::object());
        report.rows.push_back(std::move(m));
      }
    }
  }

  const double online = std::accumulate(lsh_online.begin(), lsh_online.end(), 0.0) /
                        static_cast<double>(std::max<std::size_t>(1, lsh_online.size()));
  const double training = std::accumulate(lsh_training.begin(), lsh_training.end(), 0.0);
  double offline_fom = 0.0;
  if (ens.metadata.contains("generation_seconds")) {
    for (double s : ens.metadata["generation_seconds"]) offline_fom += s;
  }
  if (offline_fom > 0.0 && online > 0.0) {
    report.timing = timing_report(offline_fom / 3600.0, ens.size(), training / 3600.0, online / 3600.0);
  }
  report.extra["methods"] = methods;
  report.extra["targets"] = cfg.targets;
  report.extra["online_seconds_per_target"] = lsh_online;
  if (!fom_seconds.empty()) {
    report.extra["fom_seconds_per_target"] = fom_seconds;
    const double fom_mean = std::accumulate(fom_seconds.begin(), fom_seconds.end(), 0.0) / fom_seconds.size();
    if (online > 0.0) report.extra["measured_speedup_at_targets"] = fom_mean / online;
  }

  const fs::path dir = cfg.output_dir / "eval";
  write_report(report, dir);
  emit_plots(report, dir);
  return report;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent-space hierarchical VAE reduced-order modelling"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::vector<double> targets;
  std::optional<std::uint64_t> seed;
  bool resume_flag = false, verbose = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Run configuration (JSON)")->required();
    sub->add_option("--out", out_dir, "Override output_dir");
    sub->add_option("--seed", seed, "Override train.seed");
    sub->add_flag("-v,--verbose", verbose, "Print per-epoch progress");
  };
  CLI::App* gen = app.add_subcommand("generate", "Generate the toy snapshot ensemble");
  CLI::App* trn = app.add_subcommand("train", "Train one model per variable and method");
  CLI::App* itp = app.add_subcommand("interp", "Interpolate at target parameters");
  CLI::App* evl = app.add_subcommand("eval", "Evaluate interpolations against ground truth");
  for (CLI::App* sub : {gen, trn, itp, evl}) add_common(sub);
  trn->add_flag("--resume", resume_flag, "Continue existing checkpoints up to train.epochs");
  for (CLI::App* sub : {itp, evl}) sub->add_option("--target", targets, "Target parameter value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = load_run_config(config_path);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (seed) cfg.train.seed = *seed;
    if (!targets.empty()) {
      cfg.targets = targets;
      std::sort(cfg.targets.begin(), cfg.targets.end());
    }
    std::ostream* progress = verbose ? &err : nullptr;
    if (gen->parsed()) {
      out << cmd_generate(cfg).string() << "\n";
    } else if (trn->parsed()) {
      for (const auto& p : cmd_train(cfg, resume_flag, progress)) out << p.string() << "\n";
    } else if (itp->parsed()) {
      for (const auto& p : cmd_interp(cfg)) out << p.string() << "\n";
    } else if (evl->parsed()) {
      const RomReport r = cmd_eval(cfg);
      out << json(r).dump(2) << "\n";
    }
    return 0;
  } catch (const ExtrapolationError& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace lshrom
