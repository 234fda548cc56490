#pragma once

// Config-driven pipeline: generate -> train -> interp -> eval.
//
// Output directory layout:
//   ensemble/                      generated snapshot ensemble
//   models/<variable>/<method>.ckpt and <method>_log.csv
//   interp/<method>/               interpolated ensemble (targets as parameters)
//   eval/                          report.json, CSV tables, PNG plots

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lshrom/augment.hpp"
#include "lshrom/evaluate.hpp"
#include "lshrom/hvae_net.hpp"
#include "lshrom/objective.hpp"
#include "lshrom/toy_fom.hpp"
#include "lshrom/trainer.hpp"

namespace lshrom {

struct BaselineToggles {
  bool cae = false;
  bool beta_vae = false;
  int latent_dim = 32;
};

void to_json(nlohmann::json& j, const BaselineToggles& b);
void from_json(const nlohmann::json& j, BaselineToggles& b);

struct RunConfig {
  std::optional<ToyProblemSpec> problem;
  /// Existing ensemble directory used instead of a toy problem.
  std::optional<std::filesystem::path> ensemble;
  /// Ground-truth ensemble at the targets, for data without a toy oracle.
  std::optional<std::filesystem::path> truth;
  /// Empty selects every variable of the ensemble.
  std::vector<std::string> variables;
  ArchitectureConfig arch;
  LossConfig loss;
  TrainConfig train;
  AugmentConfig augment;
  BaselineToggles baselines;
  std::vector<double> targets;
  std::filesystem::path output_dir = "romctl_out";

  std::filesystem::path ensemble_dir() const;
  std::filesystem::path model_path(const std::string& variable, NetKind kind) const;
  /// lsh_vae first, then the enabled baselines.
  std::vector<NetKind> methods() const;
};

/// Parses a config document. Unknown keys raise ConfigError naming the key.
/// Relative paths resolve against base_dir.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Loads the configured ensemble, generating the toy problem first if needed.
SnapshotEnsemble load_or_generate(const RunConfig& cfg);

std::filesystem::path cmd_generate(const RunConfig& cfg);
std::vector<std::filesystem::path> cmd_train(const RunConfig& cfg, bool resume_existing = false,
                                             std::ostream* progress = nullptr);
/// Writes one ensemble per method under interp/. Returns their directories.
std::vector<std::filesystem::path> cmd_interp(const RunConfig& cfg);
/// Compares interpolations against the toy oracle or the truth ensemble and
/// writes report, tables and plots under eval/.
RomReport cmd_eval(const RunConfig& cfg);

/// Full command-line entry point; returns the process exit code
/// (0 ok, 2 config error, 3 numerical failure, 4 extrapolation rejected, 1 other).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lshrom
