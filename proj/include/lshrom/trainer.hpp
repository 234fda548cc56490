#pragma once

// Training loop (normalize -> augment -> per-epoch perturb/forward/loss/Adamax),
// the frozen model it produces, and the checkpoint archive.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lshrom/augment.hpp"
#include "lshrom/hvae_net.hpp"
#include "lshrom/objective.hpp"
#include "lshrom/snapshot_store.hpp"

namespace lshrom {

struct TrainConfig {
  double learning_rate = 1e-3;
  double adamax_beta1 = 0.9;
  double adamax_beta2 = 0.999;
  double adamax_eps = 1e-8;
  int epochs = 5000;
  /// Entries per optimizer step; 0 selects the full augmented batch.
  int batch_size = 4;
  std::uint64_t seed = 0;
  /// Global gradient-norm clip; 0 disables clipping.
  double grad_clip = 0.0;
  /// Power-iteration sweeps per step for spectral normalization.
  int power_iterations = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

struct AdamaxState {
  std::int64_t step = 0;
  std::vector<std::vector<float>> m;  // one array per trainable parameter, store order
  std::vector<std::vector<float>> u;
};

/// One Adamax update of a single array at step t (1-based):
/// m = b1 m + (1 - b1) g, u = max(b2 u, |g|), p -= lr / (1 - b1^t) * m / (u + eps).
template <typename T>
void adamax_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> u,
                   std::int64_t t, const TrainConfig& cfg);

/// Applies adamax_update to every trainable parameter of the store using its
/// accumulated gradient, then clears the gradients.
void adamax_step(nn::ParamStore<float>& params, AdamaxState& state, const TrainConfig& cfg);

struct TrainedModel {
  NetKind kind = NetKind::kLshVae;
  ArchitectureConfig arch;
  std::size_t n_t = 0;
  std::size_t n_dof = 0;
  std::string variable;
  std::string parameter_name;
  std::vector<double> parameter_values;
  double timestep = 0.0;
  NormalizationMap norm;
  LossConfig loss;
  TrainConfig train;
  AugmentConfig augment;
  std::vector<LossBreakdown> training_log;
  double training_seconds = 0.0;

  std::shared_ptr<Network<float>> net;
  AdamaxState optimizer;
  /// Serialized engine states of the augmentation, noise and shuffle streams.
  std::string rng_augment, rng_noise, rng_shuffle;
  /// Encoder means per sampled parameter: [parameter][group] -> code.
  std::vector<std::vector<std::vector<float>>> cached_latents;

  int epochs_done() const { return static_cast<int>(training_log.size()); }
};

using EpochCallback = std::function<void(int epoch, const LossBreakdown&)>;

/// Trains a network of the given kind on one variable of the ensemble.
TrainedModel train(const SnapshotEnsemble& ensemble, const std::string& variable, const ArchitectureConfig& arch,
                   const LossConfig& loss_cfg, const TrainConfig& train_cfg, const AugmentConfig& aug_cfg,
                   NetKind kind = NetKind::kLshVae, std::ostream* progress = nullptr,
                   const EpochCallback& on_epoch = {});

/// Continues a run until `total_epochs` epochs have been logged. The ensemble
/// must be the one the model was trained on.
void resume(TrainedModel& model, const SnapshotEnsemble& ensemble, int total_epochs,
            std::ostream* progress = nullptr, const EpochCallback& on_epoch = {});

/// Re-estimates batch-norm running statistics from the unperturbed training set
/// and refreshes the cached latents.
void finalize_model(TrainedModel& model, const SnapshotEnsemble& ensemble);

/// Normalized, unaugmented snapshot of every sampled parameter (batch, N_t, N_DOF).
DatasetTensor normalized_samples(const SnapshotEnsemble& ensemble, const std::string& variable,
                                 const NormalizationMap& norm);

/// CSV with columns epoch,total,mse,kl_1..kl_L,beta.
void write_training_log(const std::vector<LossBreakdown>& log, const std::filesystem::path& path);

/// Mean of `total` over epochs [begin, begin + width).
double windowed_mean_loss(const std::vector<LossBreakdown>& log, std::size_t begin, std::size_t width);

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);
/// Loads and rejects archives whose architecture differs from `expected`.
TrainedModel load_checkpoint(const std::filesystem::path& path, const ArchitectureConfig& expected);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace lshrom
