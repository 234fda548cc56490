#pragma once

// Reference methods on the same block primitives: a convolutional autoencoder
// with one deterministic latent, and a flat single-group beta-VAE.

#include <random>
#include <span>
#include <string>
#include <vector>

#include "lshrom/trainer.hpp"

namespace lshrom {

struct BaselineConfig {
  NetKind kind = NetKind::kCae;
  int latent_dim = 32;
  ArchitectureConfig arch;
  LossConfig loss;

  /// Architecture used for the baseline network (top latent set to latent_dim).
  ArchitectureConfig effective_arch() const;
};

struct TrainingBudget {
  TrainConfig train;
  AugmentConfig augment;
};

struct CaeOutput {
  std::vector<float> x_tilde;
  std::vector<float> z;
};

struct BetaVaeOutput {
  std::vector<float> x_tilde, mu, sigma, z;
};

/// Deterministic encode/decode of a (batch, N_t, N_DOF) block in inference mode.
CaeOutput cae_forward(Network<float>& net, std::span<const float> x, std::size_t batch);

/// Mean squared error between two arrays.
double cae_loss(std::span<const float> x, std::span<const float> x_tilde);

/// Single-group VAE pass with z = mu + sigma * eps drawn from rng (inference-mode
/// batch normalization).
BetaVaeOutput beta_vae_forward(Network<float>& net, std::span<const float> x, std::size_t batch,
                               std::mt19937_64& rng);

TrainedModel train_baseline(const SnapshotEnsemble& ensemble, const std::string& variable, const BaselineConfig& cfg,
                            const TrainingBudget& budget, std::ostream* progress = nullptr);

}  // namespace lshrom
