#pragma once

// Loss terms: Gaussian KL divergences, the hierarchical weighted loss
// alpha * MSE + beta * sum_i KL_i, and the beta annealing schedule.

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lshrom/nn/graph.hpp"

namespace lshrom {

struct LossConfig {
  double alpha = 1e6;
  double beta_target = 1.0;
  int n_epochs = 5000;
  double warmup_fraction = 0.3;
  double floor_factor = 1e-4;
  /// "mean" (default) or "sum" reduction of the squared error.
  std::string mse_reduction = "mean";
  /// "annealed" (floor then linear ramp) or "constant" (β_target at every epoch).
  std::string schedule = "annealed";

  void validate() const;
};

void to_json(nlohmann::json& j, const LossConfig& cfg);
void from_json(const nlohmann::json& j, LossConfig& cfg);

struct LossBreakdown {
  double total = 0.0;
  double mse = 0.0;
  std::vector<double> kl_per_group;
  double beta_used = 0.0;

  double kl_sum() const;
};

void to_json(nlohmann::json& j, const LossBreakdown& b);
void from_json(const nlohmann::json& j, LossBreakdown& b);

/// 0.5 * sum(sigma^2 + mu^2 - log sigma^2 - 1). Throws for sigma <= 0.
double kl_standard_normal(std::span<const double> mu, std::span<const double> sigma);

/// sum log(sp/sq) + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2. Throws for sigma <= 0.
double kl_gaussian_pair(std::span<const double> mu_q, std::span<const double> sigma_q,
                        std::span<const double> mu_p, std::span<const double> sigma_p);

/// floor_factor * beta_target before warmup_fraction * n_epochs, then the
/// linear ramp beta_target * epoch / n_epochs. Epochs are 1-based.
double beta_schedule(int epoch, const LossConfig& cfg);

/// Latent statistics of one group as graph handles, each (batch, dim).
/// Groups below the top carry decoder-side prior statistics as well.
struct GroupStats {
  nn::Var mu_q, logvar_q;
  nn::Var mu_p, logvar_p;  // invalid for the top group
};

/// Builds the weighted loss on the graph and reports its parts. The last entry
/// of `groups` is the top group and is measured against N(0, I).
template <typename T>
nn::Var lsh_vae_loss(nn::Graph<T>& g, nn::Var x, nn::Var x_tilde, std::span<const GroupStats> groups,
                     double beta, const LossConfig& cfg, LossBreakdown* breakdown);

/// Batch-averaged KL per latent dimension, from (batch, dim) log-variance data.
/// mu_p / logvar_p empty means the standard normal prior.
std::vector<double> kl_per_dimension(std::span<const double> mu_q, std::span<const double> logvar_q,
                                     std::span<const double> mu_p, std::span<const double> logvar_p,
                                     std::size_t batch, std::size_t dim);

}  // namespace lshrom
