#include "lshrom/baselines.hpp"

#include <cmath>

#include "lshrom/error.hpp"
#include "lshrom/nn/ops.hpp"

namespace lshrom {
namespace {

void check_input(const Network<float>& net, std::span<const float> x, std::size_t batch) {
  if (batch == 0 || x.size() != batch * net.n_t() * net.n_dof()) {
    throw ConfigError("input of " + std::to_string(x.size()) + " values does not match (" + std::to_string(batch) +
                      ", " + std::to_string(net.n_t()) + ", " + std::to_string(net.n_dof()) + ")");
  }
}

}  // namespace

ArchitectureConfig BaselineConfig::effective_arch() const {
  if (latent_dim < 1) throw ConfigError("baseline latent_dim must be positive");
  ArchitectureConfig a = arch;
  a.interp_latent_dim = latent_dim;
  return a;
}

CaeOutput cae_forward(Network<float>& net, std::span<const float> x, std::size_t batch) {
  if (net.kind() != NetKind::kCae) throw ConfigError("cae_forward: network is not a CAE");
  check_input(net, x, batch);
  nn::Graph<float> g;
  nn::Var xv = g.constant(nn::Shape{batch, net.n_t(), net.n_dof()}, x);
  const ForwardResult r = net.forward(g, xv, {}, false);
  return {g.value(r.x_tilde), g.value(r.state.mu_q[0])};
}

double cae_loss(std::span<const float> x, std::span<const float> x_tilde) {
  if (x.size() != x_tilde.size() || x.empty()) throw std::invalid_argument("cae_loss: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x_tilde[i]) - x[i];
    acc += d * d;
  }
  return acc / static_cast<double>(x.size());
}

BetaVaeOutput beta_vae_forward(Network<float>& net, std::span<const float> x, std::size_t batch,
                               std::mt19937_64& rng) {
  if (net.kind() != NetKind::kBetaVae) throw ConfigError("beta_vae_forward: network is not a beta-VAE");
  check_input(net, x, batch);
  nn::Graph<float> g;
  nn::Var xv = g.constant(nn::Shape{batch, net.n_t(), net.n_dof()}, x);
  const LatentNoise<float> noise = net.sample_noise(rng, batch);
  const ForwardResult r = net.forward(g, xv, noise, false);
  BetaVaeOutput out;
  out.x_tilde = g.value(r.x_tilde);
  out.mu = g.value(r.state.mu_q[0]);
  for (float lv : g.value(r.state.logvar_q[0])) out.sigma.push_back(std::exp(0.5f * lv));
  out.z = g.value(r.state.z[0]);
  return out;
}

TrainedModel train_baseline(const SnapshotEnsemble& ens, const std::string& variable, const BaselineConfig& cfg,
                            const TrainingBudget& budget, std::ostream* progress) {
  if (cfg.kind == NetKind::kLshVae) throw ConfigError("train_baseline: kind must be cae or beta_vae");
  return train(ens, variable, cfg.effective_arch(), cfg.loss, budget.train, budget.augment, cfg.kind, progress);
}

}  // namespace lshrom
