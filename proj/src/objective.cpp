#include "lshrom/objective.hpp"

#include <cmath>
#include <numeric>

#include "lshrom/error.hpp"
#include "lshrom/nn/ops.hpp"

namespace lshrom {

void LossConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("loss.alpha must be positive");
  if (!(beta_target > 0.0)) throw ConfigError("loss.beta_target must be positive");
  if (n_epochs < 1) throw ConfigError("loss.n_epochs must be positive");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) {
    throw ConfigError("loss.warmup_fraction must lie in (0, 1)");
  }
  if (!(floor_factor >= 0.0)) throw ConfigError("loss.floor_factor must be non-negative");
  if (mse_reduction != "mean" && mse_reduction != "sum") {
    throw ConfigError("loss.mse_reduction must be \"mean\" or \"sum\"");
  }
  if (schedule != "annealed" && schedule != "constant") {
    throw ConfigError("loss.schedule must be \"annealed\" or \"constant\"");
  }
}

void to_json(nlohmann::json& j, const LossConfig& c) {
  j = nlohmann::json{{"alpha", c.alpha},
                     {"beta_target", c.beta_target},
                     {"n_epochs", c.n_epochs},
                     {"warmup_fraction", c.warmup_fraction},
                     {"floor_factor", c.floor_factor},
                     {"mse_reduction", c.mse_reduction},
                     {"schedule", c.schedule}};
}

void from_json(const nlohmann::json& j, LossConfig& c) {
  c.alpha = j.value("alpha", c.alpha);
  c.beta_target = j.value("beta_target", c.beta_target);
  c.n_epochs = j.value("n_epochs", c.n_epochs);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.floor_factor = j.value("floor_factor", c.floor_factor);
  c.mse_reduction = j.value("mse_reduction", c.mse_reduction);
  c.schedule = j.value("schedule", c.schedule);
}

double LossBreakdown::kl_sum() const {
  return std::accumulate(kl_per_group.begin(), kl_per_group.end(), 0.0);
}

void to_json(nlohmann::json& j, const LossBreakdown& b) {
  j = nlohmann::json{{"total", b.total}, {"mse", b.mse}, {"kl", b.kl_per_group}, {"beta", b.beta_used}};
}

void from_json(const nlohmann::json& j, LossBreakdown& b) {
  j.at("total").get_to(b.total);
  j.at("mse").get_to(b.mse);
  j.at("kl").get_to(b.kl_per_group);
  j.at("beta").get_to(b.beta_used);
}

namespace {

void require_positive(std::span<const double> sigma, const char* what) {
  for (double s : sigma) {
    if (!(s > 0.0)) throw std::domain_error(std::string(what) + ": sigma must be positive");
  }
}

}  // namespace

double kl_standard_normal(std::span<const double> mu, std::span<const double> sigma) {
  if (mu.size() != sigma.size()) throw std::invalid_argument("kl_standard_normal: size mismatch");
  require_positive(sigma, "kl_standard_normal");
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double v = sigma[i] * sigma[i];
    acc += 0.5 * (v + mu[i] * mu[i] - std::log(v) - 1.0);
  }
  return acc;
}

double kl_gaussian_pair(std::span<const double> mq, std::span<const double> sq,
                        std::span<const double> mp, std::span<const double> sp) {
  if (mq.size() != sq.size() || mq.size() != mp.size() || mq.size() != sp.size()) {
    throw std::invalid_argument("kl_gaussian_pair: size mismatch");
  }
  require_positive(sq, "kl_gaussian_pair");
  require_positive(sp, "kl_gaussian_pair");
  double acc = 0.0;
  for (std::size_t i = 0; i < mq.size(); ++i) {
    const double d = mq[i] - mp[i];
    acc += std::log(sp[i] / sq[i]) + (sq[i] * sq[i] + d * d) / (2.0 * sp[i] * sp[i]) - 0.5;
  }
  return acc;
}

double beta_schedule(int epoch, const LossConfig& cfg) {
  if (epoch < 1 || epoch > cfg.n_epochs) {
    throw std::out_of_range("beta_schedule: epoch " + std::to_string(epoch) + " outside [1, " +
                            std::to_string(cfg.n_epochs) + "]");
  }
  if (cfg.schedule == "constant") return cfg.beta_target;
  if (static_cast<double>(epoch) < cfg.warmup_fraction * cfg.n_epochs) {
    return cfg.floor_factor * cfg.beta_target;
  }
  return cfg.beta_target * static_cast<double>(epoch) / static_cast<double>(cfg.n_epochs);
}

template <typename T>
nn::Var lsh_vae_loss(nn::Graph<T>& g, nn::Var x, nn::Var x_tilde, std::span<const GroupStats> groups,
                     double beta, const LossConfig& cfg, LossBreakdown* breakdown) {
  if (groups.empty()) throw std::invalid_argument("lsh_vae_loss: no latent groups");
  if (g.value(x).size() != g.value(x_tilde).size()) {
    throw std::invalid_argument("lsh_vae_loss: reconstruction shape mismatch");
  }
  std::vector<nn::Var> terms;
  std::vector<T> weights;
  nn::Var rec = nn::mse(g, x_tilde, x);
  const double n_elem = static_cast<double>(g.value(x).size()) / static_cast<double>(g.shape(x)[0]);
  const double rec_weight = cfg.mse_reduction == "sum" ? cfg.alpha * n_elem : cfg.alpha;
  terms.push_back(rec);
  weights.push_back(static_cast<T>(rec_weight));

  std::vector<double> kls;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const GroupStats& s = groups[i];
    const bool top = i + 1 == groups.size();
    if (!s.mu_q.valid() || !s.logvar_q.valid() || (!top && (!s.mu_p.valid() || !s.logvar_p.valid()))) {
      throw std::invalid_argument("lsh_vae_loss: incomplete latent state at group " + std::to_string(i + 1));
    }
    nn::Var kl = top ? nn::kl_standard_normal(g, s.mu_q, s.logvar_q)
                     : nn::kl_gaussian_pair(g, s.mu_q, s.logvar_q, s.mu_p, s.logvar_p);
    kls.push_back(static_cast<double>(g.scalar(kl)));
    terms.push_back(kl);
    weights.push_back(static_cast<T>(beta));
  }
  nn::Var total = nn::weighted_sum<T>(g, terms, weights);
  if (breakdown) {
    breakdown->mse = static_cast<double>(g.scalar(rec));
    breakdown->kl_per_group = std::move(kls);
    breakdown->beta_used = beta;
    breakdown->total = static_cast<double>(g.scalar(total));
  }
  return total;
}

template nn::Var lsh_vae_loss<float>(nn::Graph<float>&, nn::Var, nn::Var, std::span<const GroupStats>,
                                     double, const LossConfig&, LossBreakdown*);
template nn::Var lsh_vae_loss<double>(nn::Graph<double>&, nn::Var, nn::Var, std::span<const GroupStats>,
                                      double, const LossConfig&, LossBreakdown*);

std::vector<double> kl_per_dimension(std::span<const double> mq, std::span<const double> lq,
                                     std::span<const double> mp, std::span<const double> lp,
                                     std::size_t batch, std::size_t dim) {
  if (mq.size() != batch * dim || lq.size() != batch * dim) {
    throw std::invalid_argument("kl_per_dimension: size mismatch");
  }
  const bool standard = mp.empty();
  std::vector<double> out(dim, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t d = 0; d < dim; ++d) {
      const std::size_t i = b * dim + d;
      if (standard) {
        out[d] += 0.5 * (std::exp(lq[i]) + mq[i] * mq[i] - lq[i] - 1.0);
      } else {
        const double diff = mq[i] - mp[i];
        out[d] += 0.5 * (lp[i] - lq[i]) + (std::exp(lq[i]) + diff * diff) / (2.0 * std::exp(lp[i])) - 0.5;
      }
    }
  }
  for (double& v : out) v /= static_cast<double>(batch);
  return out;
}

}  // namespace lshrom
