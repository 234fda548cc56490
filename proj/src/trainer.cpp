#include "lshrom/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "lshrom/error.hpp"

namespace lshrom {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (!(adamax_beta1 > 0.0 && adamax_beta1 < 1.0)) throw ConfigError("train.adamax_beta1 must lie in (0, 1)");
  if (!(adamax_beta2 > 0.0 && adamax_beta2 < 1.0)) throw ConfigError("train.adamax_beta2 must lie in (0, 1)");
  if (!(adamax_eps > 0.0)) throw ConfigError("train.adamax_eps must be positive");
  if (epochs < 1) throw ConfigError("train.epochs must be positive");
  if (batch_size < 0) throw ConfigError("train.batch_size must be non-negative");
  if (!(grad_clip >= 0.0)) throw ConfigError("train.grad_clip must be non-negative");
  if (power_iterations < 1) throw ConfigError("train.power_iterations must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate}, {"adamax_beta1", c.adamax_beta1},
                     {"adamax_beta2", c.adamax_beta2},   {"adamax_eps", c.adamax_eps},
                     {"epochs", c.epochs},               {"batch_size", c.batch_size},
                     {"seed", c.seed},                   {"grad_clip", c.grad_clip},
                     {"power_iterations", c.power_iterations}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.adamax_beta1 = j.value("adamax_beta1", c.adamax_beta1);
  c.adamax_beta2 = j.value("adamax_beta2", c.adamax_beta2);
  c.adamax_eps = j.value("adamax_eps", c.adamax_eps);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.power_iterations = j.value("power_iterations", c.power_iterations);
}

template <typename T>
void adamax_update(std::span<T> p, std::span<const T> g, std::span<T> m, std::span<T> u, std::int64_t t,
                   const TrainConfig& cfg) {
  const T b1 = static_cast<T>(cfg.adamax_beta1);
  const T b2 = static_cast<T>(cfg.adamax_beta2);
  const T eps = static_cast<T>(cfg.adamax_eps);
  const T step = static_cast<T>(cfg.learning_rate / (1.0 - std::pow(cfg.adamax_beta1, static_cast<double>(t))));
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = b1 * m[i] + (T(1) - b1) * g[i];
    u[i] = std::max(b2 * u[i], std::abs(g[i]));
    p[i] -= step * m[i] / (u[i] + eps);
  }
}

template void adamax_update<float>(std::span<float>, std::span<const float>, std::span<float>, std::span<float>,
                                   std::int64_t, const TrainConfig&);
template void adamax_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                    std::span<double>, std::int64_t, const TrainConfig&);

void adamax_step(nn::ParamStore<float>& params, AdamaxState& state, const TrainConfig& cfg) {
  if (state.m.empty()) {
    for (auto& p : params) {
      if (!p.trainable) continue;
      state.m.emplace_back(p.value.size(), 0.0f);
      state.u.emplace_back(p.value.size(), 0.0f);
    }
  }
  float clip = 1.0f;
  if (cfg.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& p : params) {
      for (float g : p.grad) sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip) clip = static_cast<float>(cfg.grad_clip / norm);
  }
  ++state.step;
  std::size_t k = 0;
  for (auto& p : params) {
    if (!p.trainable) continue;
    if (clip != 1.0f) {
      for (float& g : p.grad) g *= clip;
    }
    adamax_update<float>(p.value, p.grad, state.m[k], state.u[k], state.step, cfg);
    std::fill(p.grad.begin(), p.grad.end(), 0.0f);
    ++k;
  }
}

DatasetTensor normalized_samples(const SnapshotEnsemble& ens, const std::string& variable,
                                 const NormalizationMap& norm) {
  DatasetTensor d;
  d.batch = ens.size();
  d.n_t = ens.n_t();
  d.n_dof = ens.n_dof();
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const FieldVariable f = normalize(ens.field(i, variable), norm);
    d.data.insert(d.data.end(), f.values.begin(), f.values.end());
    d.provenance.push_back({ens.parameter_values[i], "original"});
  }
  return d;
}

namespace {

std::string engine_state(const std::mt19937_64& e) {
  std::ostringstream os;
  os << e;
  return os.str();
}

std::mt19937_64 engine_from(const std::string& s) {
  std::mt19937_64 e;
  std::istringstream is(s);
  is >> e;
  if (!is) throw FormatError("corrupt random-engine state");
  return e;
}

std::mt19937_64 derive_engine(std::uint64_t seed, std::uint64_t aux, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(aux), static_cast<std::uint32_t>(aux >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

DatasetTensor training_set(const TrainedModel& model, const SnapshotEnsemble& ens) {
  std::vector<FieldVariable> xs;
  for (std::size_t i = 0; i < ens.size(); ++i) xs.push_back(normalize(ens.field(i, model.variable), model.norm));
  return build_training_set(xs, ens.parameter_values, model.augment);
}

void check_ensemble(const TrainedModel& model, const SnapshotEnsemble& ens) {
  if (!ens.has_variable(model.variable)) throw ConfigError("variable '" + model.variable + "' not in ensemble");
  if (ens.n_t() != model.n_t || ens.n_dof() != model.n_dof || ens.parameter_values != model.parameter_values) {
    throw ConfigError("ensemble does not match the one the model was trained on");
  }
}

void run_epochs(TrainedModel& model, const SnapshotEnsemble& ens, int total_epochs, std::ostream* progress,
                const EpochCallback& on_epoch) {
  const auto t0 = std::chrono::steady_clock::now();
  Network<float>& net = *model.net;
  const DatasetTensor x_train = training_set(model, ens);
  std::mt19937_64 aug_rng = engine_from(model.rng_augment);
  std::mt19937_64 noise_rng = engine_from(model.rng_noise);
  std::mt19937_64 shuffle_rng = engine_from(model.rng_shuffle);
  const std::size_t n = x_train.batch;
  const std::size_t bs = model.train.batch_size == 0 ? n : std::min<std::size_t>(n, model.train.batch_size);
  const std::size_t es = x_train.entry_size();
  std::vector<std::size_t> order(n);

  for (int epoch = model.epochs_done() + 1; epoch <= total_epochs; ++epoch) {
    const double beta = model.kind == NetKind::kCae ? 0.0 : beta_schedule(epoch, model.loss);
    const DatasetTensor x_ep = epoch_perturb(x_train, aug_rng, model.augment);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    LossBreakdown epoch_loss;
    epoch_loss.beta_used = beta;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t b = std::min(bs, n - start);
      std::vector<float> xb(b * es);
      for (std::size_t i = 0; i < b; ++i) {
        const auto e = x_ep.entry(order[start + i]);
        std::copy(e.begin(), e.end(), xb.begin() + static_cast<std::ptrdiff_t>(i * es));
      }
      net.power_iteration(model.train.power_iterations);
      nn::Graph<float> g;
      nn::Var x = g.constant(nn::Shape{b, model.n_t, model.n_dof}, std::move(xb));
      const auto noise = net.sample_noise(noise_rng, b);
      const ForwardResult r = net.forward(g, x, noise, true);
      LossBreakdown part;
      nn::Var loss = net.loss(g, x, r, beta, model.loss, &part);
      if (!std::isfinite(part.total)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch));
      }
      g.backward(loss);
      adamax_step(net.params(), model.optimizer, model.train);

      const double w = static_cast<double>(b) / static_cast<double>(n);
      epoch_loss.total += w * part.total;
      epoch_loss.mse += w * part.mse;
      epoch_loss.kl_per_group.resize(part.kl_per_group.size(), 0.0);
      for (std::size_t i = 0; i < part.kl_per_group.size(); ++i) epoch_loss.kl_per_group[i] += w * part.kl_per_group[i];
    }
    for (const auto& p : net.params()) {
      for (float v : p.value) {
        if (!std::isfinite(v)) throw NumericalError("non-finite parameter " + p.name + " at epoch " + std::to_string(epoch));
      }
    }
    model.training_log.push_back(epoch_loss);
    if (progress) {
      *progress << "epoch " << epoch << "/" << total_epochs << " loss " << epoch_loss.total << " mse "
                << epoch_loss.mse << " kl " << epoch_loss.kl_sum() << " beta " << beta << '\n';
    }
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  model.rng_augment = engine_state(aug_rng);
  model.rng_noise = engine_state(noise_rng);
  model.rng_shuffle = engine_state(shuffle_rng);
  model.training_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void finalize_model(TrainedModel& model, const SnapshotEnsemble& ens) {
  Network<float>& net = *model.net;
  const DatasetTensor x_train = training_set(model, ens);
  const double momentum = net.bn_momentum();
  net.set_bn_momentum(1.0);
  {
    nn::Graph<float> g;
    nn::Var x = g.constant(nn::Shape{x_train.batch, model.n_t, model.n_dof}, x_train.data);
    net.forward(g, x, LatentNoise<float>{}, true);
  }
  net.set_bn_momentum(momentum);

  const DatasetTensor samples = normalized_samples(ens, model.variable, model.norm);
  model.cached_latents.clear();
  for (std::size_t i = 0; i < samples.batch; ++i) {
    model.cached_latents.push_back(net.latent_means(samples.entry(i), 1));
  }
}

TrainedModel train(const SnapshotEnsemble& ens, const std::string& variable, const ArchitectureConfig& arch,
                   const LossConfig& loss_cfg, const TrainConfig& train_cfg, const AugmentConfig& aug_cfg,
                   NetKind kind, std::ostream* progress, const EpochCallback& on_epoch) {
  ens.validate();
  arch.validate();
  loss_cfg.validate();
  train_cfg.validate();
  aug_cfg.validate();
  if (!ens.has_variable(variable)) throw ConfigError("variable '" + variable + "' not in ensemble");
  if (train_cfg.epochs > loss_cfg.n_epochs) {
    throw ConfigError("train.epochs exceeds loss.n_epochs of the beta schedule");
  }

  TrainedModel model;
  model.kind = kind;
  model.arch = arch;
  model.n_t = ens.n_t();
  model.n_dof = ens.n_dof();
  model.variable = variable;
  model.parameter_name = ens.parameter_name;
  model.parameter_values = ens.parameter_values;
  model.timestep = ens.timestep;
  model.norm = fit_normalization(ens, variable);
  model.loss = loss_cfg;
  model.train = train_cfg;
  model.augment = aug_cfg;
  model.net = std::make_shared<Network<float>>(kind, arch, model.n_t, model.n_dof,
                                               derive_engine(train_cfg.seed, 0, 0)());
  model.rng_augment = engine_state(derive_engine(train_cfg.seed, aug_cfg.rng_seed, 1));
  model.rng_noise = engine_state(derive_engine(train_cfg.seed, 0, 2));
  model.rng_shuffle = engine_state(derive_engine(train_cfg.seed, 0, 3));

  run_epochs(model, ens, train_cfg.epochs, progress, on_epoch);
  finalize_model(model, ens);
  return model;
}

void resume(TrainedModel& model, const SnapshotEnsemble& ens, int total_epochs, std::ostream* progress,
            const EpochCallback& on_epoch) {
  check_ensemble(model, ens);
  if (total_epochs > model.loss.n_epochs) throw ConfigError("resume: epochs exceed loss.n_epochs");
  if (total_epochs < model.epochs_done()) throw ConfigError("resume: model already has more epochs");
  run_epochs(model, ens, total_epochs, progress, on_epoch);
  model.train.epochs = total_epochs;
  finalize_model(model, ens);
}

void write_training_log(const std::vector<LossBreakdown>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  const std::size_t groups = log.empty() ? 0 : log.front().kl_per_group.size();
  out << "epoch,total,mse";
  for (std::size_t i = 1; i <= groups; ++i) out << ",kl_" << i;
  out << ",beta\n";
  out.precision(17);
  for (std::size_t e = 0; e < log.size(); ++e) {
    out << e + 1 << ',' << log[e].total << ',' << log[e].mse;
    for (double k : log[e].kl_per_group) out << ',' << k;
    out << ',' << log[e].beta_used << '\n';
  }
}

double windowed_mean_loss(const std::vector<LossBreakdown>& log, std::size_t begin, std::size_t width) {
  if (width == 0 || begin + width > log.size()) throw std::out_of_range("windowed_mean_loss: window out of range");
  double s = 0.0;
  for (std::size_t i = begin; i < begin + width; ++i) s += log[i].total;
  return s / static_cast<double>(width);
}

}  // namespace lshrom
