#include "lshrom/augment.hpp"

#include <cmath>
#include <sstream>

#include "lshrom/error.hpp"

namespace lshrom {

void AugmentConfig::validate() const {
  for (double f : resample_factors) {
    if (!(f > 0.0) || !std::isfinite(f)) throw ConfigError("augment.resample_factors must be positive");
    if (f == 1.0) throw ConfigError("augment.resample_factors must not contain 1.0");
  }
  if (!(amplitude_gain >= 0.0) || !(offset_gain >= 0.0)) {
    throw ConfigError("augment gains must be non-negative");
  }
}

void to_json(nlohmann::json& j, const AugmentConfig& cfg) {
  j = nlohmann::json{{"resample_factors", cfg.resample_factors},
                     {"amplitude_gain", cfg.amplitude_gain},
                     {"offset_gain", cfg.offset_gain},
                     {"rng_seed", cfg.rng_seed}};
}

void from_json(const nlohmann::json& j, AugmentConfig& cfg) {
  cfg.resample_factors = j.value("resample_factors", cfg.resample_factors);
  cfg.amplitude_gain = j.value("amplitude_gain", cfg.amplitude_gain);
  cfg.offset_gain = j.value("offset_gain", cfg.offset_gain);
  cfg.rng_seed = j.value("rng_seed", cfg.rng_seed);
}

FieldVariable resample(const FieldVariable& series, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) throw ConfigError("resample: factor must be positive");
  const std::size_t nt = series.n_t, nd = series.n_dof;
  FieldVariable out(series.name, nt, nd);
  if (factor == 1.0) {
    out.values = series.values;
    return out;
  }
  for (std::size_t n = 0; n < nt; ++n) {
    const double s = static_cast<double>(n) * factor;
    const double whole = std::floor(s);
    const double w = s - whole;
    const std::size_t i0 = static_cast<std::size_t>(whole) % nt;
    const std::size_t i1 = (i0 + 1) % nt;
    for (std::size_t d = 0; d < nd; ++d) {
      out.at(n, d) = static_cast<float>((1.0 - w) * series.at(i0, d) + w * series.at(i1, d));
    }
  }
  return out;
}

DatasetTensor build_training_set(const FieldVariable& x, const AugmentConfig& cfg, double p) {
  return build_training_set(std::vector<FieldVariable>{x}, std::vector<double>{p}, cfg);
}

DatasetTensor build_training_set(const std::vector<FieldVariable>& xs,
                                 const std::vector<double>& ps, const AugmentConfig& cfg) {
  cfg.validate();
  if (xs.empty() || xs.size() != ps.size()) throw ConfigError("build_training_set: size mismatch");
  DatasetTensor d;
  d.n_t = xs.front().n_t;
  d.n_dof = xs.front().n_dof;
  d.batch = xs.size() * (1 + cfg.n_resample());
  d.data.reserve(d.batch * d.entry_size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].n_t != d.n_t || xs[i].n_dof != d.n_dof) throw ConfigError("build_training_set: shape mismatch");
    d.data.insert(d.data.end(), xs[i].values.begin(), xs[i].values.end());
    d.provenance.push_back({ps[i], "original"});
    for (double f : cfg.resample_factors) {
      const FieldVariable r = resample(xs[i], f);
      d.data.insert(d.data.end(), r.values.begin(), r.values.end());
      std::ostringstream tag;
      tag << "resample:" << f;
      d.provenance.push_back({ps[i], tag.str()});
    }
  }
  return d;
}

double truncated_normal(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const double v = n(rng);
    if (v >= -1.0 && v <= 1.0) return v;
  }
}

DatasetTensor epoch_perturb(const DatasetTensor& x, std::mt19937_64& rng, const AugmentConfig& cfg,
                            std::vector<PerturbDraw>* draws) {
  DatasetTensor out = x;
  if (draws) draws->clear();
  for (std::size_t i = 0; i < x.batch; ++i) {
    const double a = truncated_normal(rng);
    const double b = truncated_normal(rng);
    if (draws) draws->push_back({a, b});
    const float gain = static_cast<float>(1.0 + cfg.amplitude_gain * a);
    const float shift = static_cast<float>(cfg.offset_gain * b);
    for (float& v : out.entry(i)) v = gain * v + shift;
  }
  return out;
}

}  // namespace lshrom
