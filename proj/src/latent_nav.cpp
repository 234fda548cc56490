#include "lshrom/latent_nav.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lshrom/error.hpp"

namespace lshrom {
namespace {

std::vector<std::vector<double>> to_double(const std::vector<std::vector<float>>& v) {
  std::vector<std::vector<double>> out;
  for (const auto& g : v) out.emplace_back(g.begin(), g.end());
  return out;
}

std::size_t sample_index(const std::vector<double>& grid, double p) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (std::abs(grid[i] - p) <= 1e-12 * std::max({1.0, std::abs(p), std::abs(grid[i])})) return i;
  }
  std::ostringstream os;
  os << "parameter value " << p << " is not in the sampled grid";
  throw ConfigError(os.str());
}

}  // namespace

LatentCode extract_latent(TrainedModel& model, const SnapshotEnsemble& ens, const std::string& variable,
                          double p) {
  if (variable != model.variable) throw ConfigError("model was trained on '" + model.variable + "'");
  const auto idx = ens.index_of(p);
  if (!idx) {
    std::ostringstream os;
    os << "parameter value " << p << " is not in the sampled grid";
    throw ConfigError(os.str());
  }
  const FieldVariable x = normalize(ens.field(*idx, variable), model.norm);
  LatentCode code;
  code.parameter_value = p;
  code.groups = to_double(model.net->latent_means(x.values, 1));
  return code;
}

LatentCode cached_latent(const TrainedModel& model, double p) {
  const std::size_t idx = sample_index(model.parameter_values, p);
  if (idx >= model.cached_latents.size()) throw ConfigError("model has no cached latents");
  LatentCode code;
  code.parameter_value = p;
  code.groups = to_double(model.cached_latents[idx]);
  return code;
}

double interpolation_ratio(double p_tgt, double p_1, double p_2) {
  if (p_1 == p_2) throw ConfigError("interpolation_ratio: p_1 equals p_2");
  const double lo = std::min(p_1, p_2), hi = std::max(p_1, p_2);
  if (!(p_tgt >= lo && p_tgt <= hi)) {
    std::ostringstream os;
    os << "target " << p_tgt << " lies outside [" << lo << ", " << hi
       << "]: only interpolation between sampled parameters is supported";
    throw ExtrapolationError(os.str());
  }
  return std::clamp((p_tgt - p_2) / (p_1 - p_2), 0.0, 1.0);
}

std::vector<double> slerp(std::span<const double> a, std::span<const double> b, double t) {
  if (a.size() != b.size()) throw std::invalid_argument("slerp: size mismatch");
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("slerp: t outside [0, 1]");
  double na = 0.0, nb = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i] * a[i];
    nb += b[i] * b[i];
    dot += a[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("slerp: zero-norm input");
  if (t == 0.0) return {a.begin(), a.end()};
  if (t == 1.0) return {b.begin(), b.end()};
  const double theta = std::acos(std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0));
  double wa = 1.0 - t, wb = t;
  if (theta >= 1e-6) {
    const double s = std::sin(theta);
    wa = std::sin((1.0 - t) * theta) / s;
    wb = std::sin(t * theta) / s;
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = wa * a[i] + wb * b[i];
  return out;
}

LatentCode slerp(const LatentCode& a, const LatentCode& b, double t) {
  if (a.groups.size() != b.groups.size()) throw std::invalid_argument("slerp: group count mismatch");
  LatentCode out;
  out.parameter_value = (1.0 - t) * a.parameter_value + t * b.parameter_value;
  for (std::size_t i = 0; i < a.groups.size(); ++i) out.groups.push_back(slerp(a.groups[i], b.groups[i], t));
  return out;
}

FieldVariable decode_latent(TrainedModel& model, const LatentCode& code) {
  std::vector<std::vector<float>> codes;
  for (const auto& g : code.groups) codes.emplace_back(g.begin(), g.end());
  std::vector<float> x = model.net->decode_codes(codes, 1);
  FieldVariable f(model.variable, model.n_t, model.n_dof, std::move(x));
  return denormalize(f, model.norm);
}

Interpolation interpolate_parametric(TrainedModel& model, const SnapshotEnsemble* ens, const std::string& variable,
                                     double p_tgt) {
  if (variable != model.variable) throw ConfigError("model was trained on '" + model.variable + "'");
  const auto& grid = model.parameter_values;
  if (grid.size() < 2) throw ConfigError("interpolation needs at least two sampled parameters");
  if (!(p_tgt >= grid.front() && p_tgt <= grid.back())) {
    std::ostringstream os;
    os << "target " << p_tgt << " lies outside the sampled range [" << grid.front() << ", " << grid.back()
       << "]: only interpolation is supported";
    throw ExtrapolationError(os.str());
  }
  auto code_at = [&](double p) { return ens ? extract_latent(model, *ens, variable, p) : cached_latent(model, p); };

  Interpolation r;
  const auto hi = std::upper_bound(grid.begin(), grid.end(), p_tgt);
  const std::size_t i2 = static_cast<std::size_t>(std::min(hi, grid.end() - 1) - grid.begin());
  const std::size_t i1 = i2 - 1;
  r.p_1 = grid[i1];
  r.p_2 = grid[i2];
  for (std::size_t i : {i1, i2}) {
    if (p_tgt == grid[i]) {
      r.on_sample = true;
      r.p_1 = r.p_2 = grid[i];
      r.k = 1.0;
      r.field = decode_latent(model, code_at(grid[i]));
      return r;
    }
  }
  r.k = interpolation_ratio(p_tgt, r.p_1, r.p_2);
  const LatentCode z = slerp(code_at(r.p_1), code_at(r.p_2), 1.0 - r.k);
  r.field = decode_latent(model, z);
  return r;
}

}  // namespace lshrom
