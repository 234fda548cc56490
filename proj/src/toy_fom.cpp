#include "lshrom/toy_fom.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "lshrom/error.hpp"

namespace lshrom {

std::string to_string(ToyKind kind) {
  switch (kind) {
    case ToyKind::kTravelingWave: return "traveling_wave";
    case ToyKind::kAdvectionDiffusion: return "advection_diffusion";
    case ToyKind::kCubicLimitCycle: return "cubic_limit_cycle";
  }
  return "unknown";
}

ToyKind parse_toy_kind(const std::string& s) {
  if (s == "traveling_wave") return ToyKind::kTravelingWave;
  if (s == "advection_diffusion") return ToyKind::kAdvectionDiffusion;
  if (s == "cubic_limit_cycle") return ToyKind::kCubicLimitCycle;
  throw ConfigError("unknown toy problem kind '" + s + "'");
}

void ToyProblemSpec::validate() const {
  if (parameters.empty()) throw ConfigError("problem.parameters must not be empty");
  for (std::size_t i = 1; i < parameters.size(); ++i) {
    if (!(parameters[i] > parameters[i - 1])) throw ConfigError("problem.parameters must be strictly increasing");
  }
  if (n_t < 2 || n_dof < 1) throw ConfigError("problem.n_t must be >= 2 and problem.n_dof >= 1");
  if (!(timestep > 0.0)) throw ConfigError("problem.timestep must be positive");
  if (variable.empty()) throw ConfigError("problem.variable must not be empty");
  if (kind == ToyKind::kAdvectionDiffusion) {
    if (!(viscosity >= 0.0) || !(pulse_width > 0.0)) throw ConfigError("advection-diffusion coefficients invalid");
    if (substeps < 0) throw ConfigError("problem.substeps must be non-negative");
  }
  if (kind == ToyKind::kCubicLimitCycle) {
    if (!(pitch_ref > 0.0) || !(rk_step > 0.0) || !(transient >= 0.0)) {
      throw ConfigError("limit-cycle coefficients invalid");
    }
  }
}

const std::vector<std::string>& toy_spec_keys() {
  static const std::vector<std::string> keys{
      "kind",      "parameters",    "n_t",          "n_dof",       "timestep",     "variable",
      "harmonic",  "viscosity",     "pulse_center", "pulse_width", "substeps",     "pitch_ref",
      "heave_damping", "coupling",  "initial_pitch", "transient",  "rk_step",      "map_seed"};
  return keys;
}

void to_json(nlohmann::json& j, const ToyProblemSpec& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)},
                     {"parameters", s.parameters},
                     {"n_t", s.n_t},
                     {"n_dof", s.n_dof},
                     {"timestep", s.timestep},
                     {"variable", s.variable},
                     {"harmonic", s.harmonic},
                     {"viscosity", s.viscosity},
                     {"pulse_center", s.pulse_center},
                     {"pulse_width", s.pulse_width},
                     {"substeps", s.substeps},
                     {"pitch_ref", s.pitch_ref},
                     {"heave_damping", s.heave_damping},
                     {"coupling", s.coupling},
                     {"initial_pitch", s.initial_pitch},
                     {"transient", s.transient},
                     {"rk_step", s.rk_step},
                     {"map_seed", s.map_seed}};
}

void from_json(const nlohmann::json& j, ToyProblemSpec& s) {
  s.kind = parse_toy_kind(j.value("kind", to_string(s.kind)));
  s.parameters = j.value("parameters", s.parameters);
  s.n_t = j.value("n_t", s.n_t);
  s.n_dof = j.value("n_dof", s.n_dof);
  s.timestep = j.value("timestep", s.timestep);
  s.variable = j.value("variable", s.variable);
  s.harmonic = j.value("harmonic", s.harmonic);
  s.viscosity = j.value("viscosity", s.viscosity);
  s.pulse_center = j.value("pulse_center", s.pulse_center);
  s.pulse_width = j.value("pulse_width", s.pulse_width);
  s.substeps = j.value("substeps", s.substeps);
  s.pitch_ref = j.value("pitch_ref", s.pitch_ref);
  s.heave_damping = j.value("heave_damping", s.heave_damping);
  s.coupling = j.value("coupling", s.coupling);
  s.initial_pitch = j.value("initial_pitch", s.initial_pitch);
  s.transient = j.value("transient", s.transient);
  s.rk_step = j.value("rk_step", s.rk_step);
  s.map_seed = j.value("map_seed", s.map_seed);
}

namespace {

SnapshotEnsemble make_ensemble(const ToyProblemSpec& spec) {
  SnapshotEnsemble ens;
  ens.parameter_name = spec.kind == ToyKind::kCubicLimitCycle ? "damping" : "mu";
  ens.parameter_values = spec.parameters;
  ens.timestep = spec.timestep;
  ens.variable_names = {spec.variable};
  ens.metadata["generator"] = spec;
  return ens;
}

template <typename F>
SnapshotEnsemble sweep(const ToyProblemSpec& spec, F&& field_at) {
  spec.validate();
  SnapshotEnsemble ens = make_ensemble(spec);
  std::vector<double> seconds;
  for (double mu : spec.parameters) {
    const auto t0 = std::chrono::steady_clock::now();
    FieldVariable f = field_at(mu);
    seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    ens.fields.push_back({{spec.variable, std::move(f)}});
  }
  ens.metadata["generation_seconds"] = seconds;
  ens.validate();
  return ens;
}

FieldVariable to_field(const ToyProblemSpec& spec, const std::vector<double>& v) {
  FieldVariable f(spec.variable, spec.n_t, spec.n_dof);
  for (std::size_t i = 0; i < v.size(); ++i) f.values[i] = static_cast<float>(v[i]);
  return f;
}

}  // namespace

SnapshotEnsemble generate(const ToyProblemSpec& spec) {
  switch (spec.kind) {
    case ToyKind::kTravelingWave: return traveling_wave(spec);
    case ToyKind::kAdvectionDiffusion: return advection_diffusion(spec);
    case ToyKind::kCubicLimitCycle: return cubic_limit_cycle(spec);
  }
  throw ConfigError("unknown toy problem kind");
}

FieldVariable traveling_wave_exact(const ToyProblemSpec& spec, double mu) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  FieldVariable f(spec.variable, spec.n_t, spec.n_dof);
  for (std::size_t n = 0; n < spec.n_t; ++n) {
    const double t = static_cast<double>(n) * spec.timestep;
    for (std::size_t d = 0; d < spec.n_dof; ++d) {
      const double xi = static_cast<double>(d) / static_cast<double>(spec.n_dof) - mu * t;
      f.at(n, d) = static_cast<float>(std::sin(two_pi * xi) + spec.harmonic * std::sin(2.0 * two_pi * xi));
    }
  }
  return f;
}

SnapshotEnsemble traveling_wave(const ToyProblemSpec& spec) {
  if (spec.kind != ToyKind::kTravelingWave) throw ConfigError("traveling_wave: spec kind mismatch");
  return sweep(spec, [&](double mu) { return traveling_wave_exact(spec, mu); });
}

int advection_diffusion_substeps(const ToyProblemSpec& spec, double mu) {
  const double dx = 1.0 / static_cast<double>(spec.n_dof);
  const double c = std::abs(mu) * spec.timestep / dx;
  const double d = spec.viscosity * spec.timestep / (dx * dx);
  if (spec.substeps > 0) {
    const double m = static_cast<double>(spec.substeps);
    if (c / m + 2.0 * d / m > 1.0) {
      std::ostringstream os;
      os << "CFL violation: c + 2d = " << (c + 2.0 * d) / m << " > 1 with " << spec.substeps << " substeps";
      throw ConfigError(os.str());
    }
    return spec.substeps;
  }
  return std::max(1, static_cast<int>(std::ceil((c + 2.0 * d) / 0.9)));
}

std::vector<double> advection_diffusion_solve(const ToyProblemSpec& spec, double mu) {
  const std::size_t n = spec.n_dof;
  const double dx = 1.0 / static_cast<double>(n);
  const int m = advection_diffusion_substeps(spec, mu);
  const double dt = spec.timestep / m;
  const double c = mu * dt / dx;
  const double d = spec.viscosity * dt / (dx * dx);

  std::vector<double> u(n), next(n), out;
  out.reserve(spec.n_t * n);
  const double s2 = spec.pulse_width * spec.pulse_width;
  for (std::size_t i = 0; i < n; ++i) {
    double x = static_cast<double>(i) * dx - spec.pulse_center;
    x -= std::round(x);
    u[i] = std::exp(-x * x / (2.0 * s2));
  }
  out.insert(out.end(), u.begin(), u.end());
  for (std::size_t step = 1; step < spec.n_t; ++step) {
    for (int sub = 0; sub < m; ++sub) {
      for (std::size_t i = 0; i < n; ++i) {
        const double left = u[(i + n - 1) % n];
        const double right = u[(i + 1) % n];
        const double adv = c >= 0.0 ? c * (u[i] - left) : c * (right - u[i]);
        next[i] = u[i] - adv + d * (right - 2.0 * u[i] + left);
      }
      u.swap(next);
    }
    out.insert(out.end(), u.begin(), u.end());
  }
  return out;
}

std::vector<double> advection_diffusion_exact(const ToyProblemSpec& spec, double mu) {
  const std::size_t n = spec.n_dof;
  const double s2 = spec.pulse_width * spec.pulse_width;
  std::vector<double> out(spec.n_t * n);
  for (std::size_t step = 0; step < spec.n_t; ++step) {
    const double t = static_cast<double>(step) * spec.timestep;
    const double w2 = s2 + 2.0 * spec.viscosity * t;
    const double amp = std::sqrt(s2 / w2);
    const int images = 2 + static_cast<int>(std::ceil(8.0 * std::sqrt(w2)));
    for (std::size_t i = 0; i < n; ++i) {
      double x = static_cast<double>(i) / static_cast<double>(n) - spec.pulse_center - mu * t;
      x -= std::round(x);
      double v = 0.0;
      for (int k = -images; k <= images; ++k) {
        const double y = x - k;
        v += std::exp(-y * y / (2.0 * w2));
      }
      out[step * n + i] = amp * v;
    }
  }
  return out;
}

SnapshotEnsemble advection_diffusion(const ToyProblemSpec& spec) {
  if (spec.kind != ToyKind::kAdvectionDiffusion) throw ConfigError("advection_diffusion: spec kind mismatch");
  return sweep(spec, [&](double mu) { return to_field(spec, advection_diffusion_solve(spec, mu)); });
}

double pitch_stiffness(double a) { return 2.57 * (a + 500.0 * a * a * a); }
double heave_stiffness(double h) { return 0.09 * (h + 2860.0 * h * h * h); }

std::array<double, 4> limit_cycle_rk4_step(const ToyProblemSpec& spec, double mu, const std::array<double, 4>& s,
                                           double dt) {
  auto rhs = [&](const std::array<double, 4>& y) {
    const double r = y[0] / spec.pitch_ref;
    return std::array<double, 4>{
        y[1], mu * (1.0 - r * r) * y[1] - pitch_stiffness(y[0]), y[3],
        -spec.heave_damping * y[3] - heave_stiffness(y[2]) - spec.coupling * y[0]};
  };
  auto axpy = [](const std::array<double, 4>& y, double a, const std::array<double, 4>& k) {
    return std::array<double, 4>{y[0] + a * k[0], y[1] + a * k[1], y[2] + a * k[2], y[3] + a * k[3]};
  };
  const auto k1 = rhs(s);
  const auto k2 = rhs(axpy(s, 0.5 * dt, k1));
  const auto k3 = rhs(axpy(s, 0.5 * dt, k2));
  const auto k4 = rhs(axpy(s, dt, k3));
  std::array<double, 4> out;
  for (int i = 0; i < 4; ++i) out[i] = s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return out;
}

std::vector<std::array<double, 4>> limit_cycle_trajectory(const ToyProblemSpec& spec, double mu, double rk_step) {
  const long per_output = std::max(1L, std::lround(spec.timestep / rk_step));
  const double dt = spec.timestep / static_cast<double>(per_output);
  const long transient_steps = std::lround(spec.transient / dt);
  std::array<double, 4> s{spec.initial_pitch, 0.0, 0.0, 0.0};
  auto check = [&](long step) {
    for (double v : s) {
      if (!std::isfinite(v) || std::abs(v) > 1e3) {
        std::ostringstream os;
        os << "divergent trajectory at damping " << mu << " after " << step << " steps";
        throw NumericalError(os.str());
      }
    }
  };
  for (long i = 0; i < transient_steps; ++i) {
    s = limit_cycle_rk4_step(spec, mu, s, dt);
    if (i % 1000 == 0) check(i);
  }
  check(transient_steps);
  std::vector<std::array<double, 4>> out{s};
  for (std::size_t n = 1; n < spec.n_t; ++n) {
    for (long i = 0; i < per_output; ++i) s = limit_cycle_rk4_step(spec, mu, s, dt);
    check(transient_steps + static_cast<long>(n) * per_output);
    out.push_back(s);
  }
  return out;
}

std::vector<std::array<double, 2>> broadcast_map(const ToyProblemSpec& spec) {
  std::mt19937_64 rng(spec.map_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::array<double, 2>> w(spec.n_dof);
  for (auto& row : w) {
    row[0] = normal(rng);
    row[1] = normal(rng);
  }
  return w;
}

SnapshotEnsemble cubic_limit_cycle(const ToyProblemSpec& spec) {
  if (spec.kind != ToyKind::kCubicLimitCycle) throw ConfigError("cubic_limit_cycle: spec kind mismatch");
  const auto map = broadcast_map(spec);
  return sweep(spec, [&](double mu) {
    const auto traj = limit_cycle_trajectory(spec, mu, spec.rk_step);
    FieldVariable f(spec.variable, spec.n_t, spec.n_dof);
    for (std::size_t n = 0; n < spec.n_t; ++n) {
      for (std::size_t d = 0; d < spec.n_dof; ++d) {
        f.at(n, d) = static_cast<float>(map[d][0] * traj[n][0] + map[d][1] * traj[n][2]);
      }
    }
    return f;
  });
}

}  // namespace lshrom
