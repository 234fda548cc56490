#include <cmath>
#include <numbers>
#include <numeric>

#include "doctest.h"
#include "lshrom/error.hpp"
#include "lshrom/toy_fom.hpp"

using namespace lshrom;

namespace {

ToyProblemSpec ad_spec(std::size_t n_dof, double mu_visc, double timestep, std::size_t n_t) {
  ToyProblemSpec s;
  s.kind = ToyKind::kAdvectionDiffusion;
  s.n_dof = n_dof;
  s.viscosity = mu_visc;
  s.timestep = timestep;
  s.n_t = n_t;
  return s;
}

double l2_last_step(const std::vector<double>& a, const std::vector<double>& b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = a.size() - n; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(n));
}

ToyProblemSpec lco_spec() {
  ToyProblemSpec s;
  s.kind = ToyKind::kCubicLimitCycle;
  s.n_dof = 4;
  return s;
}

/// Upward zero crossings of alpha, linearly interpolated in time.
std::vector<double> upward_crossings(const std::vector<std::array<double, 4>>& traj, double dt) {
  std::vector<double> t;
  for (std::size_t i = 1; i < traj.size(); ++i) {
    const double a = traj[i - 1][0], b = traj[i][0];
    if (a < 0.0 && b >= 0.0) t.push_back(dt * (static_cast<double>(i - 1) + a / (a - b)));
  }
  return t;
}

std::array<double, 4> state_at(const std::vector<std::array<double, 4>>& traj, double dt, double t) {
  const double f = t / dt;
  const auto i = static_cast<std::size_t>(f);
  const double w = f - static_cast<double>(i);
  std::array<double, 4> s;
  for (int k = 0; k < 4; ++k) s[k] = (1 - w) * traj[i][k] + w * traj[i + 1][k];
  return s;
}

}  // namespace

TEST_CASE("traveling wave: closed form, stationary at mu = 0, bounded by 1.3") {
  ToyProblemSpec s;
  s.parameters = {0.0, 0.9, 1.0};
  s.n_t = 40;
  s.n_dof = 64;
  const auto ens = generate(s);
  REQUIRE(ens.size() == 3);
  const auto& still = ens.field(0, "u");
  for (std::size_t t = 1; t < s.n_t; ++t)
    for (std::size_t d = 0; d < s.n_dof; ++d) CHECK(still.at(t, d) == still.at(0, d));
  for (std::size_t p = 0; p < ens.size(); ++p)
    for (float v : ens.field(p, "u").values) CHECK(std::abs(v) <= 1.3f);
  const auto& f = ens.field(1, "u");
  for (std::size_t t = 0; t < s.n_t; t += 7) {
    for (std::size_t d = 0; d < s.n_dof; d += 5) {
      const double xi = static_cast<double>(d) / 64.0 - 0.9 * static_cast<double>(t) * s.timestep;
      const double u = std::sin(2 * std::numbers::pi * xi) + 0.3 * std::sin(4 * std::numbers::pi * xi);
      CHECK(f.at(t, d) == doctest::Approx(u).epsilon(1e-6));
    }
  }
  const auto exact = traveling_wave_exact(s, 0.95);
  CHECK(exact.n_t == s.n_t);
  CHECK(exact.n_dof == s.n_dof);
  CHECK(traveling_wave_exact(s, 0.9).values == f.values);
}

TEST_CASE("advection-diffusion conserves the total integral to 1e-10") {
  const auto s = ad_spec(128, 0.05, 0.01, 60);
  for (double mu : {0.7, 1.3, -0.5}) {
    const auto u = advection_diffusion_solve(s, mu);
    const double dx = 1.0 / 128.0;
    const double m0 = dx * std::accumulate(u.begin(), u.begin() + 128, 0.0);
    for (std::size_t t = 1; t < s.n_t; ++t) {
      const double m = dx * std::accumulate(u.begin() + t * 128, u.begin() + (t + 1) * 128, 0.0);
      CHECK(std::abs(m - m0) < 1e-10);
    }
  }
}

TEST_CASE("advection-diffusion with zero viscosity: one period returns the pulse, damped as the scheme predicts") {
  // mu = 1 on the unit domain: period 1 = 10 output steps of 0.1.
  const std::size_t n = 256;
  auto s = ad_spec(n, 0.0, 0.1, 11);
  const auto u = advection_diffusion_solve(s, 1.0);
  std::size_t peak0 = 0, peak1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (u[i] > u[peak0]) peak0 = i;
    if (u[10 * n + i] > u[10 * n + peak1]) peak1 = i;
  }
  CHECK(peak0 == peak1);
  // Modified equation of first-order upwind: diffusion mu dx (1 - c) / 2.
  const int m = advection_diffusion_substeps(s, 1.0);
  const double dx = 1.0 / n, c = 0.1 / m / dx;
  const double nu_num = dx * (1.0 - c) / 2.0;
  const double s2 = s.pulse_width * s.pulse_width;
  const double predicted = std::sqrt(s2 / (s2 + 2.0 * nu_num * 1.0));
  CHECK(u[10 * n + peak1] == doctest::Approx(predicted).epsilon(0.02));
  CHECK(u[10 * n + peak1] < 1.0);
}

TEST_CASE("advection-diffusion converges at first order under refinement") {
  // Fixed Courant number 0.8, zero viscosity so the upwind error dominates.
  std::vector<double> err;
  for (std::size_t n : {256u, 512u, 1024u}) {
    auto s = ad_spec(n, 0.0, 0.05, 5);
    s.pulse_width = 0.08;
    s.substeps = static_cast<int>(n / 16);
    const auto num = advection_diffusion_solve(s, 1.0);
    const auto ex = advection_diffusion_exact(s, 1.0);
    err.push_back(l2_last_step(num, ex, n));
  }
  const double r1 = err[0] / err[1], r2 = err[1] / err[2];
  INFO("errors " << err[0] << " " << err[1] << " " << err[2]);
  CHECK(r1 == doctest::Approx(2.0).epsilon(0.15));
  CHECK(r2 == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("advection-diffusion with viscosity approaches the exact diffused Gaussian") {
  std::vector<double> err;
  for (std::size_t n : {128u, 256u}) {
    auto s = ad_spec(n, 0.01, 0.05, 5);
    s.pulse_width = 0.08;
    const auto num = advection_diffusion_solve(s, 0.5);
    const auto ex = advection_diffusion_exact(s, 0.5);
    err.push_back(l2_last_step(num, ex, n));
  }
  CHECK(err[1] < err[0]);
  CHECK(err[1] < 0.02);
}

TEST_CASE("advection-diffusion CFL violation and automatic substeps") {
  auto s = ad_spec(512, 0.05, 0.005, 10);
  const int m = advection_diffusion_substeps(s, 1.0);
  const double dx = 1.0 / 512;
  const double c = 1.0 * 0.005 / m / dx, d = 0.05 * 0.005 / m / (dx * dx);
  CHECK(c + 2 * d <= 0.9);
  CHECK(m > 1);
  s.substeps = 1;
  CHECK_THROWS_WITH_AS(advection_diffusion_solve(s, 1.0), doctest::Contains("CFL"), ConfigError);
  s.substeps = m;
  CHECK_NOTHROW(advection_diffusion_solve(s, 1.0));
}

TEST_CASE("cubic stiffness laws") {
  CHECK(pitch_stiffness(0.1) == doctest::Approx(1.542).epsilon(1e-12));
  CHECK(pitch_stiffness(0.0) == 0.0);
  CHECK(pitch_stiffness(-0.1) == doctest::Approx(-1.542).epsilon(1e-12));
  CHECK(heave_stiffness(0.01) == doctest::Approx(0.09 * (0.01 + 2860e-6)).epsilon(1e-12));
}

TEST_CASE("limit cycle: zero initial condition stays at rest") {
  auto s = lco_spec();
  s.initial_pitch = 0.0;
  s.transient = 5.0;
  s.n_t = 50;
  for (const auto& st : limit_cycle_trajectory(s, 1.0, 1e-3))
    for (double v : st) CHECK(v == 0.0);
}

TEST_CASE("limit cycle: late-time trajectory is periodic") {
  auto s = lco_spec();
  s.timestep = 1e-3;
  s.rk_step = 1e-3;
  s.n_t = 20000;
  for (double mu : {0.7, 1.0, 1.3}) {
    const auto traj = limit_cycle_trajectory(s, mu, s.rk_step);
    const auto tc = upward_crossings(traj, s.timestep);
    REQUIRE(tc.size() >= 3);
    const double period = tc[1] - tc[0];
    CHECK(tc[2] - tc[1] == doctest::Approx(period).epsilon(1e-4));
    double worst = 0.0;
    for (double frac : {0.0, 0.2, 0.45, 0.7}) {
      const double t = tc[0] + frac * period;
      const auto a = state_at(traj, s.timestep, t), b = state_at(traj, s.timestep, t + period);
      double d = 0.0;
      for (int k = 0; k < 4; ++k) d += (a[k] - b[k]) * (a[k] - b[k]);
      worst = std::max(worst, std::sqrt(d));
    }
    INFO("mu " << mu << " period " << period);
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("limit cycle amplitude is reproducible under step halving") {
  auto s = lco_spec();
  s.timestep = 0.01;
  s.n_t = 1000;
  for (double mu : {0.7, 1.3}) {
    auto amplitude = [&](double step) {
      double a = 0.0;
      for (const auto& st : limit_cycle_trajectory(s, mu, step)) a = std::max(a, std::abs(st[0]));
      return a;
    };
    const double a1 = amplitude(1e-3), a2 = amplitude(5e-4);
    INFO("amplitudes " << a1 << " " << a2);
    CHECK(a1 > 0.0);
    CHECK(std::abs(a1 - a2) < 1e-4);
  }
}

TEST_CASE("limit cycle: excessive damping diverges with a numerical error") {
  auto s = lco_spec();
  s.transient = 50.0;
  CHECK_THROWS_AS(limit_cycle_trajectory(s, 5000.0, 1e-3), NumericalError);
  s.parameters = {5000.0};
  CHECK_THROWS_AS(generate(s), NumericalError);
}

TEST_CASE("limit-cycle field is the broadcast of (alpha, h)") {
  auto s = lco_spec();
  s.parameters = {1.0};
  s.n_t = 30;
  s.transient = 20.0;
  const auto ens = generate(s);
  const auto traj = limit_cycle_trajectory(s, 1.0, s.rk_step);
  const auto w = broadcast_map(s);
  const auto& f = ens.field(0, "u");
  for (std::size_t t = 0; t < s.n_t; ++t)
    for (std::size_t d = 0; d < s.n_dof; ++d)
      CHECK(f.at(t, d) == static_cast<float>(w[d][0] * traj[t][0] + w[d][1] * traj[t][2]));
  auto other = s;
  other.map_seed = 8;
  CHECK(broadcast_map(other)[0] != w[0]);
}

TEST_CASE("generators are deterministic, valid and record their spec") {
  for (ToyKind kind : {ToyKind::kTravelingWave, ToyKind::kAdvectionDiffusion, ToyKind::kCubicLimitCycle}) {
    ToyProblemSpec s;
    s.kind = kind;
    s.parameters = {0.8, 1.0};
    s.n_t = 20;
    s.n_dof = 16;
    s.transient = 10.0;
    const auto a = generate(s), b = generate(s);
    CHECK_NOTHROW(a.validate());
    for (std::size_t p = 0; p < 2; ++p) CHECK(a.field(p, "u").values == b.field(p, "u").values);
    CHECK(a.parameter_values == s.parameters);
    CHECK(a.timestep == s.timestep);
    REQUIRE(a.metadata.contains("generator"));
    const auto back = a.metadata["generator"].get<ToyProblemSpec>();
    CHECK(back.kind == kind);
    CHECK(back.parameters == s.parameters);
    CHECK(a.metadata["generation_seconds"].size() == 2);
  }
}

TEST_CASE("spec validation and parsing") {
  ToyProblemSpec s;
  s.parameters = {1.0, 0.9};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.parameters = {};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = ToyProblemSpec{};
  s.n_t = 1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK(parse_toy_kind(to_string(ToyKind::kAdvectionDiffusion)) == ToyKind::kAdvectionDiffusion);
  CHECK_THROWS_AS(parse_toy_kind("navier_stokes"), ConfigError);
  s = ToyProblemSpec{};
  s.kind = ToyKind::kAdvectionDiffusion;
  CHECK_THROWS_AS(traveling_wave(s), ConfigError);
}
