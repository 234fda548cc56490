#pragma once

// Desk-scale full-order generators with analytic or converged numerical
// ground truth: a traveling wave, periodic advection-diffusion, and a cubic
// stiffness two-DOF oscillator settling onto a limit cycle.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "lshrom/snapshot_store.hpp"

namespace lshrom {

enum class ToyKind { kTravelingWave, kAdvectionDiffusion, kCubicLimitCycle };

std::string to_string(ToyKind kind);
ToyKind parse_toy_kind(const std::string& s);

struct ToyProblemSpec {
  ToyKind kind = ToyKind::kTravelingWave;
  std::vector<double> parameters{0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3};
  std::size_t n_t = 200;
  std::size_t n_dof = 512;
  double timestep = 0.005;
  std::string variable = "u";

  // traveling wave: sin(2 pi xi) + harmonic * sin(4 pi xi), xi = x - mu t
  double harmonic = 0.3;

  // advection-diffusion: u_t + mu u_x = viscosity u_xx, Gaussian pulse
  double viscosity = 0.05;
  double pulse_center = 0.5;
  double pulse_width = 0.05;
  /// Explicit substeps per output step; 0 picks the smallest count with
  /// c + 2d <= 0.9 (c Courant number, d diffusion number).
  int substeps = 0;

  // cubic limit cycle: the parameter is the negative-damping coefficient
  double pitch_ref = 0.05;
  double heave_damping = 0.5;
  double coupling = 0.5;
  double initial_pitch = 0.01;
  double transient = 200.0;
  double rk_step = 1e-3;
  std::uint64_t map_seed = 7;

  void validate() const;
};

void to_json(nlohmann::json& j, const ToyProblemSpec& spec);
void from_json(const nlohmann::json& j, ToyProblemSpec& spec);
/// Keys accepted by from_json.
const std::vector<std::string>& toy_spec_keys();

/// Dispatches on spec.kind. Manifest metadata records the spec and the wall
/// time spent per parameter.
SnapshotEnsemble generate(const ToyProblemSpec& spec);

SnapshotEnsemble traveling_wave(const ToyProblemSpec& spec);
/// Closed-form field at any mu.
FieldVariable traveling_wave_exact(const ToyProblemSpec& spec, double mu);

SnapshotEnsemble advection_diffusion(const ToyProblemSpec& spec);
/// Explicit upwind/central solution at one mu, in double precision, (n_t, n_dof).
std::vector<double> advection_diffusion_solve(const ToyProblemSpec& spec, double mu);
/// Exact advected and diffused periodic Gaussian (sum of images).
std::vector<double> advection_diffusion_exact(const ToyProblemSpec& spec, double mu);
/// Substeps per output step chosen for mu (spec.substeps or the automatic rule).
int advection_diffusion_substeps(const ToyProblemSpec& spec, double mu);

SnapshotEnsemble cubic_limit_cycle(const ToyProblemSpec& spec);
double pitch_stiffness(double alpha);  // 2.57 (alpha + 500 alpha^3)
double heave_stiffness(double h);      // 0.09 (h + 2860 h^3)
/// State (alpha, alpha', h, h') after the transient, sampled at every output step.
std::vector<std::array<double, 4>> limit_cycle_trajectory(const ToyProblemSpec& spec, double mu,
                                                          double rk_step);
/// One classical fourth-order step of the oscillator.
std::array<double, 4> limit_cycle_rk4_step(const ToyProblemSpec& spec, double mu, const std::array<double, 4>& s,
                                           double dt);
/// Fixed 2 -> n_dof broadcast weights (row d: weight of alpha, weight of h).
std::vector<std::array<double, 2>> broadcast_map(const ToyProblemSpec& spec);

}  // namespace lshrom
