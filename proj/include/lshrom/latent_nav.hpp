#pragma once

// Online stage: latent extraction as encoder means, the parametric ratio,
// group-wise slerp, and decoding at an unseen parameter value.

#include <span>
#include <string>
#include <vector>

#include "lshrom/snapshot_store.hpp"
#include "lshrom/trainer.hpp"

namespace lshrom {

struct LatentCode {
  std::vector<std::vector<double>> groups;
  double parameter_value = 0.0;
};

/// Encoder means of every group for a sampled parameter (eps = 0).
LatentCode extract_latent(TrainedModel& model, const SnapshotEnsemble& ensemble, const std::string& variable,
                          double parameter_value);

/// Cached encoder means stored in the model at training time.
LatentCode cached_latent(const TrainedModel& model, double parameter_value);

/// k with p_tgt = k p_1 + (1 - k) p_2. Throws ExtrapolationError outside [p_1, p_2].
double interpolation_ratio(double p_tgt, double p_1, double p_2);

/// Spherical linear interpolation, t = 0 -> z_a, t = 1 -> z_b. Falls back to
/// linear interpolation when the angle is below 1e-6.
std::vector<double> slerp(std::span<const double> z_a, std::span<const double> z_b, double t);

/// Group-wise slerp of two codes with the same t.
LatentCode slerp(const LatentCode& a, const LatentCode& b, double t);

/// Decodes a latent code and maps it back to physical units.
FieldVariable decode_latent(TrainedModel& model, const LatentCode& code);

struct Interpolation {
  FieldVariable field;
  double p_1 = 0.0, p_2 = 0.0, k = 1.0;
  bool on_sample = false;
};

/// Full online procedure at p_tgt: neighbours p_1 < p_tgt < p_2, ratio k,
/// slerp with t = 1 - k on every group, decode, denormalize. With an ensemble
/// the neighbour codes are re-extracted; without one the cached codes are used.
Interpolation interpolate_parametric(TrainedModel& model, const SnapshotEnsemble* ensemble,
                                     const std::string& variable, double p_tgt);

}  // namespace lshrom
