#pragma once

// Training-set augmentation: playback-speed resampling to build the static
// set, and per-epoch random amplitude/offset perturbation.

#include <cstdint>
#include <random>
#include <vector>

#include "json.hpp"
#include "lshrom/snapshot_store.hpp"

namespace lshrom {

struct AugmentConfig {
  std::vector<double> resample_factors{0.8, 0.9, 1.1, 1.2, 1.3};
  double amplitude_gain = 0.3;
  double offset_gain = 0.3;
  std::uint64_t rng_seed = 0;

  std::size_t n_resample() const { return resample_factors.size(); }
  void validate() const;
};

void to_json(nlohmann::json& j, const AugmentConfig& cfg);
void from_json(const nlohmann::json& j, AugmentConfig& cfg);

/// Re-reads the series at `factor` times the playback speed. Sample n of the
/// output is the input at fractional index n * factor, linearly interpolated and
/// wrapped cyclically past the last sample.
FieldVariable resample(const FieldVariable& series, double factor);

/// [x, R_1(x), ..., R_NA(x)] for one normalized series.
DatasetTensor build_training_set(const FieldVariable& x, const AugmentConfig& cfg,
                                 double parameter_value = 0.0);

/// Concatenates the per-parameter training sets of every field in order.
DatasetTensor build_training_set(const std::vector<FieldVariable>& xs,
                                 const std::vector<double>& parameter_values,
                                 const AugmentConfig& cfg);

/// Standard normal truncated to [-1, 1] by rejection.
double truncated_normal(std::mt19937_64& rng);

/// Per-entry draws used by epoch_perturb, exposed for inspection.
struct PerturbDraw {
  double amplitude = 0.0;  // a
  double offset = 0.0;     // b
};

/// x' = (1 + amplitude_gain * a) x + offset_gain * b, one (a, b) per batch entry.
DatasetTensor epoch_perturb(const DatasetTensor& x_train, std::mt19937_64& rng,
                            const AugmentConfig& cfg, std::vector<PerturbDraw>* draws = nullptr);

}  // namespace lshrom
