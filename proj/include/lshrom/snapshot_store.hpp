#pragma once

// Snapshot data model: time-resolved field variables sampled over a parameter
// grid, the on-disk ensemble directory format, and the per-DOF range
// normalization used before training.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace lshrom {

/// One physical variable over time: values[t * n_dof + d], time-major.
struct FieldVariable {
  std::string name;
  std::size_t n_t = 0;
  std::size_t n_dof = 0;
  std::vector<float> values;

  FieldVariable() = default;
  FieldVariable(std::string name, std::size_t n_t, std::size_t n_dof);
  FieldVariable(std::string name, std::size_t n_t, std::size_t n_dof, std::vector<float> values);

  float& at(std::size_t t, std::size_t d) { return values[t * n_dof + d]; }
  float at(std::size_t t, std::size_t d) const { return values[t * n_dof + d]; }
  std::span<const float> row(std::size_t t) const { return {values.data() + t * n_dof, n_dof}; }

  /// Throws ConfigError when the shape or the contents violate the invariants.
  void validate() const;
};

struct SnapshotEnsemble {
  std::string parameter_name = "mu";
  std::vector<double> parameter_values;
  double timestep = 0.0;
  std::vector<std::string> variable_names;
  /// fields[i] holds every variable for parameter_values[i].
  std::vector<std::map<std::string, FieldVariable>> fields;
  /// Free-form manifest extras (generator spec, provenance notes, timings).
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t size() const { return parameter_values.size(); }
  std::size_t n_t() const;
  std::size_t n_dof() const;
  bool has_variable(const std::string& name) const;
  const FieldVariable& field(std::size_t parameter_index, const std::string& variable) const;
  /// Index of a sampled parameter value (exact match within 1e-12 relative).
  std::optional<std::size_t> index_of(double parameter_value) const;

  void validate() const;
};

/// Invertible affine map x = (v - offset) / scale per DOF.
struct NormalizationMap {
  std::vector<double> scale;
  std::vector<double> offset;
  double target_half_range = 0.7;

  std::size_t size() const { return scale.size(); }
};

void to_json(nlohmann::json& j, const NormalizationMap& map);
void from_json(const nlohmann::json& j, NormalizationMap& map);

/// Training tensor of shape (batch, n_t, n_dof).
struct DatasetTensor {
  struct Provenance {
    double parameter_value = 0.0;
    std::string tag;
  };

  std::size_t batch = 0;
  std::size_t n_t = 0;
  std::size_t n_dof = 0;
  std::vector<float> data;
  std::vector<Provenance> provenance;

  std::size_t entry_size() const { return n_t * n_dof; }
  std::span<float> entry(std::size_t i) { return {data.data() + i * entry_size(), entry_size()}; }
  std::span<const float> entry(std::size_t i) const {
    return {data.data() + i * entry_size(), entry_size()};
  }
};

/// Reads an ensemble directory (manifest.json + <index>_<variable>.f32).
SnapshotEnsemble load_ensemble(const std::filesystem::path& dir);

/// Writes an ensemble directory, creating it if needed.
void save_ensemble(const SnapshotEnsemble& ensemble, const std::filesystem::path& dir);

/// Per-DOF map sending the joint min/max over every parameter and time step to
/// -target/+target. Constant DOFs get scale 1 and offset equal to the constant.
NormalizationMap fit_normalization(const SnapshotEnsemble& ensemble, const std::string& variable,
                                   double target_half_range = 0.7);

FieldVariable normalize(const FieldVariable& field, const NormalizationMap& map);
FieldVariable denormalize(const FieldVariable& field, const NormalizationMap& map);

/// Little-endian float32 helpers used by every binary payload in the project.
void write_f32_le(std::ostream& os, std::span<const float> values);
void read_f32_le(std::istream& is, std::span<float> values);

}  // namespace lshrom
