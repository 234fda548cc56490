#pragma once

// Accuracy metrics against ground truth, the offline/online cost ledger, and
// report emission (JSON, CSV, PNG).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lshrom/snapshot_store.hpp"

namespace lshrom {

struct FieldError {
  /// Absent when the truth has zero norm.
  std::optional<double> rel_l2;
  double max_abs = 0.0;
  /// rom - truth.
  FieldVariable discrepancy;
  /// Relative L2 error of each time step (absent entries for zero-norm steps are NaN).
  std::vector<double> rel_l2_per_step;
};

FieldError field_error(const FieldVariable& rom, const FieldVariable& truth);

struct TimingLedger {
  double offline_fom_hours = 0.0;
  double offline_training_hours = 0.0;
  double online_hours = 0.0;
  std::size_t n_fom_samples = 0;
  double per_query_fom_hours = 0.0;
  double speedup = 0.0;

  double offline_total_hours() const { return offline_fom_hours + offline_training_hours; }
};

void to_json(nlohmann::json& j, const TimingLedger& t);

TimingLedger timing_report(double offline_fom_hours, std::size_t n_fom_samples, double training_hours,
                           double online_hours);

/// Query count at which cumulative FOM cost (per_query * n) meets the ROM line
/// (offline_total + online * n). Infinity when the ROM is never cheaper.
double cost_crossover(const TimingLedger& t);

struct MethodEvaluation {
  std::string method;
  std::string variable;
  double parameter = 0.0;
  std::optional<double> rel_l2;
  double max_abs = 0.0;
  std::vector<double> rel_l2_per_step;
  FieldVariable discrepancy;
  /// Interpolation provenance (k, neighbours) when available.
  nlohmann::json provenance = nlohmann::json::object();
};

MethodEvaluation evaluate_method(const std::string& method, double parameter, const FieldVariable& rom,
                                 const FieldVariable& truth);

struct RomReport {
  std::vector<MethodEvaluation> rows;
  std::optional<TimingLedger> timing;
  nlohmann::json extra = nlohmann::json::object();
};

/// Report summary without the discrepancy arrays.
void to_json(nlohmann::json& j, const RomReport& r);

/// Writes report.json, errors.csv and per_step.csv into dir.
void write_report(const RomReport& report, const std::filesystem::path& dir);

struct Image {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> rgb;
};

/// Diverging map of a discrepancy field (time down, DOF across): white at zero,
/// red positive, blue negative, saturating at +-scale.
Image discrepancy_image(const FieldVariable& discrepancy, double scale);
void write_png(const Image& image, const std::filesystem::path& path);

/// Discrepancy heatmaps, error-vs-parameter curves and cost lines as PNG plus
/// the plotted series as CSV. Returns the files written.
std::vector<std::filesystem::path> emit_plots(const RomReport& report, const std::filesystem::path& dir);

}  // namespace lshrom
