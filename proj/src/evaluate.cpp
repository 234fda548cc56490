#include "lshrom/evaluate.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "lshrom/error.hpp"

namespace lshrom {

FieldError field_error(const FieldVariable& rom, const FieldVariable& truth) {
  if (rom.n_t != truth.n_t || rom.n_dof != truth.n_dof || rom.values.size() != truth.values.size()) {
    throw ConfigError("field_error: shape mismatch");
  }
  FieldError e;
  e.discrepancy = FieldVariable(truth.name, truth.n_t, truth.n_dof);
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < truth.n_t; ++t) {
    double step_num = 0.0, step_den = 0.0;
    for (std::size_t d = 0; d < truth.n_dof; ++d) {
      const double r = rom.at(t, d), v = truth.at(t, d);
      const double diff = r - v;
      e.discrepancy.at(t, d) = static_cast<float>(diff);
      e.max_abs = std::max(e.max_abs, std::abs(diff));
      step_num += diff * diff;
      step_den += v * v;
    }
    e.rel_l2_per_step.push_back(step_den > 0.0 ? std::sqrt(step_num / step_den)
                                               : std::numeric_limits<double>::quiet_NaN());
    num += step_num;
    den += step_den;
  }
  if (den > 0.0) e.rel_l2 = std::sqrt(num / den);
  return e;
}

void to_json(nlohmann::json& j, const TimingLedger& t) {
  j = nlohmann::json{{"offline_fom_hours", t.offline_fom_hours},
                     {"offline_training_hours", t.offline_training_hours},
                     {"online_hours", t.online_hours},
                     {"n_fom_samples", t.n_fom_samples},
                     {"per_query_fom_hours", t.per_query_fom_hours},
                     {"speedup", t.speedup},
                     {"cost_crossover_queries", cost_crossover(t)}};
}

TimingLedger timing_report(double offline_fom_hours, std::size_t n_fom_samples, double training_hours,
                           double online_hours) {
  if (!(online_hours > 0.0)) throw ConfigError("timing_report: online time must be positive");
  if (!(offline_fom_hours > 0.0) || n_fom_samples == 0 || !(training_hours >= 0.0)) {
    throw ConfigError("timing_report: offline inputs must be positive");
  }
  TimingLedger t;
  t.offline_fom_hours = offline_fom_hours;
  t.offline_training_hours = training_hours;
  t.online_hours = online_hours;
  t.n_fom_samples = n_fom_samples;
  t.per_query_fom_hours = offline_fom_hours / static_cast<double>(n_fom_samples);
  t.speedup = t.per_query_fom_hours / online_hours;
  return t;
}

double cost_crossover(const TimingLedger& t) {
  const double margin = t.per_query_fom_hours - t.online_hours;
  if (!(margin > 0.0)) return std::numeric_limits<double>::infinity();
  return t.offline_total_hours() / margin;
}

MethodEvaluation evaluate_method(const std::string& method, double parameter, const FieldVariable& rom,
                                 const FieldVariable& truth) {
  FieldError e = field_error(rom, truth);
  MethodEvaluation m;
  m.method = method;
  m.variable = truth.name;
  m.parameter = parameter;
  m.rel_l2 = e.rel_l2;
  m.max_abs = e.max_abs;
  m.rel_l2_per_step = std::move(e.rel_l2_per_step);
  m.discrepancy = std::move(e.discrepancy);
  return m;
}

void to_json(nlohmann::json& j, const RomReport& r) {
  j = nlohmann::json::object();
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : r.rows) {
    nlohmann::json row{{"method", m.method},
                       {"variable", m.variable},
                       {"parameter", m.parameter},
                       {"max_abs", m.max_abs},
                       {"provenance", m.provenance}};
    row["rel_l2"] = m.rel_l2 ? nlohmann::json(*m.rel_l2) : nlohmann::json(nullptr);
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  if (r.timing) j["timing"] = *r.timing;
  if (!r.extra.empty()) j["extra"] = r.extra;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os.precision(10);
  return os;
}

}  // namespace

void write_report(const RomReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  {
    auto os = open_out(dir / "report.json");
    os << nlohmann::json(report).dump(2) << "\n";
  }
  {
    auto os = open_out(dir / "errors.csv");
    os << "method,variable,parameter,rel_l2,max_abs\n";
    for (const auto& m : report.rows) {
      os << m.method << "," << m.variable << "," << m.parameter << ",";
      if (m.rel_l2) os << *m.rel_l2;
      os << "," << m.max_abs << "\n";
    }
  }
  {
    auto os = open_out(dir / "per_step.csv");
    os << "method,variable,parameter,step,rel_l2\n";
    for (const auto& m : report.rows) {
      for (std::size_t t = 0; t < m.rel_l2_per_step.size(); ++t) {
        os << m.method << "," << m.variable << "," << m.parameter << "," << t << "," << m.rel_l2_per_step[t]
           << "\n";
      }
    }
  }
}

}  // namespace lshrom
