#include "lshrom/snapshot_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "lshrom/error.hpp"

namespace lshrom {
namespace fs = std::filesystem;

namespace {

std::string payload_name(std::size_t index, const std::string& variable) {
  return std::to_string(index) + "_" + variable + ".f32";
}

}  // namespace

FieldVariable::FieldVariable(std::string name_, std::size_t n_t_, std::size_t n_dof_)
    : name(std::move(name_)), n_t(n_t_), n_dof(n_dof_), values(n_t_ * n_dof_, 0.0f) {}

FieldVariable::FieldVariable(std::string name_, std::size_t n_t_, std::size_t n_dof_,
                             std::vector<float> values_)
    : name(std::move(name_)), n_t(n_t_), n_dof(n_dof_), values(std::move(values_)) {}

void FieldVariable::validate() const {
  if (n_t < 2) throw ConfigError("variable '" + name + "': needs at least 2 time steps");
  if (n_dof < 1) throw ConfigError("variable '" + name + "': needs at least 1 DOF");
  if (values.size() != n_t * n_dof) {
    throw ConfigError("variable '" + name + "': value count does not match (n_t, n_dof)");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream os;
      os << "variable '" << name << "': non-finite value at t=" << i / n_dof << ", dof=" << i % n_dof;
      throw ConfigError(os.str());
    }
  }
}

std::size_t SnapshotEnsemble::n_t() const {
  return fields.empty() || fields.front().empty() ? 0 : fields.front().begin()->second.n_t;
}

std::size_t SnapshotEnsemble::n_dof() const {
  return fields.empty() || fields.front().empty() ? 0 : fields.front().begin()->second.n_dof;
}

bool SnapshotEnsemble::has_variable(const std::string& name) const {
  return std::find(variable_names.begin(), variable_names.end(), name) != variable_names.end();
}

const FieldVariable& SnapshotEnsemble::field(std::size_t parameter_index,
                                             const std::string& variable) const {
  if (parameter_index >= fields.size()) throw ConfigError("parameter index out of range");
  auto it = fields[parameter_index].find(variable);
  if (it == fields[parameter_index].end()) {
    throw ConfigError("unknown variable '" + variable + "'");
  }
  return it->second;
}

std::optional<std::size_t> SnapshotEnsemble::index_of(double p) const {
  for (std::size_t i = 0; i < parameter_values.size(); ++i) {
    const double v = parameter_values[i];
    if (std::abs(v - p) <= 1e-12 * std::max({1.0, std::abs(v), std::abs(p)})) return i;
  }
  return std::nullopt;
}

void SnapshotEnsemble::validate() const {
  if (!(timestep > 0.0) || !std::isfinite(timestep)) throw ConfigError("timestep must be positive");
  if (parameter_values.empty()) throw ConfigError("ensemble has no parameter samples");
  for (std::size_t i = 1; i < parameter_values.size(); ++i) {
    if (!(parameter_values[i] > parameter_values[i - 1])) {
      throw ConfigError("parameter_values must be strictly increasing");
    }
  }
  if (fields.size() != parameter_values.size()) {
    throw ConfigError("field count does not match parameter count");
  }
  if (variable_names.empty()) throw ConfigError("ensemble has no variables");
  const std::size_t nt = n_t(), nd = n_dof();
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].size() != variable_names.size()) {
      throw ConfigError("variable set mismatch at parameter index " + std::to_string(i));
    }
    for (const auto& name : variable_names) {
      auto it = fields[i].find(name);
      if (it == fields[i].end()) {
        throw ConfigError("variable set mismatch: parameter index " + std::to_string(i) +
                          " lacks variable '" + name + "'");
      }
      const FieldVariable& f = it->second;
      if (f.n_t != nt || f.n_dof != nd) {
        throw ConfigError("shape mismatch: variable '" + name + "' at parameter index " +
                          std::to_string(i));
      }
      try {
        f.validate();
      } catch (const ConfigError& e) {
        throw ConfigError(std::string(e.what()) + " (parameter index " + std::to_string(i) + ")");
      }
    }
  }
}

void to_json(nlohmann::json& j, const NormalizationMap& map) {
  j = nlohmann::json{{"scale", map.scale},
                     {"offset", map.offset},
                     {"target_half_range", map.target_half_range}};
}

void from_json(const nlohmann::json& j, NormalizationMap& map) {
  j.at("scale").get_to(map.scale);
  j.at("offset").get_to(map.offset);
  map.target_half_range = j.value("target_half_range", 0.7);
  if (map.scale.size() != map.offset.size()) throw FormatError("normalization map: size mismatch");
}

void write_f32_le(std::ostream& os, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(float)));
  } else {
    for (float v : values) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                            static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
      os.write(reinterpret_cast<const char*>(b), 4);
    }
  }
}

void read_f32_le(std::istream& is, std::span<float> values) {
  is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!is) throw FormatError("truncated float32 payload");
  if constexpr (std::endian::native != std::endian::little) {
    for (float& v : values) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
      v = std::bit_cast<float>(bits);
    }
  }
}

SnapshotEnsemble load_ensemble(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError("missing manifest: " + manifest_path.string());
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }

  SnapshotEnsemble ens;
  std::size_t nt = 0, nd = 0;
  try {
    ens.parameter_name = m.at("parameter_name").get<std::string>();
    ens.parameter_values = m.at("parameter_values").get<std::vector<double>>();
    ens.timestep = m.at("timestep").get<double>();
    ens.variable_names = m.at("variables").get<std::vector<std::string>>();
    nt = m.at("n_t").get<std::size_t>();
    nd = m.at("n_dof").get<std::size_t>();
    if (m.value("dtype", std::string("float32")) != "float32") throw FormatError("unsupported dtype");
    if (m.value("endianness", std::string("little")) != "little") throw FormatError("unsupported endianness");
    if (m.contains("metadata")) ens.metadata = m.at("metadata");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + manifest_path.string() + ": " + e.what());
  }

  ens.fields.resize(ens.parameter_values.size());
  for (std::size_t i = 0; i < ens.parameter_values.size(); ++i) {
    for (const auto& var : ens.variable_names) {
      const fs::path file = dir / payload_name(i, var);
      if (!fs::exists(file)) {
        throw ConfigError("variable set mismatch: parameter index " + std::to_string(i) +
                          " lacks variable '" + var + "'");
      }
      const auto bytes = fs::file_size(file);
      if (bytes != nt * nd * sizeof(float)) {
        throw ConfigError("shape mismatch: " + file.string() + " holds " + std::to_string(bytes) +
                          " bytes, expected (" + std::to_string(nt) + ", " + std::to_string(nd) + ")");
      }
      FieldVariable f(var, nt, nd);
      std::ifstream bin(file, std::ios::binary);
      read_f32_le(bin, f.values);
      ens.fields[i].emplace(var, std::move(f));
    }
  }
  ens.validate();
  return ens;
}

void save_ensemble(const SnapshotEnsemble& ens, const fs::path& dir) {
  ens.validate();
  fs::create_directories(dir);
  nlohmann::json m;
  m["parameter_name"] = ens.parameter_name;
  m["parameter_values"] = ens.parameter_values;
  m["timestep"] = ens.timestep;
  m["variables"] = ens.variable_names;
  m["n_t"] = ens.n_t();
  m["n_dof"] = ens.n_dof();
  m["dtype"] = "float32";
  m["endianness"] = "little";
  if (!ens.metadata.empty()) m["metadata"] = ens.metadata;
  {
    std::ofstream out(dir / "manifest.json");
    out << m.dump(2) << '\n';
    if (!out) throw FormatError("cannot write manifest in " + dir.string());
  }
  for (std::size_t i = 0; i < ens.size(); ++i) {
    for (const auto& var : ens.variable_names) {
      std::ofstream bin(dir / payload_name(i, var), std::ios::binary);
      write_f32_le(bin, ens.field(i, var).values);
      if (!bin) throw FormatError("cannot write payload in " + dir.string());
    }
  }
}

NormalizationMap fit_normalization(const SnapshotEnsemble& ens, const std::string& variable,
                                   double target) {
  if (!ens.has_variable(variable)) throw ConfigError("unknown variable '" + variable + "'");
  const std::size_t nd = ens.n_dof();
  std::vector<double> lo(nd, std::numeric_limits<double>::infinity());
  std::vector<double> hi(nd, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const FieldVariable& f = ens.field(i, variable);
    for (std::size_t t = 0; t < f.n_t; ++t) {
      for (std::size_t d = 0; d < nd; ++d) {
        const double v = f.at(t, d);
        lo[d] = std::min(lo[d], v);
        hi[d] = std::max(hi[d], v);
      }
    }
  }
  NormalizationMap map;
  map.target_half_range = target;
  map.scale.resize(nd);
  map.offset.resize(nd);
  for (std::size_t d = 0; d < nd; ++d) {
    if (hi[d] > lo[d]) {
      map.offset[d] = 0.5 * (hi[d] + lo[d]);
      map.scale[d] = (hi[d] - lo[d]) / (2.0 * target);
    } else {
      map.offset[d] = lo[d];
      map.scale[d] = 1.0;
    }
  }
  return map;
}

FieldVariable normalize(const FieldVariable& field, const NormalizationMap& map) {
  if (field.n_dof != map.size()) throw ConfigError("normalize: DOF count does not match the map");
  FieldVariable out(field.name, field.n_t, field.n_dof);
  for (std::size_t t = 0; t < field.n_t; ++t) {
    for (std::size_t d = 0; d < field.n_dof; ++d) {
      out.at(t, d) = static_cast<float>((static_cast<double>(field.at(t, d)) - map.offset[d]) / map.scale[d]);
    }
  }
  return out;
}

FieldVariable denormalize(const FieldVariable& field, const NormalizationMap& map) {
  if (field.n_dof != map.size()) throw ConfigError("denormalize: DOF count does not match the map");
  FieldVariable out(field.name, field.n_t, field.n_dof);
  for (std::size_t t = 0; t < field.n_t; ++t) {
    for (std::size_t d = 0; d < field.n_dof; ++d) {
      out.at(t, d) = static_cast<float>(static_cast<double>(field.at(t, d)) * map.scale[d] + map.offset[d]);
    }
  }
  return out;
}

}  // namespace lshrom
