#include <cstring>
#include <fstream>

#include "lshrom/error.hpp"
#include "lshrom/trainer.hpp"

namespace lshrom {
namespace {

constexpr char kMagic[8] = {'L', 'S', 'H', 'R', 'O', 'M', 'C', 'K'};

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_le(std::istream& is, int bytes) {
  unsigned char b[8] = {};
  is.read(reinterpret_cast<char*>(b), bytes);
  if (!is) throw FormatError("checkpoint: truncated header");
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

void save_checkpoint(const TrainedModel& m, const std::filesystem::path& path) {
  if (!m.net) throw std::invalid_argument("save_checkpoint: model has no network");
  nlohmann::json h;
  h["kind"] = to_string(m.kind);
  h["arch"] = m.arch;
  h["n_t"] = m.n_t;
  h["n_dof"] = m.n_dof;
  h["variable"] = m.variable;
  h["parameter_name"] = m.parameter_name;
  h["parameter_values"] = m.parameter_values;
  h["timestep"] = m.timestep;
  h["normalization"] = nlohmann::json{{m.variable, m.norm}};
  h["loss"] = m.loss;
  h["train"] = m.train;
  h["augment"] = m.augment;
  h["training_log"] = m.training_log;
  h["training_seconds"] = m.training_seconds;
  h["bn_momentum"] = m.net->bn_momentum();
  h["optimizer_step"] = m.optimizer.step;
  h["rng"] = {{"augment", m.rng_augment}, {"noise", m.rng_noise}, {"shuffle", m.rng_shuffle}};
  h["cached_latents"] = m.cached_latents;

  nlohmann::json arrays = nlohmann::json::array();
  std::vector<const std::vector<float>*> payload;
  std::uint64_t offset = 0;
  auto add = [&](const std::string& name, const std::string& role, const nn::Shape& shape,
                 const std::vector<float>& v) {
    arrays.push_back({{"name", name}, {"role", role}, {"shape", shape}, {"offset", offset}, {"count", v.size()}});
    payload.push_back(&v);
    offset += v.size();
  };
  std::size_t k = 0;
  for (const auto& p : m.net->params()) {
    add(p.name, p.trainable ? "param" : "buffer", p.shape, p.value);
    if (p.trainable && k < m.optimizer.m.size()) {
      add(p.name, "adamax_m", p.shape, m.optimizer.m[k]);
      add(p.name, "adamax_u", p.shape, m.optimizer.u[k]);
    }
    if (p.trainable) ++k;
  }
  h["arrays"] = arrays;

  const std::string header = h.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  write_u32(out, kCheckpointVersion);
  write_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto* v : payload) write_f32_le(out, *v);
  if (!out) throw FormatError("failed writing checkpoint " + path.string());
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw FormatError("not a checkpoint: " + path.string());
  const auto version = static_cast<std::uint32_t>(read_le(in, 4));
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t len = read_le(in, 8);
  if (len > (1ull << 31)) throw FormatError("checkpoint: corrupt header length");
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("checkpoint: truncated header");

  TrainedModel m;
  nlohmann::json arrays;
  try {
    const auto h = nlohmann::json::parse(header);
    m.kind = parse_net_kind(h.at("kind").get<std::string>());
    m.arch = h.at("arch").get<ArchitectureConfig>();
    m.n_t = h.at("n_t").get<std::size_t>();
    m.n_dof = h.at("n_dof").get<std::size_t>();
    m.variable = h.at("variable").get<std::string>();
    m.parameter_name = h.at("parameter_name").get<std::string>();
    m.parameter_values = h.at("parameter_values").get<std::vector<double>>();
    m.timestep = h.at("timestep").get<double>();
    m.norm = h.at("normalization").at(m.variable).get<NormalizationMap>();
    m.loss = h.at("loss").get<LossConfig>();
    m.train = h.at("train").get<TrainConfig>();
    m.augment = h.at("augment").get<AugmentConfig>();
    m.training_log = h.at("training_log").get<std::vector<LossBreakdown>>();
    m.training_seconds = h.at("training_seconds").get<double>();
    m.optimizer.step = h.at("optimizer_step").get<std::int64_t>();
    m.rng_augment = h.at("rng").at("augment").get<std::string>();
    m.rng_noise = h.at("rng").at("noise").get<std::string>();
    m.rng_shuffle = h.at("rng").at("shuffle").get<std::string>();
    m.cached_latents = h.at("cached_latents").get<std::vector<std::vector<std::vector<float>>>>();
    arrays = h.at("arrays");
    m.net = std::make_shared<Network<float>>(m.kind, m.arch, m.n_t, m.n_dof, 0);
    m.net->set_bn_momentum(h.at("bn_momentum").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: corrupt header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid configuration: ") + e.what());
  }

  std::vector<float> data;
  std::uint64_t total = 0;
  for (const auto& a : arrays) total += a.at("count").get<std::uint64_t>();
  data.resize(total);
  read_f32_le(in, data);

  auto& params = m.net->params();
  bool has_opt = false;
  for (const auto& a : arrays) {
    const std::string name = a.at("name").get<std::string>();
    const std::string role = a.at("role").get<std::string>();
    const auto shape = a.at("shape").get<nn::Shape>();
    const auto off = a.at("offset").get<std::uint64_t>();
    const auto count = a.at("count").get<std::uint64_t>();
    if (!params.contains(name)) throw FormatError("checkpoint: unknown array " + name);
    const auto& p = params.get(name);
    if (p.shape != shape || count != p.value.size() || off + count > total) {
      throw FormatError("checkpoint: shape mismatch for " + name + " (stored " + nn::shape_string(shape) +
                        ", expected " + nn::shape_string(p.shape) + ")");
    }
    has_opt = has_opt || role == "adamax_m";
  }
  std::size_t k = 0;
  std::vector<std::size_t> trainable_index;
  for (auto& p : params) trainable_index.push_back(p.trainable ? k++ : SIZE_MAX);
  if (has_opt) {
    m.optimizer.m.assign(k, {});
    m.optimizer.u.assign(k, {});
  }
  for (const auto& a : arrays) {
    const std::string name = a.at("name").get<std::string>();
    const std::string role = a.at("role").get<std::string>();
    const auto off = a.at("offset").get<std::uint64_t>();
    const auto count = a.at("count").get<std::uint64_t>();
    const std::size_t idx = params.index_of(name);
    auto& p = params.at(idx);
    const auto first = data.begin() + static_cast<std::ptrdiff_t>(off);
    const auto last = first + static_cast<std::ptrdiff_t>(count);
    if (role == "param" || role == "buffer") {
      std::copy(first, last, p.value.begin());
    } else if (role == "adamax_m") {
      m.optimizer.m.at(trainable_index[idx]).assign(first, last);
    } else if (role == "adamax_u") {
      m.optimizer.u.at(trainable_index[idx]).assign(first, last);
    } else {
      throw FormatError("checkpoint: unknown array role " + role);
    }
  }
  return m;
}

TrainedModel load_checkpoint(const std::filesystem::path& path, const ArchitectureConfig& expected) {
  TrainedModel m = load_checkpoint(path);
  if (!(m.arch == expected)) {
    throw ConfigError("checkpoint architecture does not match the requested configuration");
  }
  return m;
}

}  // namespace lshrom
