#include "lshrom/hvae_net.hpp"

#include <cmath>

#include "lshrom/error.hpp"
#include "lshrom/nn/ops.hpp"

namespace lshrom {

std::string to_string(NetKind kind) {
  switch (kind) {
    case NetKind::kLshVae: return "lsh_vae";
    case NetKind::kCae: return "cae";
    case NetKind::kBetaVae: return "beta_vae";
  }
  return "unknown";
}

NetKind parse_net_kind(const std::string& s) {
  if (s == "lsh_vae") return NetKind::kLshVae;
  if (s == "cae") return NetKind::kCae;
  if (s == "beta_vae") return NetKind::kBetaVae;
  throw ConfigError("unknown network kind '" + s + "'");
}

void ArchitectureConfig::validate() const {
  if (n_blocks < 2) throw ConfigError("architecture.n_blocks must be at least 2");
  if (shared_latent_dim < 1 || interp_latent_dim < 1) throw ConfigError("latent dims must be positive");
  if (filters.size() != static_cast<std::size_t>(n_blocks)) {
    throw ConfigError("architecture.filters must list one entry per block");
  }
  for (int f : filters) {
    if (f < 1) throw ConfigError("architecture.filters entries must be positive");
  }
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("architecture.kernel_size must be odd");
  if (time_stride < 1) throw ConfigError("architecture.time_stride must be positive");
  if (pooling != "mean" && pooling != "flatten") {
    throw ConfigError("architecture.pooling must be \"mean\" or \"flatten\"");
  }
}

void to_json(nlohmann::json& j, const ArchitectureConfig& c) {
  j = nlohmann::json{{"n_blocks", c.n_blocks},       {"shared_latent_dim", c.shared_latent_dim},
                     {"interp_latent_dim", c.interp_latent_dim}, {"filters", c.filters},
                     {"kernel_size", c.kernel_size}, {"time_stride", c.time_stride},
                     {"pooling", c.pooling}};
}

void from_json(const nlohmann::json& j, ArchitectureConfig& c) {
  c.n_blocks = j.value("n_blocks", c.n_blocks);
  c.shared_latent_dim = j.value("shared_latent_dim", c.shared_latent_dim);
  c.interp_latent_dim = j.value("interp_latent_dim", c.interp_latent_dim);
  c.filters = j.value("filters", c.filters);
  c.kernel_size = j.value("kernel_size", c.kernel_size);
  c.time_stride = j.value("time_stride", c.time_stride);
  c.pooling = j.value("pooling", c.pooling);
}

std::vector<std::size_t> level_lengths(const ArchitectureConfig& arch, std::size_t n_t) {
  std::vector<std::size_t> t{n_t};
  const std::size_t s = static_cast<std::size_t>(arch.time_stride);
  for (int j = 0; j < arch.n_blocks; ++j) t.push_back((t.back() + s - 1) / s);
  return t;
}

std::vector<GroupStats> HierarchicalLatentState::group_stats() const {
  std::vector<GroupStats> out;
  for (std::size_t i = 0; i < mu_q.size(); ++i) {
    GroupStats s;
    s.mu_q = mu_q[i];
    s.logvar_q = i < logvar_q.size() ? logvar_q[i] : nn::Var{};
    if (i < mu_p.size()) {
      s.mu_p = mu_p[i];
      s.logvar_p = logvar_p[i];
    }
    out.push_back(s);
  }
  return out;
}

namespace {

std::string block(const char* side, int j, const char* part) {
  return std::string(side) + std::to_string(j) + "." + part;
}

}  // namespace

template <typename T>
Network<T>::Network(NetKind kind, ArchitectureConfig arch, std::size_t n_t, std::size_t n_dof,
                    std::uint64_t seed)
    : kind_(kind), arch_(std::move(arch)), n_t_(n_t), n_dof_(n_dof), init_rng_(seed) {
  arch_.validate();
  if (n_t < 2 || n_dof < 1) throw ConfigError("network: invalid snapshot shape");
  const int L = arch_.n_blocks;
  const std::size_t K = static_cast<std::size_t>(arch_.kernel_size);
  lengths_ = level_lengths(arch_, n_t);
  channels_.push_back(static_cast<std::size_t>(arch_.filters[0]));
  for (int j = 1; j <= L; ++j) channels_.push_back(static_cast<std::size_t>(arch_.filters[j - 1]));
  const bool lsh = kind_ == NetKind::kLshVae;

  // Convolutions whose output only reaches batch normalization carry no bias.
  add_conv("in_proj", 1, n_dof, channels_[0], true, false);
  for (int j = 1; j <= L; ++j) {
    const bool head = lsh || j == L;
    add_bn(block("enc", j, "bn1"), channels_[j - 1]);
    add_conv(block("enc", j, "conv1"), K, channels_[j - 1], channels_[j], true, false);
    add_bn(block("enc", j, "bn2"), channels_[j]);
    add_conv(block("enc", j, "conv2"), K, channels_[j], channels_[j], true, head);
    if (head) {
      const std::size_t dim = static_cast<std::size_t>(group_dim(lsh ? j : 1));
      const std::size_t outs = kind_ == NetKind::kCae ? dim : 2 * dim;
      add_dense(block("enc", j, "head"), pooled_width(j, channels_[j]), outs, 0.1);
    }
  }

  const std::size_t top_dim = static_cast<std::size_t>(group_dim(n_groups()));
  add_dense(block("dec", L, "top"), top_dim, lengths_[L] * channels_[L], 1.0);
  add_bn(block("dec", L, "bn"), channels_[L]);
  add_conv(block("dec", L, "conv"), K, channels_[L], channels_[L], true, lsh);
  for (int k = L - 1; k >= 1; --k) {
    if (lsh) {
      add_dense(block("dec", k + 1, "head"), pooled_width(k + 1, channels_[k + 1]),
                2 * static_cast<std::size_t>(group_dim(k)), 0.1);
    }
    add_bn(block("dec", k, "bn1"), channels_[k + 1]);
    add_conv(block("dec", k, "conv1"), K, channels_[k + 1], channels_[k], true, false);
    if (lsh) add_dense(block("dec", k, "inj"), static_cast<std::size_t>(group_dim(k)), lengths_[k] * channels_[k], 1.0);
    add_bn(block("dec", k, "bn2"), channels_[k]);
    add_conv(block("dec", k, "conv2"), K, channels_[k], channels_[k], true, lsh && k >= 2);
  }
  add_bn("out.bn1", channels_[1]);
  add_conv("out.conv", K, channels_[1], channels_[0], true, false);
  add_bn("out.bn2", channels_[0]);
  add_dense("out.proj", channels_[0], n_dof, 1.0);
}

template <typename T>
int Network<T>::group_dim(int i) const {
  if (kind_ != NetKind::kLshVae) return arch_.interp_latent_dim;
  return arch_.group_dim(i);
}

template <typename T>
int Network<T>::latent_dim() const {
  int n = 0;
  for (int i = 1; i <= n_groups(); ++i) n += group_dim(i);
  return n;
}

template <typename T>
std::size_t Network<T>::pooled_width(std::size_t level, std::size_t channels) const {
  return arch_.pooling == "flatten" ? lengths_[level] * channels : channels;
}

template <typename T>
void Network<T>::add_conv(const std::string& name, std::size_t k, std::size_t c_in, std::size_t c_out,
                          bool sn, bool bias) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto& w = params_.at(params_.add(name + ".w", {k * c_in, c_out}));
  const double std = std::sqrt(2.0 / static_cast<double>(k * c_in));
  for (auto& e : w.value) e = static_cast<T>(std * normal(init_rng_));
  if (bias) params_.add(name + ".b", {c_out});
  if (!sn) return;
  auto& u = params_.at(params_.add(name + ".w.sn_u", {k * c_in}, false));
  auto& v = params_.at(params_.add(name + ".w.sn_v", {c_out}, false));
  for (auto& e : u.value) e = static_cast<T>(normal(init_rng_));
  for (auto& e : v.value) e = static_cast<T>(normal(init_rng_));
  sn_names_.push_back(name + ".w");
  nn::power_iterate<T>(w.value, k * c_in, c_out, u.value, v.value, 10);
}

template <typename T>
void Network<T>::add_dense(const std::string& name, std::size_t in, std::size_t out, double init_scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto& w = params_.at(params_.add(name + ".w", {in, out}));
  const double std = init_scale / std::sqrt(static_cast<double>(in));
  for (auto& e : w.value) e = static_cast<T>(std * normal(init_rng_));
  params_.add(name + ".b", {out});
}

template <typename T>
void Network<T>::add_bn(const std::string& name, std::size_t ch) {
  auto& gamma = params_.at(params_.add(name + ".gamma", {ch}));
  std::fill(gamma.value.begin(), gamma.value.end(), T(1));
  params_.add(name + ".beta", {ch});
  params_.add(name + ".running_mean", {ch}, false);
  auto& var = params_.at(params_.add(name + ".running_var", {ch}, false));
  std::fill(var.value.begin(), var.value.end(), T(1));
}

template <typename T>
void Network<T>::power_iteration(int iterations) {
  for (const auto& name : sn_names_) {
    auto& w = params_.get(name);
    auto& u = params_.get(name + ".sn_u");
    auto& v = params_.get(name + ".sn_v");
    nn::power_iterate<T>(w.value, w.shape[0], w.shape[1], u.value, v.value, iterations);
  }
}

template <typename T>
nn::Var Network<T>::conv(nn::Graph<T>& g, const std::string& name, nn::Var x, std::size_t stride) {
  auto& wp = params_.get(name + ".w");
  nn::Var w = g.param(wp);
  if (params_.contains(name + ".w.sn_u")) {
    w = nn::spectral_norm<T>(g, w, params_.get(name + ".w.sn_u").value,
                             params_.get(name + ".w.sn_v").value);
  }
  const nn::Var b = params_.contains(name + ".b") ? g.param(params_.get(name + ".b")) : nn::Var{};
  const std::size_t c_in = g.shape(x).back();
  const std::size_t k = wp.shape[0] / c_in;
  nn::ConvSpec spec{k, stride, (k - 1) / 2};
  return nn::conv1d(g, x, w, b, spec);
}

template <typename T>
nn::Var Network<T>::dense(nn::Graph<T>& g, const std::string& name, nn::Var x) {
  return nn::linear(g, x, g.param(params_.get(name + ".w")), g.param(params_.get(name + ".b")));
}

template <typename T>
nn::Var Network<T>::bn_swish(nn::Graph<T>& g, const std::string& name, nn::Var x, bool training) {
  nn::BatchNormSpec spec;
  spec.training = training;
  spec.momentum = bn_momentum_;
  nn::Var y = nn::batch_norm(g, x, g.param(params_.get(name + ".gamma")), g.param(params_.get(name + ".beta")),
                             params_.get(name + ".running_mean"), params_.get(name + ".running_var"), spec);
  return nn::swish(g, y);
}

template <typename T>
nn::Var Network<T>::pool(nn::Graph<T>& g, nn::Var x) {
  if (arch_.pooling == "flatten") {
    const auto& s = g.shape(x);
    return nn::reshape(g, x, nn::Shape{s[0], s[1] * s[2]});
  }
  return nn::mean_time(g, x);
}

template <typename T>
std::pair<nn::Var, nn::Var> Network<T>::stat_head(nn::Graph<T>& g, const std::string& name, nn::Var h,
                                                  std::size_t dim) {
  nn::Var s = dense(g, name, nn::elu(g, pool(g, h)));
  return {nn::slice_last(g, s, 0, dim), nn::slice_last(g, s, dim, dim)};
}

template <typename T>
HierarchicalLatentState Network<T>::encode(nn::Graph<T>& g, nn::Var x, bool training) {
  const auto& xs = g.shape(x);
  if (xs.size() != 3 || xs[1] != n_t_ || xs[2] != n_dof_) {
    throw ConfigError("encode: input shape " + nn::shape_string(xs) + " does not match (batch, " +
                      std::to_string(n_t_) + ", " + std::to_string(n_dof_) + ")");
  }
  const int L = arch_.n_blocks;
  const std::size_t s = static_cast<std::size_t>(arch_.time_stride);
  HierarchicalLatentState st;
  nn::Var u = conv(g, "in_proj", x, 1);
  for (int j = 1; j <= L; ++j) {
    nn::Var h = conv(g, block("enc", j, "conv1"), bn_swish(g, block("enc", j, "bn1"), u, training), s);
    u = conv(g, block("enc", j, "conv2"), bn_swish(g, block("enc", j, "bn2"), h, training), 1);
    st.u.push_back(u);
    if (kind_ == NetKind::kLshVae || j == L) {
      const std::size_t dim = static_cast<std::size_t>(group_dim(kind_ == NetKind::kLshVae ? j : 1));
      if (kind_ == NetKind::kCae) {
        st.mu_q.push_back(dense(g, block("enc", j, "head"), nn::elu(g, pool(g, u))));
      } else {
        auto [mu, lv] = stat_head(g, block("enc", j, "head"), u, dim);
        st.mu_q.push_back(mu);
        st.logvar_q.push_back(lv);
      }
    }
  }
  return st;
}

template <typename T>
nn::Var Network<T>::decode(nn::Graph<T>& g, nn::Var z_top, const std::vector<nn::Var>& enc_codes,
                           const std::vector<std::vector<T>>& dec_noise, bool training,
                           HierarchicalLatentState& st) {
  const int L = arch_.n_blocks;
  const bool lsh = kind_ == NetKind::kLshVae;
  const std::size_t s = static_cast<std::size_t>(arch_.time_stride);
  const std::size_t B = g.shape(z_top)[0];
  if (g.shape(z_top).size() != 2 || g.shape(z_top)[1] != static_cast<std::size_t>(group_dim(n_groups()))) {
    throw ConfigError("decode: top code has shape " + nn::shape_string(g.shape(z_top)));
  }
  st.z.assign(static_cast<std::size_t>(n_groups()), nn::Var{});
  st.d.assign(static_cast<std::size_t>(L), nn::Var{});
  if (lsh) {
    st.mu_p.assign(static_cast<std::size_t>(L - 1), nn::Var{});
    st.logvar_p.assign(static_cast<std::size_t>(L - 1), nn::Var{});
  }
  st.z.back() = z_top;

  nn::Var h = nn::reshape(g, dense(g, block("dec", L, "top"), z_top), nn::Shape{B, lengths_[L], channels_[L]});
  nn::Var d = conv(g, block("dec", L, "conv"), bn_swish(g, block("dec", L, "bn"), h, training), 1);
  st.d[L - 1] = d;
  for (int k = L - 1; k >= 1; --k) {
    const std::size_t gi = static_cast<std::size_t>(k - 1);
    nn::Var zk;
    if (lsh) {
      const std::size_t dim = static_cast<std::size_t>(group_dim(k));
      auto [mu_p, lv_p] = stat_head(g, block("dec", k + 1, "head"), d, dim);
      st.mu_p[gi] = mu_p;
      st.logvar_p[gi] = lv_p;
      std::vector<T> eps = gi < dec_noise.size() && !dec_noise[gi].empty() ? dec_noise[gi]
                                                                          : std::vector<T>(B * dim, T(0));
      zk = nn::reparameterize<T>(g, mu_p, lv_p, eps);
      if (gi < enc_codes.size() && enc_codes[gi].valid()) zk = nn::add(g, enc_codes[gi], zk);
      st.z[gi] = zk;
    }
    nn::Var up = nn::upsample_nearest(g, d, lengths_[k], s);
    h = conv(g, block("dec", k, "conv1"), bn_swish(g, block("dec", k, "bn1"), up, training), 1);
    if (lsh) {
      nn::Var inj = nn::reshape(g, dense(g, block("dec", k, "inj"), zk), nn::Shape{B, lengths_[k], channels_[k]});
      h = nn::add(g, h, inj);
    }
    d = conv(g, block("dec", k, "conv2"), bn_swish(g, block("dec", k, "bn2"), h, training), 1);
    st.d[gi] = d;
  }
  nn::Var up = nn::upsample_nearest(g, d, lengths_[0], s);
  h = conv(g, "out.conv", bn_swish(g, "out.bn1", up, training), 1);
  return dense(g, "out.proj", bn_swish(g, "out.bn2", h, training));
}

template <typename T>
ForwardResult Network<T>::forward(nn::Graph<T>& g, nn::Var x, const LatentNoise<T>& noise, bool training) {
  ForwardResult r;
  r.state = encode(g, x, training);
  const std::size_t B = g.shape(x)[0];
  auto& st = r.state;
  std::vector<nn::Var> codes;
  if (kind_ == NetKind::kCae) {
    codes.push_back(st.mu_q[0]);
  } else {
    for (std::size_t i = 0; i < st.mu_q.size(); ++i) {
      const std::size_t n = B * static_cast<std::size_t>(group_dim(static_cast<int>(i) + 1));
      std::vector<T> eps = i < noise.enc.size() && !noise.enc[i].empty() ? noise.enc[i] : std::vector<T>(n, T(0));
      codes.push_back(nn::reparameterize<T>(g, st.mu_q[i], st.logvar_q[i], eps));
    }
  }
  nn::Var top = codes.back();
  codes.pop_back();
  r.x_tilde = decode(g, top, codes, noise.dec, training, st);
  return r;
}

template <typename T>
nn::Var Network<T>::loss(nn::Graph<T>& g, nn::Var x, const ForwardResult& r, double beta, const LossConfig& cfg,
                         LossBreakdown* breakdown) const {
  if (kind_ != NetKind::kCae) {
    const auto stats = r.state.group_stats();
    return lsh_vae_loss<T>(g, x, r.x_tilde, stats, beta, cfg, breakdown);
  }
  nn::Var rec = nn::mse(g, r.x_tilde, x);
  const double n_elem = static_cast<double>(g.value(x).size()) / static_cast<double>(g.shape(x)[0]);
  const T w = static_cast<T>(cfg.mse_reduction == "sum" ? cfg.alpha * n_elem : cfg.alpha);
  const nn::Var terms[] = {rec};
  const T weights[] = {w};
  nn::Var total = nn::weighted_sum<T>(g, terms, weights);
  if (breakdown) {
    breakdown->mse = static_cast<double>(g.scalar(rec));
    breakdown->kl_per_group.clear();
    breakdown->beta_used = 0.0;
    breakdown->total = static_cast<double>(g.scalar(total));
  }
  return total;
}

template <typename T>
std::vector<std::vector<T>> Network<T>::latent_means(std::span<const T> x, std::size_t batch) {
  nn::Graph<T> g;
  nn::Var xv = g.constant(nn::Shape{batch, n_t_, n_dof_}, x);
  const auto st = encode(g, xv, false);
  std::vector<std::vector<T>> out;
  for (auto v : st.mu_q) out.push_back(g.value(v));
  return out;
}

template <typename T>
std::vector<T> Network<T>::decode_codes(const std::vector<std::vector<T>>& codes, std::size_t batch) {
  if (codes.size() != static_cast<std::size_t>(n_groups())) throw ConfigError("decode_codes: wrong group count");
  nn::Graph<T> g;
  std::vector<nn::Var> enc;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const std::size_t dim = static_cast<std::size_t>(group_dim(static_cast<int>(i) + 1));
    if (codes[i].size() != batch * dim) throw ConfigError("decode_codes: code size mismatch");
    enc.push_back(g.constant(nn::Shape{batch, dim}, codes[i]));
  }
  nn::Var top = enc.back();
  enc.pop_back();
  HierarchicalLatentState st;
  return g.value(decode(g, top, enc, {}, false, st));
}

template class Network<float>;
template class Network<double>;

std::vector<double> spectral_normalize(std::span<const double> w, std::size_t rows, std::size_t cols,
                                       std::vector<double>& u, std::vector<double>& v, int iterations) {
  if (u.size() != rows || v.size() != cols) throw std::invalid_argument("spectral_normalize: vector size mismatch");
  const double sigma = nn::power_iterate<double>(w, rows, cols, u, v, iterations);
  std::vector<double> out(w.begin(), w.end());
  if (!(sigma > 0.0)) return out;
  for (auto& e : out) e /= sigma;
  return out;
}

}  // namespace lshrom
