#pragma once

// Hierarchical VAE with bidirectional latent sharing, plus the flat CAE and
// beta-VAE variants built from the same blocks.
//
// Encoder (bottom-up): x -> in_proj -> block 1 -> ... -> block L. Block j halves
// the time axis and emits u_j together with the posterior statistics of group j.
// Decoder (top-down): block L maps z_L to d_L and the prior statistics of group
// L-1; block k < L consumes d_{k+1} and the shared code
// z_k = (mu_q,k + sigma_q,k eps) + (mu_p,k + sigma_p,k eps') and emits d_k plus the
// prior of group k-1. The output head maps d_1 back to (N_t, N_DOF).

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lshrom/nn/graph.hpp"
#include "lshrom/objective.hpp"

namespace lshrom {

enum class NetKind { kLshVae, kCae, kBetaVae };

std::string to_string(NetKind kind);
NetKind parse_net_kind(const std::string& s);

struct ArchitectureConfig {
  int n_blocks = 7;
  int shared_latent_dim = 8;
  int interp_latent_dim = 32;
  std::vector<int> filters{64, 32, 16, 8, 4, 2, 1};
  int kernel_size = 3;
  int time_stride = 2;
  /// Statistic-head pooling over time: "mean" or "flatten".
  std::string pooling = "mean";

  void validate() const;
  /// Latent size of group i (1-based): shared below the top, interp at the top.
  int group_dim(int i) const { return i == n_blocks ? interp_latent_dim : shared_latent_dim; }
  int total_latent_dim() const { return (n_blocks - 1) * shared_latent_dim + interp_latent_dim; }
  bool operator==(const ArchitectureConfig&) const = default;
};

void to_json(nlohmann::json& j, const ArchitectureConfig& cfg);
void from_json(const nlohmann::json& j, ArchitectureConfig& cfg);

/// Time length at each level: T_0 = n_t, T_j = ceil(T_{j-1} / stride).
std::vector<std::size_t> level_lengths(const ArchitectureConfig& arch, std::size_t n_t);

/// Standard-normal draws for one forward pass, (batch * dim) per group.
/// enc[i] / dec[i] belong to group i + 1; dec holds L - 1 entries. Empty arrays
/// mean zero noise (means only).
template <typename T>
struct LatentNoise {
  std::vector<std::vector<T>> enc;
  std::vector<std::vector<T>> dec;
};

/// Graph handles for every quantity of one hierarchical pass. Vectors are
/// indexed by group or level minus one.
struct HierarchicalLatentState {
  std::vector<nn::Var> u;         // u_1 .. u_L
  std::vector<nn::Var> mu_q;      // groups 1 .. L
  std::vector<nn::Var> logvar_q;  // groups 1 .. L
  std::vector<nn::Var> mu_p;      // groups 1 .. L-1 (emitted by decoder blocks 2 .. L)
  std::vector<nn::Var> logvar_p;  // groups 1 .. L-1
  std::vector<nn::Var> z;         // shared codes 1 .. L
  std::vector<nn::Var> d;         // d_1 .. d_L (decoder features)

  /// Statistics in the layout expected by lsh_vae_loss (top group last).
  std::vector<GroupStats> group_stats() const;
};

struct ForwardResult {
  nn::Var x_tilde;
  HierarchicalLatentState state;
};

/// Network parameters plus the forward graph builders. T is float for training
/// and double for gradient verification.
template <typename T>
class Network {
 public:
  Network(NetKind kind, ArchitectureConfig arch, std::size_t n_t, std::size_t n_dof,
          std::uint64_t seed = 0);

  NetKind kind() const { return kind_; }
  const ArchitectureConfig& arch() const { return arch_; }
  std::size_t n_t() const { return n_t_; }
  std::size_t n_dof() const { return n_dof_; }
  int n_groups() const { return kind_ == NetKind::kLshVae ? arch_.n_blocks : 1; }
  int group_dim(int i) const;
  int latent_dim() const;  // sum of group dims

  nn::ParamStore<T>& params() { return params_; }
  const nn::ParamStore<T>& params() const { return params_; }

  /// One power-iteration sweep per spectral-normalized weight, updating the
  /// persisted u/v vectors. Called once before each training step.
  void power_iteration(int iterations = 1);
  /// Running-statistic momentum used by training-mode batch normalization.
  void set_bn_momentum(double m) { bn_momentum_ = m; }
  double bn_momentum() const { return bn_momentum_; }
  /// Names of weights wrapped by spectral normalization.
  const std::vector<std::string>& spectral_weights() const { return sn_names_; }

  /// Bottom-up pass: u_j and posterior statistics (mu_q, logvar_q).
  HierarchicalLatentState encode(nn::Graph<T>& g, nn::Var x, bool training);

  /// Top-down pass. `enc_codes` holds the encoder-side contribution for groups
  /// 1 .. L-1 (invalid handles select generation mode for that group). The
  /// decoder-side contribution mu_p + sigma_p eps' is added for every group.
  nn::Var decode(nn::Graph<T>& g, nn::Var z_top, const std::vector<nn::Var>& enc_codes,
                 const std::vector<std::vector<T>>& dec_noise, bool training,
                 HierarchicalLatentState& state);

  /// encode -> reparameterize -> decode.
  ForwardResult forward(nn::Graph<T>& g, nn::Var x, const LatentNoise<T>& noise, bool training);

  /// Loss of a forward result: LSH-VAE and beta-VAE use the weighted ELBO form,
  /// the CAE uses alpha * MSE.
  nn::Var loss(nn::Graph<T>& g, nn::Var x, const ForwardResult& r, double beta, const LossConfig& cfg,
               LossBreakdown* breakdown) const;

  /// Encoder means per group for one batch (inference mode, no sampling).
  std::vector<std::vector<T>> latent_means(std::span<const T> x, std::size_t batch);

  /// Decodes per-group codes (inference mode, eps' = 0): z_L is codes.back(),
  /// lower groups add the decoder prior mean. Returns (batch, N_t, N_DOF).
  std::vector<T> decode_codes(const std::vector<std::vector<T>>& codes, std::size_t batch);

  /// Fresh noise arrays for the given batch.
  template <typename Rng>
  LatentNoise<T> sample_noise(Rng& rng, std::size_t batch) const;

  /// Parameter values copied between precisions (same architecture).
  template <typename U>
  void copy_values_from(const Network<U>& other);

 private:
  void add_conv(const std::string& name, std::size_t k, std::size_t c_in, std::size_t c_out, bool sn,
                bool bias);
  void add_dense(const std::string& name, std::size_t in, std::size_t out, double init_scale);
  void add_bn(const std::string& name, std::size_t ch);

  nn::Var conv(nn::Graph<T>& g, const std::string& name, nn::Var x, std::size_t stride);
  nn::Var dense(nn::Graph<T>& g, const std::string& name, nn::Var x);
  nn::Var bn_swish(nn::Graph<T>& g, const std::string& name, nn::Var x, bool training);
  nn::Var pool(nn::Graph<T>& g, nn::Var x);
  std::size_t pooled_width(std::size_t level, std::size_t channels) const;
  /// (mu, logvar) from a feature map through pool -> ELU -> dense.
  std::pair<nn::Var, nn::Var> stat_head(nn::Graph<T>& g, const std::string& name, nn::Var h, std::size_t dim);

  NetKind kind_;
  ArchitectureConfig arch_;
  std::size_t n_t_, n_dof_;
  std::vector<std::size_t> lengths_;
  std::vector<std::size_t> channels_;  // channels_[j] of u_j, channels_[0] after in_proj
  nn::ParamStore<T> params_;
  std::vector<std::string> sn_names_;
  double bn_momentum_ = 0.1;
  std::mt19937_64 init_rng_;

  template <typename U>
  friend class Network;
};

template <typename T>
template <typename Rng>
LatentNoise<T> Network<T>::sample_noise(Rng& rng, std::size_t batch) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  LatentNoise<T> noise;
  if (kind_ == NetKind::kCae) return noise;
  auto draw = [&](std::size_t n) {
    std::vector<T> v(n);
    for (auto& e : v) e = static_cast<T>(normal(rng));
    return v;
  };
  for (int i = 1; i <= n_groups(); ++i) noise.enc.push_back(draw(batch * group_dim(i)));
  if (kind_ == NetKind::kLshVae) {
    for (int i = 1; i < n_groups(); ++i) noise.dec.push_back(draw(batch * group_dim(i)));
  }
  return noise;
}

template <typename T>
template <typename U>
void Network<T>::copy_values_from(const Network<U>& other) {
  if (!(arch_ == other.arch_) || kind_ != other.kind_ || n_t_ != other.n_t_ || n_dof_ != other.n_dof_) {
    throw std::invalid_argument("copy_values_from: architecture mismatch");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& src = other.params_.at(i).value;
    auto& dst = params_.at(i).value;
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<T>(src[k]);
  }
  bn_momentum_ = other.bn_momentum_;
}

extern template class Network<float>;
extern template class Network<double>;

/// Value-level spectral normalization of a (rows x cols) matrix using
/// `iterations` power-iteration sweeps from the given vectors.
std::vector<double> spectral_normalize(std::span<const double> w, std::size_t rows, std::size_t cols,
                                       std::vector<double>& u, std::vector<double>& v, int iterations);

}  // namespace lshrom
