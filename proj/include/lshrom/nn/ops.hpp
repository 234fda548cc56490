#pragma once

// Differentiable tensor operations. Activations are laid out (batch, time,
// channel) row-major; weight matrices are stored (fan_in, fan_out) so that the
// forward product is a row-major GEMM with unit-stride output rows.

#include <span>
#include <vector>

#include "lshrom/nn/graph.hpp"

namespace lshrom::nn {

struct ConvSpec {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;
};

std::size_t conv_output_length(std::size_t length, const ConvSpec& spec);

struct BatchNormSpec {
  bool training = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// y = x w + b over the last axis of x. w is (in, out); b may be an invalid Var.
template <typename T>
Var linear(Graph<T>& g, Var x, Var w, Var b);

/// 1-D convolution along time. x is (B, T, Cin), w is (K * Cin, Cout) with
/// row index k * Cin + ci, b is (Cout). Zero padding.
template <typename T>
Var conv1d(Graph<T>& g, Var x, Var w, Var b, const ConvSpec& spec);

/// w / sigma with sigma = u^T w v for fixed power-iteration vectors u, v.
/// Gradient flows through sigma. A zero matrix passes through unchanged.
template <typename T>
Var spectral_norm(Graph<T>& g, Var w, std::span<const T> u, std::span<const T> v);

/// Per-channel batch normalization over every axis but the last. In training
/// mode the running statistics are updated with the given momentum.
template <typename T>
Var batch_norm(Graph<T>& g, Var x, Var gamma, Var beta, Param<T>& running_mean,
               Param<T>& running_var, const BatchNormSpec& spec);

template <typename T>
Var swish(Graph<T>& g, Var x);
template <typename T>
Var elu(Graph<T>& g, Var x);
template <typename T>
Var add(Graph<T>& g, Var a, Var b);
template <typename T>
Var mul(Graph<T>& g, Var a, Var b);
template <typename T>
Var scale(Graph<T>& g, Var x, T factor);

/// Nearest-neighbour upsampling along time: out[t] = x[min(t / factor, T_in - 1)].
template <typename T>
Var upsample_nearest(Graph<T>& g, Var x, std::size_t out_length, std::size_t factor);

/// Mean over the time axis: (B, T, C) -> (B, C).
template <typename T>
Var mean_time(Graph<T>& g, Var x);

template <typename T>
Var reshape(Graph<T>& g, Var x, Shape shape);

/// Columns [begin, begin + count) of the last axis.
template <typename T>
Var slice_last(Graph<T>& g, Var x, std::size_t begin, std::size_t count);

/// mu + exp(logvar / 2) * eps with eps a fixed array of standard-normal draws.
template <typename T>
Var reparameterize(Graph<T>& g, Var mu, Var logvar, std::span<const T> eps);

/// Mean squared error over all elements (scalar).
template <typename T>
Var mse(Graph<T>& g, Var prediction, Var target);

/// Batch-averaged KL(N(mu, exp(logvar)) || N(0, I)) for (B, N) inputs (scalar).
template <typename T>
Var kl_standard_normal(Graph<T>& g, Var mu, Var logvar);

/// Batch-averaged KL(N(mu_q, exp(lv_q)) || N(mu_p, exp(lv_p))) (scalar).
template <typename T>
Var kl_gaussian_pair(Graph<T>& g, Var mu_q, Var logvar_q, Var mu_p, Var logvar_p);

/// sum_i weights[i] * terms[i] for scalar terms.
template <typename T>
Var weighted_sum(Graph<T>& g, std::span<const Var> terms, std::span<const T> weights);

/// One or more power-iteration sweeps on w (rows x cols): v <- w^T u / |.|,
/// u <- w v / |.|. Returns the estimate u^T w v.
template <typename T>
T power_iterate(std::span<const T> w, std::size_t rows, std::size_t cols, std::span<T> u,
                std::span<T> v, int iterations);

}  // namespace lshrom::nn
