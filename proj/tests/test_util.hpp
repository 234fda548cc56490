#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lshrom/nn/graph.hpp"

namespace testutil {

inline lshrom::nn::Param<double> make_param(std::string name, lshrom::nn::Shape shape, std::mt19937_64& rng,
                                            double scale = 1.0) {
  lshrom::nn::Param<double> p;
  p.name = std::move(name);
  p.shape = std::move(shape);
  const std::size_t n = lshrom::nn::numel(p.shape);
  std::normal_distribution<double> normal(0.0, scale);
  for (std::size_t i = 0; i < n; ++i) p.value.push_back(normal(rng));
  p.grad.assign(n, 0.0);
  return p;
}

/// Largest per-tensor relative error ||analytic - central FD|| / ||central FD||
/// of a scalar graph built from the given leaves.
template <typename Build>
double max_grad_rel_error(std::vector<lshrom::nn::Param<double>>& leaves, Build build, double h = 1e-6) {
  using lshrom::nn::Graph;
  using lshrom::nn::Var;
  auto eval = [&](bool with_grad) {
    Graph<double> g;
    std::vector<Var> vars;
    for (auto& p : leaves) vars.push_back(g.param(p));
    Var loss = build(g, vars);
    if (with_grad) g.backward(loss);
    return g.scalar(loss);
  };
  for (auto& p : leaves) std::fill(p.grad.begin(), p.grad.end(), 0.0);
  eval(true);
  double worst = 0.0;
  for (auto& p : leaves) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double keep = p.value[i];
      p.value[i] = keep + h;
      const double fp = eval(false);
      p.value[i] = keep - h;
      const double fm = eval(false);
      p.value[i] = keep;
      const double fd = (fp - fm) / (2.0 * h);
      num += (p.grad[i] - fd) * (p.grad[i] - fd);
      den += fd * fd;
    }
    worst = std::max(worst, std::sqrt(num) / std::max(std::sqrt(den), 1e-8));
  }
  return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("lshrom_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testutil
