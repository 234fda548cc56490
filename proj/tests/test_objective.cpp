#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "lshrom/error.hpp"
#include "lshrom/objective.hpp"
#include "test_util.hpp"

using namespace lshrom;

namespace {

// Monte-Carlo estimate of KL(q || p) = E_q[log q(z) - log p(z)] for diagonal Gaussians.
double kl_monte_carlo(const std::vector<double>& mq, const std::vector<double>& sq, const std::vector<double>& mp,
                      const std::vector<double>& sp, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double acc = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    double lr = 0.0;
    for (std::size_t i = 0; i < mq.size(); ++i) {
      const double e = normal(rng);
      const double z = mq[i] + sq[i] * e;
      const double zp = (z - mp[i]) / sp[i];
      lr += -std::log(sq[i]) - 0.5 * e * e + std::log(sp[i]) + 0.5 * zp * zp;
    }
    acc += lr;
  }
  return acc / static_cast<double>(n);
}

}  // namespace

TEST_CASE("kl_standard_normal closed-form examples") {
  CHECK(kl_standard_normal(std::vector<double>{0.0}, std::vector<double>{1.0}) == 0.0);
  CHECK(kl_standard_normal(std::vector<double>{1.0}, std::vector<double>{1.0}) == doctest::Approx(0.5).epsilon(1e-15));
  const double e = std::numbers::e;
  CHECK(kl_standard_normal(std::vector<double>{0.0}, std::vector<double>{std::sqrt(e)}) ==
        doctest::Approx(0.5 * (e - 2.0)).epsilon(1e-14));
  CHECK(0.5 * (e - 2.0) == doctest::Approx(0.35914).epsilon(1e-5));
  CHECK_THROWS_AS(kl_standard_normal(std::vector<double>{0.0}, std::vector<double>{0.0}), std::domain_error);
}

TEST_CASE("kl_gaussian_pair closed-form examples and reductions") {
  const std::vector<double> m{0.3, -1.2}, s{0.7, 1.9};
  CHECK(kl_gaussian_pair(m, s, m, s) == doctest::Approx(0.0));
  CHECK(kl_gaussian_pair(m, s, std::vector<double>{0, 0}, std::vector<double>{1, 1}) ==
        doctest::Approx(kl_standard_normal(m, s)).epsilon(1e-14));
  CHECK(kl_gaussian_pair(std::vector<double>{1.0}, std::vector<double>{1.0}, std::vector<double>{0.0},
                         std::vector<double>{1.0}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(kl_gaussian_pair(m, s, m, std::vector<double>{1.0, -1.0}), std::domain_error);
}

TEST_CASE("analytic KL terms agree with a Monte-Carlo oracle within 1 percent") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> mu(-1.5, 1.5), sd(0.5, 2.0);
  for (int draw = 0; draw < 10; ++draw) {
    std::vector<double> mq(4), sq(4), mp(4), sp(4);
    for (int i = 0; i < 4; ++i) {
      mq[i] = mu(rng);
      sq[i] = sd(rng);
      mp[i] = mu(rng);
      sp[i] = sd(rng);
    }
    const std::vector<double> zero(4, 0.0), one(4, 1.0);
    const double mc_std = kl_monte_carlo(mq, sq, zero, one, 1000000, 100 + draw);
    const double mc_pair = kl_monte_carlo(mq, sq, mp, sp, 1000000, 200 + draw);
    CHECK(kl_standard_normal(mq, sq) == doctest::Approx(mc_std).epsilon(0.01));
    CHECK(kl_gaussian_pair(mq, sq, mp, sp) == doctest::Approx(mc_pair).epsilon(0.01));
    CHECK(kl_gaussian_pair(mq, sq, mp, sp) >= 0.0);
  }
}

TEST_CASE("beta schedule") {
  LossConfig cfg;
  CHECK(std::abs(beta_schedule(100, cfg) - 1e-4) < 1e-12);
  CHECK(std::abs(beta_schedule(2500, cfg) - 0.5) < 1e-12);
  CHECK(std::abs(beta_schedule(5000, cfg) - 1.0) < 1e-12);
  // Boundary at warmup_fraction * n_epochs belongs to the ramp.
  CHECK(beta_schedule(1499, cfg) == doctest::Approx(1e-4));
  CHECK(beta_schedule(1500, cfg) == doctest::Approx(0.3));
  CHECK_THROWS_AS(beta_schedule(0, cfg), std::out_of_range);
  CHECK_THROWS_AS(beta_schedule(5001, cfg), std::out_of_range);
  double prev = 0.0;
  for (int e = 1; e <= cfg.n_epochs; ++e) {
    const double b = beta_schedule(e, cfg);
    CHECK(b >= prev);
    prev = b;
  }
}

TEST_CASE("constant beta schedule holds beta_target from the first epoch") {
  LossConfig cfg;
  cfg.schedule = "constant";
  cfg.beta_target = 0.7;
  for (int e : {1, 100, 1499, 1500, 5000}) CHECK(beta_schedule(e, cfg) == 0.7);
  CHECK_THROWS_AS(beta_schedule(0, cfg), std::out_of_range);
  cfg.schedule = "cyclic";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

namespace {

struct LossFixture {
  nn::Graph<double> g;
  nn::Var x, xt;
  std::vector<GroupStats> groups;
};

LossFixture prior_fixture(double offset) {
  LossFixture f;
  std::vector<double> xv(12), xtv(12);
  for (int i = 0; i < 12; ++i) {
    xv[i] = 0.1 * i - 0.5;
    xtv[i] = xv[i] + offset;
  }
  f.x = f.g.constant(nn::Shape{1, 3, 4}, xv);
  f.xt = f.g.constant(nn::Shape{1, 3, 4}, xtv);
  auto zeros = [&](std::size_t n) { return f.g.constant(nn::Shape{1, n}, std::vector<double>(n, 0.0)); };
  f.groups.push_back({zeros(2), zeros(2), zeros(2), zeros(2)});
  f.groups.push_back({zeros(3), zeros(3), {}, {}});
  return f;
}

}  // namespace

TEST_CASE("lsh_vae_loss examples") {
  LossConfig cfg;
  {
    auto f = prior_fixture(0.0);
    LossBreakdown b;
    auto l = lsh_vae_loss<double>(f.g, f.x, f.xt, f.groups, 1.0, cfg, &b);
    CHECK(f.g.scalar(l) == doctest::Approx(0.0));
    CHECK(b.total == doctest::Approx(0.0));
  }
  {
    auto f = prior_fixture(0.1);
    LossBreakdown b;
    auto l = lsh_vae_loss<double>(f.g, f.x, f.xt, f.groups, 1.0, cfg, &b);
    CHECK(f.g.scalar(l) == doctest::Approx(1e6 * 0.01).epsilon(1e-9));
    CHECK(b.mse == doctest::Approx(0.01).epsilon(1e-9));
    CHECK(b.total == doctest::Approx(b.mse * cfg.alpha + b.beta_used * b.kl_sum()));
  }
  {
    // alpha scaling scales the mse contribution exactly.
    auto f = prior_fixture(0.1);
    LossConfig c2 = cfg;
    c2.alpha = 3e6;
    LossBreakdown b;
    auto l = lsh_vae_loss<double>(f.g, f.x, f.xt, f.groups, 0.0, c2, &b);
    CHECK(f.g.scalar(l) == doctest::Approx(3.0 * 1e6 * 0.01).epsilon(1e-12));
  }
}

TEST_CASE("lsh_vae_loss: beta = 0 is pure alpha * MSE and KL parts are recorded per group") {
  std::mt19937_64 rng(3);
  std::vector<nn::Param<double>> p{testutil::make_param("xt", {2, 3, 4}, rng), testutil::make_param("mq", {2, 2}, rng),
                                   testutil::make_param("lq", {2, 2}, rng, 0.3), testutil::make_param("mp", {2, 2}, rng),
                                   testutil::make_param("lp", {2, 2}, rng, 0.3), testutil::make_param("mt", {2, 3}, rng),
                                   testutil::make_param("lt", {2, 3}, rng, 0.3)};
  const auto xv = testutil::make_param("x", {2, 3, 4}, rng).value;
  LossConfig cfg;
  cfg.alpha = 10.0;
  for (double beta : {0.0, 0.7}) {
    nn::Graph<double> g;
    std::vector<nn::Var> v;
    for (auto& q : p) v.push_back(g.param(q));
    std::vector<GroupStats> gs{{v[1], v[2], v[3], v[4]}, {v[5], v[6], {}, {}}};
    LossBreakdown b;
    auto l = lsh_vae_loss<double>(g, g.constant(nn::Shape{2, 3, 4}, xv), v[0], gs, beta, cfg, &b);
    REQUIRE(b.kl_per_group.size() == 2);
    CHECK(g.scalar(l) == doctest::Approx(cfg.alpha * b.mse + beta * b.kl_sum()).epsilon(1e-12));
    for (double k : b.kl_per_group) CHECK(k >= 0.0);
  }
  // Gradients with respect to x_tilde and every statistic.
  const double err = testutil::max_grad_rel_error(p, [&](nn::Graph<double>& g, std::vector<nn::Var>& v) {
    std::vector<GroupStats> gs{{v[1], v[2], v[3], v[4]}, {v[5], v[6], {}, {}}};
    return lsh_vae_loss<double>(g, g.constant(nn::Shape{2, 3, 4}, xv), v[0], gs, 0.7, cfg, nullptr);
  });
  CHECK(err < 1e-4);
}

TEST_CASE("kl_per_dimension sums to the batch-averaged group KL") {
  const std::vector<double> mq{0.5, -0.2, 1.0, 0.0}, lq{0.1, -0.3, 0.0, 0.2};
  const auto d = kl_per_dimension(mq, lq, {}, {}, 2, 2);
  REQUIRE(d.size() == 2);
  double total = 0.0;
  for (std::size_t b = 0; b < 2; ++b) {
    std::vector<double> m{mq[2 * b], mq[2 * b + 1]}, s{std::exp(0.5 * lq[2 * b]), std::exp(0.5 * lq[2 * b + 1])};
    total += kl_standard_normal(m, s) / 2.0;
  }
  CHECK(d[0] + d[1] == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("LossConfig validation and JSON round trip") {
  LossConfig c;
  c.alpha = 0.0;
  CHECK_THROWS(c.validate());
  LossConfig d;
  d.warmup_fraction = 0.25;
  const nlohmann::json j = d;
  CHECK(j.get<LossConfig>().warmup_fraction == 0.25);
  CHECK(j.get<LossConfig>().schedule == "annealed");
  d.schedule = "constant";
  CHECK(nlohmann::json(d).get<LossConfig>().schedule == "constant");
}
