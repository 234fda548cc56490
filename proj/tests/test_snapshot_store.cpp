#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "lshrom/error.hpp"
#include "lshrom/snapshot_store.hpp"
#include "test_util.hpp"

using namespace lshrom;

namespace {

SnapshotEnsemble make_ensemble(std::size_t n_param, const std::vector<std::string>& vars, std::size_t n_t,
                               std::size_t n_dof, std::mt19937_64& rng) {
  SnapshotEnsemble e;
  e.timestep = 0.01;
  e.variable_names = vars;
  std::normal_distribution<double> normal(0.0, 2.0);
  for (std::size_t i = 0; i < n_param; ++i) {
    e.parameter_values.push_back(1.0 + 0.5 * static_cast<double>(i));
    std::map<std::string, FieldVariable> m;
    for (const auto& v : vars) {
      FieldVariable f(v, n_t, n_dof);
      for (auto& x : f.values) x = static_cast<float>(normal(rng));
      m[v] = std::move(f);
    }
    e.fields.push_back(std::move(m));
  }
  return e;
}

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST_CASE("ensemble directory round trip is byte-exact") {
  std::mt19937_64 rng(1);
  const auto vars = std::vector<std::string>{"dX", "dY", "u", "v", "p"};
  const auto ens = make_ensemble(7, vars, 200, 100, rng);
  const auto dir = testutil::scratch_dir("store_roundtrip");
  save_ensemble(ens, dir);
  const auto back = load_ensemble(dir);
  CHECK(back.parameter_values.size() == 7);
  CHECK(back.timestep == 0.01);
  CHECK(back.n_t() == 200);
  CHECK(back.n_dof() == 100);
  CHECK(back.variable_names == vars);
  for (std::size_t i = 0; i < 7; ++i)
    for (const auto& v : vars) CHECK(back.field(i, v).values == ens.field(i, v).values);
  const auto dir2 = testutil::scratch_dir("store_roundtrip2");
  save_ensemble(back, dir2);
  CHECK(slurp(dir / "3_u.f32") == slurp(dir2 / "3_u.f32"));
  CHECK(slurp(dir / "3_u.f32").size() == 200 * 100 * 4);
}

TEST_CASE("load_ensemble rejects a missing variable, a missing manifest and non-finite data") {
  std::mt19937_64 rng(2);
  const auto ens = make_ensemble(3, {"u", "p"}, 4, 3, rng);
  const auto dir = testutil::scratch_dir("store_errors");
  save_ensemble(ens, dir);
  std::filesystem::remove(dir / "1_p.f32");
  try {
    load_ensemble(dir);
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("variable set mismatch") != std::string::npos);
  }
  CHECK_THROWS(load_ensemble(testutil::scratch_dir("store_empty")));

  auto bad = ens;
  bad.fields[2]["u"].values[5] = std::nanf("");
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  auto unsorted = ens;
  std::swap(unsorted.parameter_values[0], unsorted.parameter_values[1]);
  CHECK_THROWS_AS(unsorted.validate(), ConfigError);
}

TEST_CASE("fit_normalization examples") {
  SnapshotEnsemble e;
  e.timestep = 0.1;
  e.variable_names = {"u"};
  e.parameter_values = {0.0, 1.0};
  // DOF 0 spans [0, 1], DOF 1 constant 5, DOF 2 spans [-3, 3] across parameters.
  e.fields.push_back({{"u", FieldVariable("u", 2, 3, {0.0f, 5.0f, -3.0f, 0.5f, 5.0f, 0.0f})}});
  e.fields.push_back({{"u", FieldVariable("u", 2, 3, {1.0f, 5.0f, 3.0f, 0.25f, 5.0f, 1.0f})}});
  const auto map = fit_normalization(e, "u");
  const auto n0 = normalize(e.field(0, "u"), map);
  const auto n1 = normalize(e.field(1, "u"), map);
  CHECK(n0.at(0, 0) == -0.7f);
  CHECK(n1.at(0, 0) == 0.7f);
  CHECK(n0.at(0, 1) == 0.0f);
  CHECK(n0.at(1, 2) == 0.0f);
  CHECK(map.scale[1] == 1.0);
  CHECK(map.offset[1] == 5.0);
  FieldVariable top("u", 1, 3, {0.7f, 0.0f, 0.0f});
  const auto dn = denormalize(top, map);
  CHECK(dn.at(0, 0) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(dn.at(0, 1) == 5.0f);
  CHECK_THROWS_AS(normalize(FieldVariable("u", 2, 4), map), ConfigError);
}

// Property: over random ensembles (with constant DOFs mixed in) the extrema map
// exactly to +-0.7 and the round trip error stays below 1e-6 of the DOF range
// (absolute below 1e-6 for unit-order data).
void check_random_round_trips(double max_shift, double max_log_gain, double* worst_abs, double* worst_range,
                              bool* extrema_exact) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> sizes(2, 12);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n_param = sizes(rng) / 2 + 1, n_t = sizes(rng), n_dof = sizes(rng);
    auto e = make_ensemble(n_param, {"u"}, n_t, n_dof, rng);
    const double shift = max_shift * unif(rng), gain = std::exp(max_log_gain * unif(rng));
    const std::size_t constant_dof = trial % n_dof;
    for (auto& m : e.fields) {
      auto& f = m["u"];
      for (std::size_t t = 0; t < n_t; ++t)
        for (std::size_t d = 0; d < n_dof; ++d)
          f.at(t, d) = d == constant_dof ? static_cast<float>(shift) : static_cast<float>(shift + gain * f.at(t, d));
    }
    const auto map = fit_normalization(e, "u");
    std::vector<float> lo(n_dof, 1e30f), hi(n_dof, -1e30f);
    for (std::size_t i = 0; i < n_param; ++i) {
      const auto& f = e.field(i, "u");
      const auto nf = normalize(f, map);
      const auto back = denormalize(nf, map);
      for (std::size_t k = 0; k < f.values.size(); ++k) {
        const double err = std::abs(double(back.values[k]) - f.values[k]);
        *worst_abs = std::max(*worst_abs, err);
        *worst_range = std::max(*worst_range, err / std::max(1.0, 1.4 * map.scale[k % n_dof]));
        lo[k % n_dof] = std::min(lo[k % n_dof], nf.values[k]);
        hi[k % n_dof] = std::max(hi[k % n_dof], nf.values[k]);
      }
    }
    for (std::size_t d = 0; d < n_dof; ++d) {
      if (d == constant_dof) *extrema_exact &= lo[d] == 0.0f && hi[d] == 0.0f;
      else *extrema_exact &= lo[d] == -0.7f && hi[d] == 0.7f;
    }
  }
}

TEST_CASE("normalization round trip and extrema over random unit-order ensembles") {
  double worst_abs = 0.0, worst_range = 0.0;
  bool extrema_exact = true;
  check_random_round_trips(2.0, 1.0, &worst_abs, &worst_range, &extrema_exact);
  CHECK(extrema_exact);
  CHECK(worst_abs < 1e-6);
}

TEST_CASE("normalization round trip relative to the DOF range for large magnitudes") {
  double worst_abs = 0.0, worst_range = 0.0;
  bool extrema_exact = true;
  check_random_round_trips(100.0, 3.0, &worst_abs, &worst_range, &extrema_exact);
  CHECK(extrema_exact);
  CHECK(worst_range < 1e-6);
}

TEST_CASE("normalization map JSON round trip") {
  NormalizationMap m{{1.5, 2.0}, {-1.0, 3.0}, 0.7};
  const nlohmann::json j = m;
  const auto back = j.get<NormalizationMap>();
  CHECK(back.scale == m.scale);
  CHECK(back.offset == m.offset);
  CHECK(back.target_half_range == 0.7);
}
