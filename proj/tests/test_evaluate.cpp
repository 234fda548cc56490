#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "lshrom/error.hpp"
#include "lshrom/evaluate.hpp"
#include "test_util.hpp"

using namespace lshrom;

namespace {

FieldVariable random_field(std::mt19937_64& rng, std::size_t n_t, std::size_t n_dof) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  FieldVariable f("u", n_t, n_dof);
  for (auto& v : f.values) v = n(rng);
  return f;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

RomReport sample_report(std::mt19937_64& rng) {
  RomReport r;
  const auto truth = random_field(rng, 6, 9);
  for (const char* method : {"lsh_vae", "cae"}) {
    for (double p : {0.85, 0.95}) {
      auto rom = truth;
      for (auto& v : rom.values) v += 0.05f * static_cast<float>(rng() % 7) - 0.15f;
      r.rows.push_back(evaluate_method(method, p, rom, truth));
    }
  }
  r.timing = timing_report(10.0, 5, 3.0, 0.01);
  return r;
}

}  // namespace

TEST_CASE("field_error: identical fields") {
  std::mt19937_64 rng(1);
  const auto f = random_field(rng, 5, 4);
  const auto e = field_error(f, f);
  REQUIRE(e.rel_l2);
  CHECK(*e.rel_l2 == 0.0);
  CHECK(e.max_abs == 0.0);
  for (float v : e.discrepancy.values) CHECK(v == 0.0f);
  CHECK(e.rel_l2_per_step.size() == 5);
}

TEST_CASE("field_error: constant offset on a unit-norm truth") {
  std::mt19937_64 rng(2);
  auto truth = random_field(rng, 8, 5);
  double n2 = 0.0;
  for (float v : truth.values) n2 += double(v) * v;
  for (auto& v : truth.values) v = static_cast<float>(v / std::sqrt(n2));
  auto rom = truth;
  for (auto& v : rom.values) v += 0.1f;
  double norm = 0.0;
  for (float v : truth.values) norm += double(v) * v;
  const double m = static_cast<double>(truth.values.size());
  const auto e = field_error(rom, truth);
  CHECK(*e.rel_l2 == doctest::Approx(0.1 * std::sqrt(m) / std::sqrt(norm)).epsilon(1e-5));
  CHECK(e.max_abs == doctest::Approx(0.1).epsilon(1e-5));
  CHECK(e.discrepancy.at(3, 2) == doctest::Approx(0.1f));
}

TEST_CASE("property: field_error is scale invariant, zero iff equal, max_abs symmetric") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_field(rng, 1 + trial % 7, 1 + trial % 5);
    const auto b = random_field(rng, a.n_t, a.n_dof);
    const double s = scale(rng);
    auto as = a, bs = b;
    for (auto& v : as.values) v = static_cast<float>(v * s);
    for (auto& v : bs.values) v = static_cast<float>(v * s);
    CHECK(*field_error(as, bs).rel_l2 == doctest::Approx(*field_error(a, b).rel_l2).epsilon(1e-5));
    CHECK(field_error(a, b).max_abs == field_error(b, a).max_abs);
    CHECK(*field_error(a, b).rel_l2 > 0.0);
  }
}

TEST_CASE("field_error: zero-norm truth and shape mismatch") {
  FieldVariable zero("u", 3, 2);
  FieldVariable rom("u", 3, 2);
  rom.values = {0, 0.5f, 0, 0, -0.25f, 0};
  const auto e = field_error(rom, zero);
  CHECK_FALSE(e.rel_l2.has_value());
  CHECK(e.max_abs == 0.5);
  for (double v : e.rel_l2_per_step) CHECK(std::isnan(v));
  CHECK_THROWS_AS(field_error(FieldVariable("u", 2, 3), zero), ConfigError);
}

TEST_CASE("timing ledger reproduces the published speed-ups") {
  const auto th = timing_report(763.1, 7, 0.0, 0.11);
  CHECK(th.per_query_fom_hours == doctest::Approx(109.0).epsilon(1e-3));
  CHECK(th.speedup == doctest::Approx(991.0).epsilon(1e-3));
  // Reported as an integer factor, like the published 990.
  CHECK(std::abs(std::round(th.speedup) - 990.0) <= 1.0);
  const auto flow = timing_report(193.7, 7, 0.0, 2.02);
  CHECK(flow.per_query_fom_hours == doctest::Approx(27.67).epsilon(1e-3));
  CHECK(flow.speedup == doctest::Approx(13.7).epsilon(2e-3));
  CHECK(std::abs(std::round(flow.speedup) - 14.0) <= 1.0);
  const auto one = timing_report(7.0, 7, 1.0, 1.0);
  CHECK(one.speedup == 1.0);
  CHECK_THROWS_AS(timing_report(7.0, 7, 1.0, 0.0), ConfigError);
  CHECK_THROWS_AS(timing_report(0.0, 7, 1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(timing_report(7.0, 0, 1.0, 1.0), ConfigError);
}

TEST_CASE("cost crossover solves the linear intersection") {
  const auto t = timing_report(70.0, 7, 20.0, 0.5);
  // 10 n = 90 + 0.5 n.
  CHECK(cost_crossover(t) == doctest::Approx(90.0 / 9.5));
  const auto never = timing_report(7.0, 7, 1.0, 2.0);
  CHECK(std::isinf(cost_crossover(never)));
  const nlohmann::json j = t;
  CHECK(j["speedup"].get<double>() == doctest::Approx(20.0));
  CHECK(j["cost_crossover_queries"].get<double>() == doctest::Approx(90.0 / 9.5));
}

TEST_CASE("cost lines CSV crosses where the formula says") {
  RomReport r;
  r.timing = timing_report(70.0, 7, 20.0, 0.5);
  const auto dir = testutil::scratch_dir("cost");
  emit_plots(r, dir);
  std::ifstream in(dir / "cost_lines.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "queries,fom_hours,rom_hours");
  double prev_n = 0, prev_gap = 0;
  bool found = false;
  for (int row = 0; std::getline(in, line); ++row) {
    std::istringstream ls(line);
    double n, fom, rom;
    char c;
    ls >> n >> c >> fom >> c >> rom;
    CHECK(fom == doctest::Approx(10.0 * n));
    CHECK(rom == doctest::Approx(90.0 + 0.5 * n));
    const double gap = fom - rom;
    if (row > 0 && prev_gap < 0 && gap >= 0) {
      const double cross = prev_n + (n - prev_n) * (-prev_gap) / (gap - prev_gap);
      CHECK(cross == doctest::Approx(90.0 / 9.5).epsilon(1e-9));
      found = true;
    }
    prev_n = n;
    prev_gap = gap;
  }
  CHECK(found);
  CHECK(std::filesystem::exists(dir / "cost_lines.png"));
}

TEST_CASE("discrepancy image: blank for zero error, signed colours otherwise") {
  FieldVariable zero("u", 4, 3);
  const auto blank = discrepancy_image(zero, 1.0);
  CHECK(blank.width == 3);
  CHECK(blank.height == 4);
  for (auto v : blank.rgb) CHECK(v == 255);
  for (auto v : discrepancy_image(zero, 0.0).rgb) CHECK(v == 255);

  FieldVariable d("u", 1, 2);
  d.values = {1.0f, -1.0f};
  const auto img = discrepancy_image(d, 1.0);
  CHECK(img.rgb[0] == 255);
  CHECK(img.rgb[1] == 0);
  CHECK(img.rgb[2] == 0);
  CHECK(img.rgb[3] == 0);
  CHECK(img.rgb[4] == 0);
  CHECK(img.rgb[5] == 255);
}

TEST_CASE("report emission is deterministic and complete") {
  std::mt19937_64 rng(4);
  const auto report = sample_report(rng);
  const auto d1 = testutil::scratch_dir("emit1"), d2 = testutil::scratch_dir("emit2");
  const auto files = emit_plots(report, d1);
  emit_plots(report, d2);
  write_report(report, d1);
  write_report(report, d2);
  CHECK(files.size() == 4 + 4);
  for (const auto& f : files) {
    CHECK(std::filesystem::file_size(f) > 0);
    CHECK(slurp(f) == slurp(d2 / f.filename()));
  }
  for (const char* name : {"report.json", "errors.csv", "per_step.csv"}) CHECK(slurp(d1 / name) == slurp(d2 / name));
  const auto j = nlohmann::json::parse(slurp(d1 / "report.json"));
  CHECK(j["rows"].size() == 4);
  CHECK(j["timing"]["speedup"].get<double>() == doctest::Approx(200.0));
  const std::string per_step = slurp(d1 / "per_step.csv");
  CHECK(std::count(per_step.begin(), per_step.end(), '\n') == 1 + 4 * 6);
}

TEST_CASE("unwritable paths raise") {
  const auto dir = testutil::scratch_dir("unwritable");
  { std::ofstream(dir / "file") << "x"; }
  Image img;
  img.width = img.height = 1;
  img.rgb = {0, 0, 0};
  CHECK_THROWS(write_png(img, dir / "file" / "x.png"));
  std::mt19937_64 rng(5);
  CHECK_THROWS(emit_plots(sample_report(rng), dir / "file" / "plots"));
  CHECK_THROWS(write_report(sample_report(rng), dir / "file" / "report"));
  CHECK_THROWS_AS(write_png(Image{}, dir / "empty.png"), ConfigError);
}
