#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ocd/grid.hpp"

using namespace ocd;

TEST_CASE("grid for p=1", "[grid]") {
  DetectorConfig cfg;
  cfg.p = 1;
  cfg.beta = 1.0;
  const ScaleGrid g = build_grid(cfg);
  REQUIRE(g.size() == 4);
  REQUIRE(g.core_count == 2);
  // B = {+-1/sqrt(log2 2)} = {+-1}, B0 = {+-1/sqrt(2)}
  CHECK(g.b_values[0] == Catch::Approx(1.0).epsilon(1e-15));
  CHECK(g.b_values[1] == Catch::Approx(-1.0).epsilon(1e-15));
  CHECK(g.b_values[2] == Catch::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(g.b_values[3] == Catch::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("grid for p=4", "[grid]") {
  DetectorConfig cfg;
  cfg.p = 4;
  cfg.beta = 1.0;
  const ScaleGrid g = build_grid(cfg);
  REQUIRE(g.size() == 8);
  REQUIRE(g.core_count == 6);
  const double expected[] = {1.0 / std::sqrt(3.0),  1.0 / std::sqrt(6.0),
                             1.0 / std::sqrt(12.0), 1.0 / std::sqrt(24.0)};
  for (int l = 0; l < 4; ++l) {
    CHECK(g.b_values[2 * l] == Catch::Approx(expected[l]).epsilon(1e-15));
    CHECK(g.b_values[2 * l + 1] == Catch::Approx(-expected[l]).epsilon(1e-15));
  }
}

TEST_CASE("grid size is 2(floor(log2 p)+2) across p", "[grid]") {
  for (int p : {1, 2, 3, 4, 7, 8, 15, 16, 100, 1023, 1024, 1000000}) {
    DetectorConfig cfg;
    cfg.p = p;
    cfg.beta = 2.5;
    const ScaleGrid g = build_grid(cfg);
    CHECK(g.size() == 2 * static_cast<std::size_t>(floor_log2(p) + 2));
    // Every core scale lies in [beta/sqrt(p log2(2p)), beta/sqrt(log2(2p))].
    const double log2_2p = std::log(2.0 * p) / std::log(2.0);
    const double lo = cfg.beta / std::sqrt(p * log2_2p) - 1e-12;
    const double hi = cfg.beta / std::sqrt(log2_2p) + 1e-12;
    for (std::size_t i = 0; i < g.core_count; ++i) {
      CHECK(std::abs(g.b_values[i]) >= lo);
      CHECK(std::abs(g.b_values[i]) <= hi);
    }
  }
}

TEST_CASE("grid negation symmetry", "[grid]") {
  for (int p : {1, 5, 64, 321}) {
    DetectorConfig cfg;
    cfg.p = p;
    cfg.beta = 0.7;
    const ScaleGrid g = build_grid(cfg);
    std::vector<double> sorted = g.b_values;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> negrev(sorted.rbegin(), sorted.rend());
    for (double& v : negrev) v = -v;
    CHECK(sorted == negrev);
    for (double v : sorted) CHECK(v != 0.0);
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  }
}

TEST_CASE("build_grid is pure", "[grid]") {
  DetectorConfig cfg;
  cfg.p = 37;
  cfg.beta = 1.3;
  const ScaleGrid a = build_grid(cfg);
  const ScaleGrid b = build_grid(cfg);
  REQUIRE(a.b_values.size() == b.b_values.size());
  for (std::size_t i = 0; i < a.b_values.size(); ++i)
    CHECK(a.b_values[i] == b.b_values[i]);  // bitwise
}

TEST_CASE("config validation", "[grid]") {
  DetectorConfig cfg;
  cfg.p = 0;
  CHECK_THROWS_AS(build_grid(cfg), ConfigError);
  cfg.p = 3;
  cfg.beta = 0.0;
  CHECK_THROWS_AS(build_grid(cfg), ConfigError);
  cfg.beta = -1.0;
  CHECK_THROWS_AS(build_grid(cfg), ConfigError);
  cfg.beta = 1.0;
  cfg.gamma = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.gamma = 1.0;
  cfg.p = 1;
  cfg.a_sparse_mode = SparseMode::theoretical;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("a_sparse choices", "[grid]") {
  DetectorConfig cfg;
  cfg.p = 100;
  CHECK(cfg.a_sparse() == Catch::Approx(std::sqrt(2.0 * std::log(100.0))));
  cfg.a_sparse_mode = SparseMode::theoretical;
  CHECK(cfg.a_sparse() == Catch::Approx(std::sqrt(8.0 * std::log(99.0))));
}

TEST_CASE("config file parsing and overrides", "[grid]") {
  const std::string path = "test_config_tmp.cfg";
  {
    std::ofstream out(path);
    out << "# detector settings\n";
    out << "p = 12\n";
    out << "beta = 0.5\n";
    out << "gamma=2000\n";
    out << "a_sparse_mode = theoretical\n";
    out << "variant = ocd_prime\n";
    out << "dedup = false\n";
  }
  const DetectorConfig cfg = load_config_file(path);
  CHECK(cfg.p == 12);
  CHECK(cfg.beta == 0.5);
  CHECK(cfg.gamma == 2000.0);
  CHECK(cfg.a_sparse_mode == SparseMode::theoretical);
  CHECK(cfg.variant == Variant::ocd_prime);
  CHECK_FALSE(cfg.dedup);
  std::remove(path.c_str());

  DetectorConfig cfg2 = cfg;
  apply_config_entry(cfg2, "beta", "1.25");
  CHECK(cfg2.beta == 1.25);
  CHECK_THROWS_AS(apply_config_entry(cfg2, "nope", "1"), ConfigError);
  CHECK_THROWS_AS(apply_config_entry(cfg2, "p", "abc"), ConfigError);
}
