#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ocd/prime.hpp"
#include "ocd/reference.hpp"
#include "ocd/rng.hpp"
#include "ocd/simulate.hpp"
#include "ocd/stats.hpp"

using namespace ocd;

namespace {

DetectorConfig basic_config(int p, double beta = 1.0) {
  DetectorConfig cfg;
  cfg.p = p;
  cfg.beta = beta;
  cfg.gamma = 100.0;
  return cfg;
}

std::vector<std::vector<double>> random_stream(int p, int n, std::uint64_t s) {
  Rng rng(s);
  std::vector<std::vector<double>> xs(n, std::vector<double>(p));
  for (auto& row : xs)
    for (double& v : row) v = rng.gaussian();
  return xs;
}

bool snapshots_equal(const StatSnapshot& a, const StatSnapshot& b) {
  if (a.n != b.n || a.s_diag != b.s_diag || !(a.argmax_diag == b.argmax_diag))
    return false;
  if (a.s_off != b.s_off) return false;
  if (a.argmax_off != b.argmax_off) return false;
  return true;
}

}  // namespace

TEST_CASE("off statistics vanish identically at p=1", "[stats]") {
  const DetectorConfig cfg = basic_config(1);
  const ScaleGrid grid = build_grid(cfg);
  OcdEngine engine(cfg, grid);
  Rng rng(7);
  std::vector<double> x(1);
  for (int n = 0; n < 200; ++n) {
    x[0] = rng.gaussian();
    const StatSnapshot& snap = engine.step(x);
    CHECK(snap.s_off_dense() == 0.0);
    CHECK(snap.s_off_sparse() == 0.0);
  }
}

TEST_CASE("p=1 worked example at scale b=1", "[stats]") {
  const DetectorConfig cfg = basic_config(1);
  const ScaleGrid grid = build_grid(cfg);
  REQUIRE(grid.b_values[0] == 1.0);
  OcdEngine engine(cfg, grid);

  auto r_at_scale0 = [&] {
    return detail::r_statistic(1.0, engine.column(0, 0)[0],
                               engine.tail_length(0, 0));
  };
  const StatSnapshot& s1 = engine.step(std::vector<double>{1.0});
  CHECK(s1.s_diag == Catch::Approx(0.5));  // b=1 dominates the grid here
  CHECK(r_at_scale0() == Catch::Approx(0.5));
  CHECK(engine.tail_length(0, 0) == 1);
  engine.step(std::vector<double>{-2.0});
  CHECK(r_at_scale0() == 0.0);
  CHECK(engine.tail_length(0, 0) == 0);
  const StatSnapshot& s3 = engine.step(std::vector<double>{1.5});
  CHECK(s3.s_diag == Catch::Approx(1.0));
  CHECK(r_at_scale0() == Catch::Approx(1.0));
  CHECK(engine.tail_length(0, 0) == 1);
}

TEST_CASE("all-zero stream keeps every statistic at zero", "[stats]") {
  const DetectorConfig cfg = basic_config(3, 0.8);
  const ScaleGrid grid = build_grid(cfg);
  OcdEngine engine(cfg, grid);
  const std::vector<double> x(3, 0.0);
  for (int n = 0; n < 50; ++n) {
    const StatSnapshot& snap = engine.step(x);
    CHECK(snap.s_diag == 0.0);
    CHECK(snap.s_off_dense() == 0.0);
    CHECK(snap.s_off_sparse() == 0.0);
    for (std::size_t si = 0; si < grid.size(); ++si)
      for (int j = 0; j < 3; ++j) CHECK(engine.tail_length(j, si) == 0);
  }
}

TEST_CASE("streaming (R, t) matches the brute-force oracle", "[stats]") {
  Rng beta_rng(12345);
  for (int rep = 0; rep < 6; ++rep) {
    const int p = 1 + static_cast<int>(beta_rng.uniform_int(5));
    const double beta = 0.25 * std::pow(2.0, 4.0 * beta_rng.uniform());
    const DetectorConfig cfg = basic_config(p, beta);
    const ScaleGrid grid = build_grid(cfg);
    const int n = 300;
    const auto xs = random_stream(p, n, 1000 + rep);

    OcdEngine engine(cfg, grid);
    std::vector<std::vector<std::int64_t>> t_hist(
        grid.size() * p, std::vector<std::int64_t>());
    std::vector<std::vector<double>> r_hist(grid.size() * p);
    for (const auto& x : xs) {
      engine.step(x);
      for (std::size_t si = 0; si < grid.size(); ++si)
        for (int j = 0; j < p; ++j) {
          t_hist[si * p + j].push_back(engine.tail_length(j, si));
          const auto col = engine.column(j, si);
          r_hist[si * p + j].push_back(detail::r_statistic(
              grid.b_values[si], col[j], engine.tail_length(j, si)));
        }
    }
    for (std::size_t si = 0; si < grid.size(); ++si) {
      for (int j = 0; j < p; ++j) {
        std::vector<double> coord(n);
        for (int i = 0; i < n; ++i) coord[i] = xs[i][j];
        const auto traj = reference::r_trajectory(coord, grid.b_values[si]);
        for (int i = 0; i < n; ++i) {
          REQUIRE(r_hist[si * p + j][i] ==
                  Catch::Approx(traj[i].r).margin(1e-9));
          REQUIRE(t_hist[si * p + j][i] == traj[i].t);
        }
      }
    }
  }
}

TEST_CASE("R non-negativity and reset coupling", "[stats]") {
  const DetectorConfig cfg = basic_config(4, 1.2);
  const ScaleGrid grid = build_grid(cfg);
  OcdEngine engine(cfg, grid);
  const auto xs = random_stream(4, 400, 77);
  for (const auto& x : xs) {
    engine.step(x);
    for (std::size_t si = 0; si < grid.size(); ++si)
      for (int j = 0; j < 4; ++j) {
        const std::int64_t t = engine.tail_length(j, si);
        const auto col = engine.column(j, si);
        const double r = detail::r_statistic(grid.b_values[si], col[j], t);
        REQUIRE(r >= 0.0);
        if (t == 0)
          for (double v : col) REQUIRE(v == 0.0);
      }
  }
}

TEST_CASE("off statistic matches direct evaluation from retained history",
          "[stats]") {
  const DetectorConfig cfg = basic_config(5, 0.9);
  const ScaleGrid grid = build_grid(cfg);
  OcdEngine engine(cfg, grid);
  const auto xs = random_stream(5, 200, 4242);
  std::vector<std::vector<double>> history;
  const auto a_levels = cfg.a_levels();
  for (const auto& x : xs) {
    history.push_back(x);
    const StatSnapshot& snap = engine.step(x);
    for (std::size_t lvl = 0; lvl < a_levels.size(); ++lvl) {
      double best = 0.0;
      for (std::size_t si = 0; si < grid.core_count; ++si)
        for (int j = 0; j < 5; ++j) {
          const std::int64_t t = engine.tail_length(j, si);
          std::vector<double> sums(5);
          for (int k = 0; k < 5; ++k)
            sums[k] = reference::window_sum(history, k, t);
          best = std::max(best,
                          reference::q_direct(sums, j, t, a_levels[lvl]));
        }
      REQUIRE(snap.s_off[lvl] == Catch::Approx(best).margin(1e-9));
    }
  }
}

TEST_CASE("hard thresholding is monotone in a", "[stats]") {
  DetectorConfig lo = basic_config(6);
  DetectorConfig hi = basic_config(6);
  lo.a_dense = 0.3;
  hi.a_dense = 0.7;
  const ScaleGrid grid = build_grid(lo);
  OcdEngine e_lo(lo, grid), e_hi(hi, grid);
  const auto xs = random_stream(6, 300, 5);
  for (const auto& x : xs) {
    const double q_lo = e_lo.step(x).s_off_dense();
    const double q_hi = e_hi.step(x).s_off_dense();
    // exact per pair up to the rounding of the anchor's own term
    REQUIRE(q_lo >= q_hi - 1e-9 * std::max(1.0, q_hi));
    REQUIRE(q_hi >= 0.0);
  }
}

TEST_CASE("dense dominates sparse within one snapshot", "[stats]") {
  const DetectorConfig cfg = basic_config(8);
  const ScaleGrid grid = build_grid(cfg);
  OcdEngine engine(cfg, grid);
  const auto xs = random_stream(8, 300, 6);
  for (const auto& x : xs) {
    const StatSnapshot& snap = engine.step(x);
    REQUIRE(snap.s_off_dense() >= snap.s_off_sparse());
    REQUIRE(snap.s_off_sparse() >= 0.0);
    REQUIRE(snap.s_diag >= 0.0);
  }
}

TEST_CASE("dedup path is bit-identical to the naive path", "[stats]") {
  for (int p : {1, 3, 8}) {
    const DetectorConfig cfg = basic_config(p, 0.8);
    const ScaleGrid grid = build_grid(cfg);
    OcdEngine naive(cfg, grid);
    OcdDedupEngine dedup(cfg, grid);
    const auto xs = random_stream(p, 500, 900 + p);
    for (const auto& x : xs) {
      const StatSnapshot& a = naive.step(x);
      const StatSnapshot& b = dedup.step(x);
      REQUIRE(snapshots_equal(a, b));
    }
  }
}

TEST_CASE("dedup with drift still matches naive", "[stats]") {
  const DetectorConfig cfg = basic_config(6, 1.0);
  const ScaleGrid grid = build_grid(cfg);
  OcdEngine naive(cfg, grid);
  OcdDedupEngine dedup(cfg, grid);
  Rng dir_rng(3);
  const ChangeSpec spec = make_change_spec(6, 2, 1.5, 100, dir_rng);
  GaussianStreamSource src(spec, 31);
  std::vector<double> x;
  for (int n = 0; n < 400; ++n) {
    src.next(x);
    REQUIRE(snapshots_equal(naive.step(x), dedup.step(x)));
  }
}

TEST_CASE("distinct tail count collapses on an all-zero stream", "[stats]") {
  const DetectorConfig cfg = basic_config(5);
  const ScaleGrid grid = build_grid(cfg);
  OcdDedupEngine engine(cfg, grid);
  const std::vector<double> x(5, 0.0);
  for (int n = 0; n < 40; ++n) {
    engine.step(x);
    CHECK(engine.distinct_tail_count() == 1);
  }
}

TEST_CASE("distinct tail count stays small on a spike stream", "[stats]") {
  const DetectorConfig cfg = basic_config(6, 1.0);
  const ScaleGrid grid = build_grid(cfg);
  OcdDedupEngine engine(cfg, grid);
  std::vector<double> x(6, 0.0);
  x[0] = cfg.beta;
  for (int n = 0; n < 300; ++n) {
    engine.step(x);
    CHECK(engine.distinct_tail_count() <= grid.size() + 1);
  }
}

TEST_CASE("state footprint is constant in n", "[stats]") {
  const DetectorConfig cfg = basic_config(4, 0.6);
  const ScaleGrid grid = build_grid(cfg);
  OcdEngine engine(cfg, grid);
  const auto xs = random_stream(4, 200, 8);
  engine.step(xs[0]);
  const StateFootprint first = engine.footprint();
  const std::size_t G = grid.size();
  CHECK(first.ints == 2 * 4 * G);
  CHECK(first.reals == 4 * 4 * G);
  for (int i = 1; i < 200; ++i) engine.step(xs[i]);
  CHECK(engine.footprint() == first);
}

TEST_CASE("input validation", "[stats]") {
  const DetectorConfig cfg = basic_config(3);
  const ScaleGrid grid = build_grid(cfg);
  OcdEngine engine(cfg, grid);
  CHECK_THROWS_AS(engine.step(std::vector<double>{1.0, 2.0}), DataError);
  CHECK_THROWS_AS(
      engine.step(std::vector<double>{1.0, std::nan(""), 0.0}), DataError);
  const std::vector<double> inf_row = {1.0, 0.0,
                                       std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(engine.step(inf_row), DataError);
}
