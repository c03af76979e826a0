#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ocd/calibrate.hpp"
#include "ocd/detector.hpp"
#include "ocd/simulate.hpp"

using namespace ocd;

namespace {

DetectorConfig config_for(int p, double beta, double gamma) {
  DetectorConfig cfg;
  cfg.p = p;
  cfg.beta = beta;
  cfg.gamma = gamma;
  return cfg;
}

}  // namespace

TEST_CASE("psi threshold map", "[detector]") {
  CHECK(psi_threshold(10, 2.0) == Catch::Approx(17.0).epsilon(1e-14));
  for (int p : {1, 2, 7, 100}) CHECK(psi_threshold(p, 0.0) == p - 1);
}

TEST_CASE("theoretical threshold formulas", "[detector]") {
  const DetectorConfig cfg = config_for(100, 2.0, 5000.0);
  const ThresholdSet adaptive =
      theoretical_thresholds(cfg, ThresholdMode::adaptive);
  CHECK(adaptive.t_diag ==
        Catch::Approx(std::log(24.0 * 100 * 5000 * log2_real(400.0)))
            .epsilon(1e-14));
  CHECK(adaptive.t_diag == Catch::Approx(18.46).margin(0.01));
  const double t_tilde = 2.0 * std::log(24.0 * 100 * 5000 * log2_real(200.0));
  CHECK(adaptive.t_off_dense ==
        Catch::Approx(psi_threshold(100, t_tilde)).epsilon(1e-14));
  CHECK(adaptive.t_off_sparse ==
        Catch::Approx(8.0 * std::log(24.0 * 100 * 5000 * log2_real(200.0)))
            .epsilon(1e-14));
  CHECK(adaptive.source == ThresholdSource::theoretical_adaptive);

  const ThresholdSet dense = theoretical_thresholds(cfg, ThresholdMode::dense);
  CHECK(dense.t_diag ==
        Catch::Approx(std::log(16.0 * 100 * 5000 * log2_real(400.0))));
  CHECK(dense.t_off_dense ==
        Catch::Approx(psi_threshold(
            100, 2.0 * std::log(16.0 * 100 * 5000 * log2_real(200.0)))));
  CHECK(std::isinf(dense.t_off_sparse));

  const ThresholdSet sparse =
      theoretical_thresholds(cfg, ThresholdMode::sparse);
  CHECK(sparse.t_off_sparse ==
        Catch::Approx(8.0 * std::log(16.0 * 100 * 5000 * log2_real(200.0))));
  CHECK(std::isinf(sparse.t_off_dense));

  CHECK_THROWS_AS(
      theoretical_thresholds(config_for(1, 1.0, 10.0), ThresholdMode::sparse),
      ConfigError);
}

TEST_CASE("unreachable thresholds censor at max_n", "[detector]") {
  const DetectorConfig cfg = config_for(4, 1.0, 100.0);
  const ScaleGrid grid = build_grid(cfg);
  ThresholdSet thr;
  thr.t_diag = thr.t_off_dense = thr.t_off_sparse = 1e300;
  GaussianStreamSource src(ChangeSpec::null_stream(4), 5);
  const RunResult res = run_detector(src, cfg, grid, thr, 150);
  CHECK(res.censored());
  CHECK(res.n_processed == 150);
}

TEST_CASE("deterministic spike stream declares via diag", "[detector]") {
  const DetectorConfig cfg = config_for(6, 1.0, 1000.0);
  const ScaleGrid grid = build_grid(cfg);
  const ThresholdSet thr =
      theoretical_thresholds(cfg, ThresholdMode::dense);
  std::vector<double> x(6, 0.0);
  x[0] = cfg.beta;
  FunctionSource src([&x](std::vector<double>& out) {
    out = x;
    return true;
  });
  const RunResult res = run_detector(src, cfg, grid, thr, 100000);
  REQUIRE(res.declared());
  const Declaration& d = *res.declaration;
  CHECK(std::find(d.triggered.begin(), d.triggered.end(), StatKind::diag) !=
        d.triggered.end());
  CHECK(d.anchor.coord == 0);
  CHECK(d.statistic_value >= thr.t_diag);
}

TEST_CASE("declaration is a stopping time: replays are identical",
          "[detector]") {
  const DetectorConfig cfg = config_for(5, 1.0, 200.0);
  const ScaleGrid grid = build_grid(cfg);
  const auto xs = generate_stream(ChangeSpec::null_stream(5), 300, 99);
  auto run_prefix = [&](std::size_t len) {
    auto engine = make_engine(cfg, grid);
    std::vector<StatSnapshot> snaps;
    for (std::size_t i = 0; i < len; ++i) snaps.push_back(engine->step(xs[i]));
    return snaps;
  };
  const auto full = run_prefix(300);
  const auto half = run_prefix(150);
  for (std::size_t i = 0; i < half.size(); ++i) {
    CHECK(full[i].s_diag == half[i].s_diag);
    CHECK(full[i].s_off == half[i].s_off);
  }
}

TEST_CASE("raising one threshold never decreases N", "[detector]") {
  const DetectorConfig cfg = config_for(5, 1.5, 100.0);
  const ScaleGrid grid = build_grid(cfg);
  Rng dir_rng(17);
  const ChangeSpec spec = make_change_spec(5, 2, 1.5, 20, dir_rng);
  ThresholdSet base;
  base.t_diag = 4.0;
  base.t_off_dense = 12.0;
  base.t_off_sparse = 9.0;
  auto run_with = [&](const ThresholdSet& t) {
    GaussianStreamSource src(spec, 1234);
    const RunResult r = run_detector(src, cfg, grid, t, 5000);
    REQUIRE(r.declared());
    return r.declaration->n;
  };
  const std::int64_t n0 = run_with(base);
  for (int which = 0; which < 3; ++which) {
    ThresholdSet t = base;
    (which == 0 ? t.t_diag : which == 1 ? t.t_off_dense : t.t_off_sparse) *=
        1.5;
    CHECK(run_with(t) >= n0);
  }
}

TEST_CASE("adaptive N equals the minimum of single-statistic runs",
          "[detector]") {
  const DetectorConfig cfg = config_for(6, 1.0, 100.0);
  const ScaleGrid grid = build_grid(cfg);
  Rng dir_rng(3);
  const ChangeSpec spec = make_change_spec(6, 3, 1.2, 10, dir_rng);
  ThresholdSet all;
  all.t_diag = 5.0;
  all.t_off_dense = 14.0;
  all.t_off_sparse = 10.0;
  const double inf = std::numeric_limits<double>::infinity();
  auto run_with = [&](double td, double tod, double tos) {
    ThresholdSet t;
    t.t_diag = td;
    t.t_off_dense = tod;
    t.t_off_sparse = tos;
    GaussianStreamSource src(spec, 777);
    const RunResult r = run_detector(src, cfg, grid, t, 20000);
    REQUIRE(r.declared());
    return r.declaration->n;
  };
  const std::int64_t n_all = run_with(all.t_diag, all.t_off_dense,
                                      all.t_off_sparse);
  const std::int64_t n_diag = run_with(all.t_diag, inf, inf);
  const std::int64_t n_dense = run_with(inf, all.t_off_dense, inf);
  const std::int64_t n_sparse = run_with(inf, inf, all.t_off_sparse);
  CHECK(n_all == std::min({n_diag, n_dense, n_sparse}));
}

TEST_CASE("null patience bound P0(N <= m) <= m/(4 gamma)", "[detector]") {
  const DetectorConfig cfg = config_for(20, 1.0, 500.0);
  const ScaleGrid grid = build_grid(cfg);
  const ThresholdSet thr =
      theoretical_thresholds(cfg, ThresholdMode::adaptive);
  const std::size_t reps = 200;
  const auto gamma_n = static_cast<std::int64_t>(cfg.gamma);
  std::vector<std::int64_t> ns(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    GaussianStreamSource src(ChangeSpec::null_stream(20),
                             derive_seed(4242, seed_tag::null_run, r));
    const RunResult res = run_detector(src, cfg, grid, thr, gamma_n);
    ns[r] = res.declared() ? res.declaration->n : gamma_n + 1;
  }
  for (std::int64_t m : {gamma_n / 10, gamma_n / 2, gamma_n}) {
    std::size_t count = 0;
    for (auto n : ns)
      if (n <= m) ++count;
    const double frac = static_cast<double>(count) / reps;
    const double bound = static_cast<double>(m) / (4.0 * cfg.gamma);
    // two-sided binomial sampling slack at the bound value
    const double slack =
        3.0 * std::sqrt(bound * (1.0 - bound) / static_cast<double>(reps));
    CHECK(frac <= bound + slack);
  }
}
