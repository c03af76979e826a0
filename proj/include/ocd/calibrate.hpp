#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ocd/detector.hpp"
#include "ocd/parallel.hpp"
#include "ocd/rng.hpp"
#include "ocd/simulate.hpp"

namespace ocd {

// Index (1-based) of the (1/e)-quantile order statistic: floor(B/e) of the
// ascending sort. Floor keeps the estimate conservative for patience.
inline std::size_t quantile_index(std::size_t b_reps) {
  return static_cast<std::size_t>(
      std::floor(static_cast<double>(b_reps) / std::exp(1.0)));
}

inline double quantile_1_over_e(std::vector<double> values) {
  const std::size_t k = quantile_index(values.size());
  if (k == 0)
    throw std::invalid_argument("quantile_1_over_e: too few replications");
  std::sort(values.begin(), values.end());
  return values[k - 1];
}

struct StatMaxima {
  double diag = 0.0;
  double off_dense = 0.0;
  double off_sparse = 0.0;
  double by_kind(StatKind k) const {
    switch (k) {
      case StatKind::diag: return diag;
      case StatKind::off_dense: return off_dense;
      case StatKind::off_sparse: return off_sparse;
    }
    return 0.0;
  }
};

// Per-replication maxima over n in [gamma] of the three statistics on i.i.d.
// null streams. Replication r uses the sub-seed derived from (seed, tag, r),
// so any parallel schedule gives identical results.
inline std::vector<StatMaxima> null_statistic_maxima(
    const DetectorConfig& config, const ScaleGrid& grid, std::size_t b_reps,
    std::uint64_t seed, std::uint64_t tag, unsigned threads = 0) {
  const auto gamma_n = static_cast<std::int64_t>(config.gamma);
  std::vector<StatMaxima> out(b_reps);
  parallel_for(
      b_reps,
      [&](std::size_t r) {
        GaussianStreamSource src(ChangeSpec::null_stream(config.p),
                                 derive_seed(seed, tag, r));
        auto engine = make_engine(config, grid);
        std::vector<double> x;
        StatMaxima m;
        for (std::int64_t n = 0; n < gamma_n; ++n) {
          src.next(x);
          const StatSnapshot& snap = engine->step(x);
          m.diag = std::max(m.diag, snap.s_diag);
          m.off_dense = std::max(m.off_dense, snap.s_off_dense());
          m.off_sparse = std::max(m.off_sparse, snap.s_off_sparse());
          if (!std::isfinite(snap.s_diag) ||
              !std::isfinite(snap.s_off_dense()) ||
              !std::isfinite(snap.s_off_sparse()))
            throw std::runtime_error("calibrate: non-finite statistic");
        }
        out[r] = m;
      },
      threads);
  return out;
}

// Individual threshold for one statistic: the (1/e)-quantile of the
// replication maxima V^(r) = max_{n in [gamma]} S_n.
inline double calibrate_individual(const DetectorConfig& config,
                                   const ScaleGrid& grid, StatKind statistic,
                                   std::size_t b_reps, std::uint64_t seed,
                                   unsigned threads = 0) {
  if (b_reps < 20)
    throw std::invalid_argument("calibrate_individual: B_reps must be >= 20");
  const auto maxima = null_statistic_maxima(
      config, grid, b_reps, seed, seed_tag::calibrate_individual, threads);
  std::vector<double> v(b_reps);
  for (std::size_t r = 0; r < b_reps; ++r) v[r] = maxima[r].by_kind(statistic);
  return quantile_1_over_e(std::move(v));
}

struct IndividualThresholds {
  double diag = 0.0;
  double off_dense = 0.0;
  double off_sparse = 0.0;
};

inline IndividualThresholds calibrate_all_individual(
    const DetectorConfig& config, const ScaleGrid& grid, std::size_t b_reps,
    std::uint64_t seed, unsigned threads = 0) {
  if (b_reps < 20)
    throw std::invalid_argument("calibrate: B_reps must be >= 20");
  const auto maxima = null_statistic_maxima(
      config, grid, b_reps, seed, seed_tag::calibrate_individual, threads);
  std::vector<double> vd(b_reps), vod(b_reps), vos(b_reps);
  for (std::size_t r = 0; r < b_reps; ++r) {
    vd[r] = maxima[r].diag;
    vod[r] = maxima[r].off_dense;
    vos[r] = maxima[r].off_sparse;
  }
  return {quantile_1_over_e(std::move(vd)), quantile_1_over_e(std::move(vod)),
          quantile_1_over_e(std::move(vos))};
}

// Combined rescaling on fresh simulations: W^(r) is the running maximum of
// the three threshold-normalized statistics, and every individual threshold
// is scaled by the (1/e)-quantile of {W^(r)}. Degenerate zero individual
// thresholds (the off statistics at p = 1) are replaced by 1 before
// normalization; the corresponding statistics then never trigger.
inline ThresholdSet calibrate_combined(const DetectorConfig& config,
                                       const ScaleGrid& grid,
                                       IndividualThresholds individual,
                                       std::size_t b_reps, std::uint64_t seed,
                                       unsigned threads = 0) {
  if (b_reps < 20)
    throw std::invalid_argument("calibrate_combined: B_reps must be >= 20");
  if (individual.diag == 0.0) individual.diag = 1.0;
  if (individual.off_dense == 0.0) individual.off_dense = 1.0;
  if (individual.off_sparse == 0.0) individual.off_sparse = 1.0;
  if (individual.diag < 0.0 || individual.off_dense < 0.0 ||
      individual.off_sparse < 0.0)
    throw std::invalid_argument("calibrate_combined: negative threshold");
  const auto maxima = null_statistic_maxima(
      config, grid, b_reps, seed, seed_tag::calibrate_combined, threads);
  std::vector<double> w(b_reps);
  for (std::size_t r = 0; r < b_reps; ++r) {
    w[r] = std::max({maxima[r].diag / individual.diag,
                     maxima[r].off_dense / individual.off_dense,
                     maxima[r].off_sparse / individual.off_sparse});
  }
  const double t_comb = quantile_1_over_e(std::move(w));
  ThresholdSet out;
  out.t_diag = individual.diag * t_comb;
  out.t_off_dense = individual.off_dense * t_comb;
  out.t_off_sparse = individual.off_sparse * t_comb;
  out.source = ThresholdSource::monte_carlo;
  return out;
}

inline constexpr std::size_t kDefaultCalibrationReps = 200;

// Full Monte Carlo calibration: individual pass, then combined rescaling.
inline ThresholdSet calibrate_thresholds(
    const DetectorConfig& config, const ScaleGrid& grid,
    std::size_t b_reps = kDefaultCalibrationReps, std::uint64_t seed = 1,
    unsigned threads = 0) {
  const auto individual =
      calibrate_all_individual(config, grid, b_reps, seed, threads);
  return calibrate_combined(config, grid, individual, b_reps, seed, threads);
}

// Kolmogorov--Smirnov distance between the empirical law of the run lengths,
// normalized by median / ln 2, and the Exp(1) distribution.
inline double exponentiality_check(std::vector<std::int64_t> run_lengths) {
  if (run_lengths.size() < 50)
    throw std::invalid_argument("exponentiality_check: need >= 50 run lengths");
  std::sort(run_lengths.begin(), run_lengths.end());
  const std::size_t n = run_lengths.size();
  const double median =
      n % 2 == 1 ? static_cast<double>(run_lengths[n / 2])
                 : 0.5 * static_cast<double>(run_lengths[n / 2 - 1] +
                                             run_lengths[n / 2]);
  const double scale = median / std::log(2.0);
  double dist = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(run_lengths[i]) / scale;
    const double cdf = 1.0 - std::exp(-x);
    const double lo = static_cast<double>(i) / static_cast<double>(n);
    const double hi = static_cast<double>(i + 1) / static_cast<double>(n);
    dist = std::max({dist, std::abs(cdf - lo), std::abs(hi - cdf)});
  }
  return dist;
}

}  // namespace ocd
