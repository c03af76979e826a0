#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "ocd/baselines.hpp"
#include "ocd/calibrate.hpp"
#include "ocd/detector.hpp"
#include "ocd/io.hpp"
#include "ocd/parallel.hpp"
#include "ocd/simulate.hpp"

namespace ocd {

// --- patience ---------------------------------------------------------------

struct RunLength {
  std::int64_t n = 0;
  bool declared = false;
};

struct PatienceResult {
  // Mean over the repetitions that declared before the cap; NaN if none did.
  double truncated_mean = std::numeric_limits<double>::quiet_NaN();
  double declared_fraction = 0.0;
  std::vector<RunLength> runs;

  std::vector<std::int64_t> declared_run_lengths() const {
    std::vector<std::int64_t> out;
    for (const RunLength& r : runs)
      if (r.declared) out.push_back(r.n);
    return out;
  }
};

inline PatienceResult estimate_patience(const DetectorConfig& config,
                                        const ScaleGrid& grid,
                                        const ThresholdSet& thresholds,
                                        std::size_t reps, std::int64_t cap,
                                        std::uint64_t seed,
                                        unsigned threads = 0) {
  PatienceResult result;
  result.runs.resize(reps);
  parallel_for(
      reps,
      [&](std::size_t r) {
        GaussianStreamSource src(ChangeSpec::null_stream(config.p),
                                 derive_seed(seed, seed_tag::null_run, r));
        const RunResult run =
            run_detector(src, config, grid, thresholds, cap);
        result.runs[r] = {run.declared() ? run.declaration->n : cap,
                          run.declared()};
      },
      threads);
  double sum = 0.0;
  std::size_t declared = 0;
  for (const RunLength& r : result.runs) {
    if (r.declared) {
      sum += static_cast<double>(r.n);
      ++declared;
    }
  }
  result.declared_fraction =
      static_cast<double>(declared) / static_cast<double>(reps);
  if (declared > 0) result.truncated_mean = sum / static_cast<double>(declared);
  return result;
}

// --- response delay ----------------------------------------------------------

enum class DelayMode { first_trigger, all_three };

struct DelayResult {
  // Per-statistic mean delays (N_stat - z) v 0; populated in all_three mode.
  double delay_diag = std::numeric_limits<double>::quiet_NaN();
  double delay_off_dense = std::numeric_limits<double>::quiet_NaN();
  double delay_off_sparse = std::numeric_limits<double>::quiet_NaN();
  // Fraction of usable repetitions in which each statistic declared first or
  // equal first.
  double share_diag = 0.0;
  double share_off_dense = 0.0;
  double share_off_sparse = 0.0;
  double combined_delay = std::numeric_limits<double>::quiet_NaN();
  std::size_t false_alarms = 0;  // runs with a declaration at or before z
  std::size_t usable_reps = 0;
  std::vector<std::array<std::int64_t, 3>> per_rep;  // N per statistic
};

using SpecFactory = std::function<ChangeSpec(std::size_t rep)>;

inline SpecFactory fixed_spec(ChangeSpec spec) {
  return [spec = std::move(spec)](std::size_t) { return spec; };
}

// The paper's experiment design: each repetition draws a fresh direction
// uniformly from the union of all s-sparse unit spheres.
inline SpecFactory sparse_spec_family(int p, int s, double vartheta,
                                      std::int64_t z, std::uint64_t seed) {
  return [=](std::size_t rep) {
    Rng rng(derive_seed(seed, seed_tag::change_direction, rep));
    return make_change_spec(p, s, vartheta, z, rng);
  };
}

inline DelayResult estimate_delay(const DetectorConfig& config,
                                  const ScaleGrid& grid,
                                  const ThresholdSet& thresholds,
                                  const SpecFactory& spec_for_rep,
                                  std::size_t reps, DelayMode mode,
                                  std::int64_t cap, std::uint64_t seed,
                                  unsigned threads = 0) {
  thresholds.validate();
  DelayResult result;
  result.per_rep.assign(reps, {cap, cap, cap});
  std::vector<std::int64_t> zs(reps, 0);
  parallel_for(
      reps,
      [&](std::size_t r) {
        const ChangeSpec spec = spec_for_rep(r);
        zs[r] = spec.z;
        GaussianStreamSource src(
            spec, derive_seed(seed, seed_tag::change_stream, r));
        auto engine = make_engine(config, grid);
        std::array<std::int64_t, 3> first = {cap, cap, cap};
        std::vector<double> x;
        while (engine->time() < cap) {
          src.next(x);
          const StatSnapshot& snap = engine->step(x);
          const std::int64_t n = snap.n;
          if (first[0] == cap && snap.s_diag >= thresholds.t_diag)
            first[0] = n;
          if (first[1] == cap && snap.s_off_dense() >= thresholds.t_off_dense)
            first[1] = n;
          if (first[2] == cap &&
              snap.s_off_sparse() >= thresholds.t_off_sparse)
            first[2] = n;
          const std::int64_t min_n = std::min({first[0], first[1], first[2]});
          if (mode == DelayMode::first_trigger && min_n < cap) break;
          if (mode == DelayMode::all_three &&
              std::max({first[0], first[1], first[2]}) < cap)
            break;
        }
        result.per_rep[r] = first;
      },
      threads);

  double sum_combined = 0.0;
  std::array<double, 3> sum_stat = {0.0, 0.0, 0.0};
  std::array<std::size_t, 3> first_count = {0, 0, 0};
  for (std::size_t r = 0; r < reps; ++r) {
    const auto& firsts = result.per_rep[r];
    const std::int64_t z = zs[r];
    const std::int64_t min_n = std::min({firsts[0], firsts[1], firsts[2]});
    if (min_n <= z) {
      ++result.false_alarms;
      continue;
    }
    ++result.usable_reps;
    sum_combined += static_cast<double>(min_n - z);
    for (int k = 0; k < 3; ++k) {
      sum_stat[k] += static_cast<double>(
          std::max<std::int64_t>(firsts[k] - z, 0));
      if (firsts[k] == min_n) ++first_count[k];
    }
  }
  if (result.usable_reps > 0) {
    const double u = static_cast<double>(result.usable_reps);
    result.combined_delay = sum_combined / u;
    result.share_diag = static_cast<double>(first_count[0]) / u;
    result.share_off_dense = static_cast<double>(first_count[1]) / u;
    result.share_off_sparse = static_cast<double>(first_count[2]) / u;
    if (mode == DelayMode::all_three) {
      result.delay_diag = sum_stat[0] / u;
      result.delay_off_dense = sum_stat[1] / u;
      result.delay_off_sparse = sum_stat[2] / u;
    }
  }
  return result;
}

// --- baseline methods ---------------------------------------------------------

enum class Method { ocd, ocd_prime, mei, xs, chan };

inline Method parse_method(const std::string& s) {
  if (s == "ocd") return Method::ocd;
  if (s == "ocd_prime") return Method::ocd_prime;
  if (s == "mei") return Method::mei;
  if (s == "xs") return Method::xs;
  if (s == "chan") return Method::chan;
  throw ConfigError("unknown method: " + s);
}

inline const char* to_string(Method m) {
  switch (m) {
    case Method::ocd: return "ocd";
    case Method::ocd_prime: return "ocd_prime";
    case Method::mei: return "mei";
    case Method::xs: return "xs";
    case Method::chan: return "chan";
  }
  return "?";
}

// A per-replication stepper producing a fixed number of statistics per
// observation, used for generic Monte Carlo calibration of the baselines.
using MultiStatStepper =
    std::function<void(std::span<const double>, std::span<double>)>;
using StepperFactory = std::function<MultiStatStepper()>;

inline std::size_t method_stat_count(Method m) {
  switch (m) {
    case Method::ocd:
    case Method::ocd_prime: return 3;
    case Method::mei: return 2;  // coordinate sum and coordinate max
    case Method::xs:
    case Method::chan: return 1;
  }
  return 0;
}

inline StepperFactory make_stepper_factory(Method m,
                                           const DetectorConfig& config,
                                           const ScaleGrid& grid) {
  switch (m) {
    case Method::ocd:
    case Method::ocd_prime: {
      DetectorConfig cfg = config;
      cfg.variant = m == Method::ocd ? Variant::ocd : Variant::ocd_prime;
      return [cfg, grid]() -> MultiStatStepper {
        auto engine = std::shared_ptr<StepEngine>(make_engine(cfg, grid));
        return [engine](std::span<const double> x, std::span<double> out) {
          const StatSnapshot& snap = engine->step(x);
          out[0] = snap.s_diag;
          out[1] = snap.s_off_dense();
          out[2] = snap.s_off_sparse();
        };
      };
    }
    case Method::mei:
      return [p = config.p, beta = config.beta]() -> MultiStatStepper {
        auto det = std::make_shared<MeiDetector>(p, beta);
        return [det](std::span<const double> x, std::span<double> out) {
          const MeiDetector::Stats st = det->step(x);
          out[0] = st.sum_stat;
          out[1] = st.max_stat;
        };
      };
    case Method::xs:
    case Method::chan:
      return [p = config.p,
              params = m == Method::xs ? MixtureParams::xs(config.p)
                                       : MixtureParams::chan(config.p)]()
                 -> MultiStatStepper {
        auto det = std::make_shared<MixtureWindowDetector>(p, params);
        return [det](std::span<const double> x, std::span<double> out) {
          out[0] = det->step(x);
        };
      };
  }
  throw ConfigError("bad method");
}

// Individual (1/e)-quantile thresholds for each of the stepper's statistics,
// followed by a combined rescaling pass when there is more than one
// statistic, mirroring the ocd calibration scheme.
inline std::vector<double> calibrate_method_thresholds(
    Method method, const DetectorConfig& config, const ScaleGrid& grid,
    std::size_t b_reps, std::uint64_t seed, unsigned threads = 0) {
  if (method == Method::ocd || method == Method::ocd_prime) {
    DetectorConfig cfg = config;
    cfg.variant =
        method == Method::ocd ? Variant::ocd : Variant::ocd_prime;
    const ThresholdSet t = calibrate_thresholds(cfg, grid, b_reps, seed,
                                                threads);
    return {t.t_diag, t.t_off_dense, t.t_off_sparse};
  }
  const std::size_t k = method_stat_count(method);
  const StepperFactory factory = make_stepper_factory(method, config, grid);
  const auto gamma_n = static_cast<std::int64_t>(config.gamma);
  auto run_pass = [&](std::uint64_t tag, const std::vector<double>& norm) {
    std::vector<std::vector<double>> maxima(b_reps,
                                            std::vector<double>(k, 0.0));
    parallel_for(
        b_reps,
        [&](std::size_t r) {
          GaussianStreamSource src(ChangeSpec::null_stream(config.p),
                                   derive_seed(seed, tag, r));
          MultiStatStepper stepper = factory();
          std::vector<double> x, stats(k);
          for (std::int64_t n = 0; n < gamma_n; ++n) {
            src.next(x);
            stepper(x, stats);
            for (std::size_t i = 0; i < k; ++i)
              maxima[r][i] = std::max(maxima[r][i], stats[i] / norm[i]);
          }
        },
        threads);
    return maxima;
  };

  const std::vector<double> unit(k, 1.0);
  const auto raw = run_pass(seed_tag::calibrate_individual, unit);
  std::vector<double> individual(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> v(b_reps);
    for (std::size_t r = 0; r < b_reps; ++r) v[r] = raw[r][i];
    individual[i] = quantile_1_over_e(std::move(v));
    if (individual[i] == 0.0) individual[i] = 1.0;
  }
  if (k == 1) return individual;

  const auto normed = run_pass(seed_tag::calibrate_combined, individual);
  std::vector<double> w(b_reps);
  for (std::size_t r = 0; r < b_reps; ++r)
    w[r] = *std::max_element(normed[r].begin(), normed[r].end());
  const double t_comb = quantile_1_over_e(std::move(w));
  for (double& t : individual) t *= t_comb;
  return individual;
}

// Mean first-crossing delay for an arbitrary method, paired across methods by
// the replication sub-seeds.
inline double estimate_method_delay(Method method,
                                    const DetectorConfig& config,
                                    const ScaleGrid& grid,
                                    const std::vector<double>& thresholds,
                                    const SpecFactory& spec_for_rep,
                                    std::size_t reps, std::int64_t cap,
                                    std::uint64_t seed, unsigned threads = 0) {
  const std::size_t k = method_stat_count(method);
  if (thresholds.size() != k)
    throw ConfigError("estimate_method_delay: wrong threshold count");
  const StepperFactory factory = make_stepper_factory(method, config, grid);
  std::vector<std::int64_t> firsts(reps, cap), zs(reps, 0);
  parallel_for(
      reps,
      [&](std::size_t r) {
        const ChangeSpec spec = spec_for_rep(r);
        zs[r] = spec.z;
        GaussianStreamSource src(
            spec, derive_seed(seed, seed_tag::change_stream, r));
        MultiStatStepper stepper = factory();
        std::vector<double> x, stats(k);
        for (std::int64_t n = 1; n <= cap; ++n) {
          src.next(x);
          stepper(x, stats);
          bool crossed = false;
          for (std::size_t i = 0; i < k; ++i)
            if (stats[i] >= thresholds[i]) crossed = true;
          if (crossed) {
            firsts[r] = n;
            break;
          }
        }
      },
      threads);
  double sum = 0.0;
  std::size_t usable = 0;
  for (std::size_t r = 0; r < reps; ++r) {
    if (firsts[r] <= zs[r]) continue;  // false alarm
    sum += static_cast<double>(firsts[r] - zs[r]);
    ++usable;
  }
  return usable ? sum / static_cast<double>(usable)
                : std::numeric_limits<double>::quiet_NaN();
}

// --- complexity ----------------------------------------------------------------

struct ComplexityReport {
  double median_step_seconds_start = 0.0;
  double median_step_seconds_end = 0.0;
  StateFootprint footprint_start;
  StateFootprint footprint_end;
  std::size_t distinct_tails_end = 0;
  std::int64_t n_points = 0;
};

// Median per-step wall time over the first and last `window` steps of one
// long null run, plus the accumulator counts at both ends.
inline ComplexityReport complexity_probe(const DetectorConfig& config,
                                         const ScaleGrid& grid,
                                         std::int64_t n_points,
                                         std::uint64_t seed,
                                         std::int64_t window = 1000) {
  if (n_points < 2 * window)
    throw ConfigError("complexity_probe: n_points too small for the windows");
  auto engine = make_engine(config, grid);
  GaussianStreamSource src(ChangeSpec::null_stream(config.p), seed);
  std::vector<double> x;
  std::vector<double> start_times, end_times;
  start_times.reserve(window);
  end_times.reserve(window);
  ComplexityReport report;
  report.n_points = n_points;
  for (std::int64_t n = 1; n <= n_points; ++n) {
    src.next(x);
    const bool timed = n <= window || n > n_points - window;
    if (timed) {
      const auto t0 = std::chrono::steady_clock::now();
      engine->step(x);
      const auto t1 = std::chrono::steady_clock::now();
      const double dt = std::chrono::duration<double>(t1 - t0).count();
      (n <= window ? start_times : end_times).push_back(dt);
    } else {
      engine->step(x);
    }
    if (n == window) report.footprint_start = engine->footprint();
  }
  report.footprint_end = engine->footprint();
  report.distinct_tails_end = engine->distinct_tail_count();
  auto median = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  report.median_step_seconds_start = median(start_times);
  report.median_step_seconds_end = median(end_times);
  return report;
}

// --- CSV emitters ----------------------------------------------------------------

inline void write_patience_csv(std::ostream& out, const DetectorConfig& config,
                               const PatienceResult& res, std::int64_t cap,
                               std::size_t reps) {
  out << "p,beta,gamma,reps,cap,declared_fraction,truncated_mean\n";
  out << config.p << "," << format_double(config.beta) << ","
      << format_double(config.gamma) << "," << reps << "," << cap << ","
      << format_double(res.declared_fraction) << ","
      << (std::isnan(res.truncated_mean) ? std::string("NA")
                                         : format_double(res.truncated_mean))
      << "\n";
}

inline void write_run_lengths_csv(std::ostream& out,
                                  const PatienceResult& res) {
  out << "rep,run_length,declared\n";
  for (std::size_t r = 0; r < res.runs.size(); ++r)
    out << r << "," << res.runs[r].n << "," << (res.runs[r].declared ? 1 : 0)
        << "\n";
}

inline void write_delay_csv(std::ostream& out, int s, double vartheta,
                            double beta, const DelayResult& res) {
  out << "s,vartheta,beta,delay_diag,share_diag,delay_off_d,share_off_d,"
         "delay_off_s,share_off_s,delay_combined,usable_reps,false_alarms\n";
  out << s << "," << format_double(vartheta) << "," << format_double(beta)
      << "," << format_double(res.delay_diag) << ","
      << format_double(res.share_diag) << ","
      << format_double(res.delay_off_dense) << ","
      << format_double(res.share_off_dense) << ","
      << format_double(res.delay_off_sparse) << ","
      << format_double(res.share_off_sparse) << ","
      << format_double(res.combined_delay) << "," << res.usable_reps << ","
      << res.false_alarms << "\n";
}

inline void write_delay_reps_csv(std::ostream& out, const DelayResult& res) {
  out << "rep,n_diag,n_off_d,n_off_s\n";
  for (std::size_t r = 0; r < res.per_rep.size(); ++r)
    out << r << "," << res.per_rep[r][0] << "," << res.per_rep[r][1] << ","
        << res.per_rep[r][2] << "\n";
}

}  // namespace ocd
