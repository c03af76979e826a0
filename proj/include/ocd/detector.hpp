#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ocd/prime.hpp"
#include "ocd/stats.hpp"

namespace ocd {

enum class ThresholdSource {
  theoretical_dense,
  theoretical_sparse,
  theoretical_adaptive,
  monte_carlo,
};

enum class StatKind { diag, off_dense, off_sparse };

inline const char* to_string(StatKind k) {
  switch (k) {
    case StatKind::diag: return "diag";
    case StatKind::off_dense: return "off_dense";
    case StatKind::off_sparse: return "off_sparse";
  }
  return "?";
}

inline const char* to_string(ThresholdSource s) {
  switch (s) {
    case ThresholdSource::theoretical_dense: return "theoretical_dense";
    case ThresholdSource::theoretical_sparse: return "theoretical_sparse";
    case ThresholdSource::theoretical_adaptive: return "theoretical_adaptive";
    case ThresholdSource::monte_carlo: return "monte_carlo";
  }
  return "?";
}

// Declaration thresholds for the three statistics. A statistic can be
// disabled by an infinite threshold (e.g. the off statistics in a pure
// diagonal run).
struct ThresholdSet {
  double t_diag = std::numeric_limits<double>::infinity();
  double t_off_dense = std::numeric_limits<double>::infinity();
  double t_off_sparse = std::numeric_limits<double>::infinity();
  ThresholdSource source = ThresholdSource::theoretical_adaptive;

  double by_kind(StatKind k) const {
    switch (k) {
      case StatKind::diag: return t_diag;
      case StatKind::off_dense: return t_off_dense;
      case StatKind::off_sparse: return t_off_sparse;
    }
    return std::numeric_limits<double>::infinity();
  }

  void validate() const {
    if (!(t_diag > 0.0) || !(t_off_dense > 0.0) || !(t_off_sparse > 0.0))
      throw ConfigError("thresholds must be positive");
  }
};

// Chi-squared tail threshold map: psi(x) = p - 1 + x + sqrt(2(p-1)x).
inline double psi_threshold(int p, double x) {
  return static_cast<double>(p - 1) + x +
         std::sqrt(2.0 * static_cast<double>(p - 1) * x);
}

enum class ThresholdMode { dense, sparse, adaptive };

// Threshold settings with guaranteed patience at level gamma. The dense and
// sparse settings cover the corresponding two-statistic procedures; the
// adaptive setting runs all three statistics with slightly more conservative
// constants (24 in place of 16).
inline ThresholdSet theoretical_thresholds(const DetectorConfig& config,
                                           ThresholdMode mode) {
  config.validate();
  const double p = static_cast<double>(config.p);
  const double gamma = config.gamma;
  if (mode != ThresholdMode::dense && config.p < 2)
    throw ConfigError("sparse/adaptive thresholds require p >= 2");
  ThresholdSet out;
  switch (mode) {
    case ThresholdMode::dense: {
      out.t_diag = std::log(16.0 * p * gamma * log2_real(4.0 * p));
      const double t_off_tilde =
          2.0 * std::log(16.0 * p * gamma * log2_real(2.0 * p));
      out.t_off_dense = psi_threshold(config.p, t_off_tilde);
      out.source = ThresholdSource::theoretical_dense;
      break;
    }
    case ThresholdMode::sparse: {
      out.t_diag = std::log(16.0 * p * gamma * log2_real(4.0 * p));
      out.t_off_sparse =
          8.0 * std::log(16.0 * p * gamma * log2_real(2.0 * p));
      out.source = ThresholdSource::theoretical_sparse;
      break;
    }
    case ThresholdMode::adaptive: {
      out.t_diag = std::log(24.0 * p * gamma * log2_real(4.0 * p));
      const double t_off_tilde =
          2.0 * std::log(24.0 * p * gamma * log2_real(2.0 * p));
      out.t_off_dense = psi_threshold(config.p, t_off_tilde);
      out.t_off_sparse =
          8.0 * std::log(24.0 * p * gamma * log2_real(2.0 * p));
      out.source = ThresholdSource::theoretical_adaptive;
      break;
    }
  }
  return out;
}

// Outcome of a monitored run. When a change is declared, `trigger` names the
// crossing statistic ("multiple" if several crossed at the same step, with
// all of them listed in `triggered`); the anchor, scale and value are those
// of the first-listed trigger.
struct Declaration {
  std::int64_t n = 0;
  std::vector<StatKind> triggered;
  ArgMax anchor{};
  double statistic_value = 0.0;

  bool multiple() const { return triggered.size() > 1; }
  std::string trigger_name() const {
    return multiple() ? "multiple" : to_string(triggered.front());
  }
};

struct RunResult {
  std::optional<Declaration> declaration;
  std::int64_t n_processed = 0;

  bool declared() const { return declaration.has_value(); }
  bool censored() const { return !declaration.has_value(); }
};

// Sequential source of p-vectors. next() fills `out` and returns false at
// end of stream.
class ObservationSource {
 public:
  virtual ~ObservationSource() = default;
  virtual bool next(std::vector<double>& out) = 0;
};

class FunctionSource final : public ObservationSource {
 public:
  explicit FunctionSource(std::function<bool(std::vector<double>&)> fn)
      : fn_(std::move(fn)) {}
  bool next(std::vector<double>& out) override { return fn_(out); }

 private:
  std::function<bool(std::vector<double>&)> fn_;
};

namespace detail {

inline std::optional<Declaration> crossing(const StatSnapshot& snap,
                                           const ThresholdSet& thr) {
  Declaration decl;
  if (snap.s_diag >= thr.t_diag) decl.triggered.push_back(StatKind::diag);
  if (snap.s_off_dense() >= thr.t_off_dense)
    decl.triggered.push_back(StatKind::off_dense);
  if (snap.s_off_sparse() >= thr.t_off_sparse)
    decl.triggered.push_back(StatKind::off_sparse);
  if (decl.triggered.empty()) return std::nullopt;
  decl.n = snap.n;
  switch (decl.triggered.front()) {
    case StatKind::diag:
      decl.anchor = snap.argmax_diag;
      decl.statistic_value = snap.s_diag;
      break;
    case StatKind::off_dense:
      decl.anchor = snap.argmax_off.front();
      decl.statistic_value = snap.s_off_dense();
      break;
    case StatKind::off_sparse:
      decl.anchor = snap.argmax_off.back();
      decl.statistic_value = snap.s_off_sparse();
      break;
  }
  return decl;
}

}  // namespace detail

// Per-step trace sink; receives the snapshot and whether a declaration was
// made at that step.
using TraceSink = std::function<void(const StatSnapshot&, bool declared)>;

// Feeds the source into a fresh engine until some statistic meets or exceeds
// its threshold, the source is exhausted, or max_n observations have been
// consumed. The declaration decision at time n depends only on x_1..x_n.
inline RunResult run_detector(
    ObservationSource& source, const DetectorConfig& config,
    const ScaleGrid& grid, const ThresholdSet& thresholds,
    std::optional<std::int64_t> max_n = std::nullopt,
    const TraceSink& trace = nullptr) {
  thresholds.validate();
  auto engine = make_engine(config, grid);
  RunResult result;
  std::vector<double> x;
  while (!max_n || engine->time() < *max_n) {
    if (!source.next(x)) break;
    const StatSnapshot& snap = engine->step(x);
    auto decl = detail::crossing(snap, thresholds);
    if (trace) trace(snap, decl.has_value());
    if (decl) {
      result.declaration = std::move(decl);
      result.n_processed = snap.n;
      return result;
    }
  }
  result.n_processed = engine->time();
  return result;
}

}  // namespace ocd
