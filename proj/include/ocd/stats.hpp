#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "ocd/grid.hpp"

namespace ocd {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ArgMax {
  std::int32_t coord = -1;  // 0-based coordinate j
  std::int32_t scale = -1;  // index into ScaleGrid::b_values
  bool operator==(const ArgMax&) const = default;
};

// Detector statistics after one step. `s_off` holds one off-diagonal
// statistic per requested hard-threshold level, in the order the levels were
// given (dense first, sparse second in the standard configuration).
struct StatSnapshot {
  std::int64_t n = 0;
  double s_diag = 0.0;
  ArgMax argmax_diag{};
  std::vector<double> s_off;
  std::vector<ArgMax> argmax_off;

  double s_off_dense() const { return s_off.front(); }
  double s_off_sparse() const { return s_off.back(); }
};

struct StateFootprint {
  std::size_t ints = 0;
  std::size_t reals = 0;
  bool operator==(const StateFootprint&) const = default;
};

// Single-writer streaming engine. Within one step all (coordinate, scale)
// updates are independent; the final reductions are deterministic maxima with
// fixed tie-breaking, so results do not depend on evaluation order.
class StepEngine {
 public:
  virtual ~StepEngine() = default;

  // Consumes one observation and returns the statistics at the new time.
  // Throws DataError on dimension mismatch or non-finite inputs.
  virtual const StatSnapshot& step(std::span<const double> x) = 0;

  virtual void reset() = 0;
  virtual std::int64_t time() const = 0;
  virtual int dim() const = 0;
  virtual StateFootprint footprint() const = 0;
  // |T|: number of distinct tail lengths currently held.
  virtual std::size_t distinct_tail_count() const = 0;

  const StatSnapshot& snapshot() const { return snap_; }

 protected:
  void check_input(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != dim())
      throw DataError("step: observation has dimension " +
                      std::to_string(x.size()) + ", expected " +
                      std::to_string(dim()));
    for (double v : x)
      if (!std::isfinite(v)) throw DataError("step: non-finite input value");
  }

  StatSnapshot snap_;
};

namespace detail {

// R_{n,b} = b*A_jj - b^2 t/2. Both engine families must evaluate this with
// the exact same operations so their outputs agree bitwise.
inline double r_statistic(double b, double a_jj, std::int64_t t) {
  return b * a_jj - 0.5 * b * b * static_cast<double>(t);
}

// sum_k col[k]^2 1{|col[k]| >= thr}, anchor included; the anchor's own term
// is removed afterwards by q_from_sums. Keeping one summation order makes the
// naive and dedup paths bit-identical.
inline double hard_threshold_sum(const double* col, int p, double thr) {
  double s = 0.0;
  for (int k = 0; k < p; ++k) {
    const double v = col[k];
    if (std::abs(v) >= thr) s += v * v;
  }
  return s;
}

inline double q_from_sums(double full_sum, double own, double thr,
                          std::int64_t t) {
  const double own_term = (std::abs(own) >= thr) ? own * own : 0.0;
  return (full_sum - own_term) /
         static_cast<double>(std::max<std::int64_t>(t, std::int64_t{1}));
}

// Running maximum with ties broken towards the smallest coordinate, then the
// smallest grid index, independent of the order candidates are offered.
struct MaxTracker {
  double value = -std::numeric_limits<double>::infinity();
  std::int32_t coord = -1;
  std::int32_t scale = -1;

  void offer(double v, std::int32_t j, std::int32_t s) {
    if (v > value ||
        (v == value && (j < coord || (j == coord && s < scale)))) {
      value = v;
      coord = j;
      scale = s;
    }
  }
  ArgMax argmax() const { return {coord, scale}; }
};

inline void init_snapshot(StatSnapshot& snap, std::size_t n_levels) {
  snap.n = 0;
  snap.s_diag = 0.0;
  snap.argmax_diag = {};
  snap.s_off.assign(n_levels, 0.0);
  snap.argmax_off.assign(n_levels, ArgMax{});
}

}  // namespace detail

// Algorithm state laid out one column per (coordinate, scale) pair: the tail
// length, the absolute tail start time, and the vector of tail partial sums
// over all coordinates.
class OcdEngine final : public StepEngine {
 public:
  OcdEngine(const DetectorConfig& config, const ScaleGrid& grid)
      : p_(config.p), grid_(grid), a_levels_(config.a_levels()) {
    if (grid.p != config.p)
      throw ConfigError("engine: grid was built for a different p");
    const std::size_t pairs = static_cast<std::size_t>(p_) * grid_.size();
    t_.assign(pairs, 0);
    start_.assign(pairs, 0);
    cols_.assign(pairs * static_cast<std::size_t>(p_), 0.0);
    r_.assign(pairs, 0.0);
    detail::init_snapshot(snap_, a_levels_.size());
  }

  const StatSnapshot& step(std::span<const double> x) override {
    check_input(x);
    ++n_;
    const int p = p_;
    const std::size_t n_scales = grid_.size();
    detail::MaxTracker diag;
    std::vector<detail::MaxTracker> off(a_levels_.size());

    for (std::size_t si = 0; si < n_scales; ++si) {
      const double b = grid_.b_values[si];
      for (int j = 0; j < p; ++j) {
        const std::size_t pi = si * static_cast<std::size_t>(p) + j;
        double* col = &cols_[pi * static_cast<std::size_t>(p)];
        std::int64_t t = ++t_[pi];
        for (int k = 0; k < p; ++k) col[k] += x[k];
        double r = detail::r_statistic(b, col[j], t);
        if (r <= 0.0) {
          t_[pi] = 0;
          t = 0;
          start_[pi] = n_;
          std::fill(col, col + p, 0.0);
          r = 0.0;
        }
        r_[pi] = r;
        diag.offer(r, j, static_cast<std::int32_t>(si));
        if (grid_.is_core(si)) {
          for (std::size_t lvl = 0; lvl < a_levels_.size(); ++lvl) {
            const double thr =
                a_levels_[lvl] * std::sqrt(static_cast<double>(t));
            const double full = detail::hard_threshold_sum(col, p, thr);
            off[lvl].offer(detail::q_from_sums(full, col[j], thr, t), j,
                           static_cast<std::int32_t>(si));
          }
        }
      }
    }

    snap_.n = n_;
    snap_.s_diag = diag.value;
    snap_.argmax_diag = diag.argmax();
    for (std::size_t lvl = 0; lvl < a_levels_.size(); ++lvl) {
      snap_.s_off[lvl] = off[lvl].value;
      snap_.argmax_off[lvl] = off[lvl].argmax();
    }
    return snap_;
  }

  void reset() override {
    n_ = 0;
    std::fill(t_.begin(), t_.end(), 0);
    std::fill(start_.begin(), start_.end(), 0);
    std::fill(cols_.begin(), cols_.end(), 0.0);
    std::fill(r_.begin(), r_.end(), 0.0);
    detail::init_snapshot(snap_, a_levels_.size());
  }

  std::int64_t time() const override { return n_; }
  int dim() const override { return p_; }

  StateFootprint footprint() const override {
    return {t_.size() + start_.size(), cols_.size()};
  }

  std::size_t distinct_tail_count() const override {
    std::unordered_set<std::int64_t> tails(t_.begin(), t_.end());
    return tails.size();
  }

  std::int64_t tail_length(int j, std::size_t scale) const {
    return t_[scale * static_cast<std::size_t>(p_) + j];
  }
  std::int64_t tail_start(int j, std::size_t scale) const {
    return start_[scale * static_cast<std::size_t>(p_) + j];
  }
  std::span<const double> column(int j, std::size_t scale) const {
    const std::size_t pi = scale * static_cast<std::size_t>(p_) + j;
    return {&cols_[pi * static_cast<std::size_t>(p_)],
            static_cast<std::size_t>(p_)};
  }

 private:
  int p_;
  ScaleGrid grid_;
  std::vector<double> a_levels_;
  std::int64_t n_ = 0;
  std::vector<std::int64_t> t_, start_;
  std::vector<double> cols_;  // pair-major, one p-vector per (scale, coord)
  std::vector<double> r_;
};

// Same observable behaviour as OcdEngine, but (coordinate, scale) pairs that
// share a tail start share one stored column, for O(p |T|) work per step.
class OcdDedupEngine final : public StepEngine {
 public:
  OcdDedupEngine(const DetectorConfig& config, const ScaleGrid& grid)
      : p_(config.p), grid_(grid), a_levels_(config.a_levels()) {
    if (grid.p != config.p)
      throw ConfigError("engine: grid was built for a different p");
    const std::size_t pairs = static_cast<std::size_t>(p_) * grid_.size();
    slot_of_.assign(pairs, 0);
    r_.assign(pairs, 0.0);
    slots_.push_back(Slot{0, static_cast<std::int64_t>(pairs),
                          std::vector<double>(p_, 0.0), {}});
    detail::init_snapshot(snap_, a_levels_.size());
  }

  const StatSnapshot& step(std::span<const double> x) override {
    check_input(x);
    ++n_;
    const int p = p_;
    const std::size_t n_scales = grid_.size();

    for (Slot& s : slots_) {
      if (s.refcount == 0) continue;
      double* col = s.col.data();
      for (int k = 0; k < p; ++k) col[k] += x[k];
    }

    std::int32_t zero_slot = -1;
    for (std::size_t si = 0; si < n_scales; ++si) {
      const double b = grid_.b_values[si];
      for (int j = 0; j < p; ++j) {
        const std::size_t pi = si * static_cast<std::size_t>(p) + j;
        Slot& s = slots_[slot_of_[pi]];
        const std::int64_t t = n_ - s.start;
        double r = detail::r_statistic(b, s.col[j], t);
        if (r <= 0.0) {
          --s.refcount;
          if (zero_slot < 0) zero_slot = acquire_zero_slot();
          ++slots_[zero_slot].refcount;
          slot_of_[pi] = zero_slot;
          r = 0.0;
        }
        r_[pi] = r;
      }
    }
    free_.clear();
    for (std::int32_t i = 0; i < static_cast<std::int32_t>(slots_.size()); ++i)
      if (slots_[i].refcount == 0) free_.push_back(i);

    for (Slot& s : slots_) {
      if (s.refcount == 0) continue;
      const std::int64_t t = n_ - s.start;
      s.level_sums.resize(a_levels_.size());
      for (std::size_t lvl = 0; lvl < a_levels_.size(); ++lvl) {
        const double thr = a_levels_[lvl] * std::sqrt(static_cast<double>(t));
        s.level_sums[lvl] =
            detail::hard_threshold_sum(s.col.data(), p, thr);
      }
    }

    detail::MaxTracker diag;
    std::vector<detail::MaxTracker> off(a_levels_.size());
    for (std::size_t si = 0; si < n_scales; ++si) {
      for (int j = 0; j < p; ++j) {
        const std::size_t pi = si * static_cast<std::size_t>(p) + j;
        diag.offer(r_[pi], j, static_cast<std::int32_t>(si));
        if (!grid_.is_core(si)) continue;
        const Slot& s = slots_[slot_of_[pi]];
        const std::int64_t t = n_ - s.start;
        for (std::size_t lvl = 0; lvl < a_levels_.size(); ++lvl) {
          const double thr =
              a_levels_[lvl] * std::sqrt(static_cast<double>(t));
          off[lvl].offer(
              detail::q_from_sums(s.level_sums[lvl], s.col[j], thr, t), j,
              static_cast<std::int32_t>(si));
        }
      }
    }

    snap_.n = n_;
    snap_.s_diag = diag.value;
    snap_.argmax_diag = diag.argmax();
    for (std::size_t lvl = 0; lvl < a_levels_.size(); ++lvl) {
      snap_.s_off[lvl] = off[lvl].value;
      snap_.argmax_off[lvl] = off[lvl].argmax();
    }
    return snap_;
  }

  void reset() override {
    n_ = 0;
    slots_.clear();
    free_.clear();
    const std::size_t pairs = static_cast<std::size_t>(p_) * grid_.size();
    std::fill(slot_of_.begin(), slot_of_.end(), 0);
    std::fill(r_.begin(), r_.end(), 0.0);
    slots_.push_back(Slot{0, static_cast<std::int64_t>(pairs),
                          std::vector<double>(p_, 0.0), {}});
    detail::init_snapshot(snap_, a_levels_.size());
  }

  std::int64_t time() const override { return n_; }
  int dim() const override { return p_; }

  StateFootprint footprint() const override {
    std::size_t live = 0;
    for (const Slot& s : slots_)
      if (s.refcount > 0) ++live;
    return {slot_of_.size() + 2 * live,
            live * static_cast<std::size_t>(p_)};
  }

  std::size_t distinct_tail_count() const override {
    std::size_t live = 0;
    for (const Slot& s : slots_)
      if (s.refcount > 0) ++live;
    return live;
  }

 private:
  struct Slot {
    std::int64_t start = 0;
    std::int64_t refcount = 0;
    std::vector<double> col;
    std::vector<double> level_sums;
  };

  std::int32_t acquire_zero_slot() {
    if (!free_.empty()) {
      const std::int32_t i = free_.back();
      free_.pop_back();
      slots_[i].start = n_;
      slots_[i].refcount = 0;
      std::fill(slots_[i].col.begin(), slots_[i].col.end(), 0.0);
      return i;
    }
    slots_.push_back(Slot{n_, 0, std::vector<double>(p_, 0.0), {}});
    return static_cast<std::int32_t>(slots_.size() - 1);
  }

  int p_;
  ScaleGrid grid_;
  std::vector<double> a_levels_;
  std::int64_t n_ = 0;
  std::vector<std::int32_t> slot_of_;
  std::vector<double> r_;
  std::vector<Slot> slots_;
  std::vector<std::int32_t> free_;
};

}  // namespace ocd
