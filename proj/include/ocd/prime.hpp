#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <unordered_set>
#include <vector>

#include "ocd/stats.hpp"

namespace ocd {

namespace detail {
// The power-of-two test applies to the tail length after this step's
// increment; t = 1 counts (2^0).
inline bool is_pow2(std::int64_t t) { return t >= 1 && (t & (t - 1)) == 0; }
}  // namespace detail

// The ocd' variant: the off-diagonal statistics use auxiliary dyadic-restart
// tail sums (tau, Lambda) in place of (t, A). The diagonal statistic is the
// same recursion as in OcdEngine.
class OcdPrimeEngine final : public StepEngine {
 public:
  OcdPrimeEngine(const DetectorConfig& config, const ScaleGrid& grid)
      : p_(config.p), grid_(grid), a_levels_(config.a_levels()) {
    if (grid.p != config.p)
      throw ConfigError("engine: grid was built for a different p");
    const std::size_t pairs = static_cast<std::size_t>(p_) * grid_.size();
    const std::size_t cells = pairs * static_cast<std::size_t>(p_);
    t_.assign(pairs, 0);
    start_.assign(pairs, 0);
    tau_.assign(pairs, 0);
    tau_tilde_.assign(pairs, 0);
    a_cols_.assign(cells, 0.0);
    lam_cols_.assign(cells, 0.0);
    lam_tilde_cols_.assign(cells, 0.0);
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
        const std::size_t base = pi * static_cast<std::size_t>(p);
        double* a_col = &a_cols_[base];
        double* lam = &lam_cols_[base];
        double* lam_tilde = &lam_tilde_cols_[base];

        std::int64_t t = ++t_[pi];
        for (int k = 0; k < p; ++k) a_col[k] += x[k];

        if (detail::is_pow2(t)) {
          tau_[pi] = tau_tilde_[pi] + 1;
          tau_tilde_[pi] = 0;
          for (int k = 0; k < p; ++k) {
            lam[k] = lam_tilde[k] + x[k];
            lam_tilde[k] = 0.0;
          }
        } else {
          ++tau_[pi];
          ++tau_tilde_[pi];
          for (int k = 0; k < p; ++k) {
            lam[k] += x[k];
            lam_tilde[k] += x[k];
          }
        }

        double r = detail::r_statistic(b, a_col[j], t);
        if (r <= 0.0) {
          t_[pi] = 0;
          t = 0;
          start_[pi] = n_;
          tau_[pi] = 0;
          tau_tilde_[pi] = 0;
          std::fill(a_col, a_col + p, 0.0);
          std::fill(lam, lam + p, 0.0);
          std::fill(lam_tilde, lam_tilde + p, 0.0);
          r = 0.0;
        }
        r_[pi] = r;
        diag.offer(r, j, static_cast<std::int32_t>(si));
        if (grid_.is_core(si)) {
          const std::int64_t tau = tau_[pi];
          for (std::size_t lvl = 0; lvl < a_levels_.size(); ++lvl) {
            const double thr =
                a_levels_[lvl] * std::sqrt(static_cast<double>(tau));
            const double full = detail::hard_threshold_sum(lam, p, thr);
            off[lvl].offer(detail::q_from_sums(full, lam[j], thr, tau), j,
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
    std::fill(tau_.begin(), tau_.end(), 0);
    std::fill(tau_tilde_.begin(), tau_tilde_.end(), 0);
    std::fill(a_cols_.begin(), a_cols_.end(), 0.0);
    std::fill(lam_cols_.begin(), lam_cols_.end(), 0.0);
    std::fill(lam_tilde_cols_.begin(), lam_tilde_cols_.end(), 0.0);
    std::fill(r_.begin(), r_.end(), 0.0);
    detail::init_snapshot(snap_, a_levels_.size());
  }

  std::int64_t time() const override { return n_; }
  int dim() const override { return p_; }

  StateFootprint footprint() const override {
    return {t_.size() + start_.size() + tau_.size() + tau_tilde_.size(),
            a_cols_.size() + lam_cols_.size() + lam_tilde_cols_.size()};
  }

  std::size_t distinct_tail_count() const override {
    std::unordered_set<std::int64_t> tails(t_.begin(), t_.end());
    return tails.size();
  }

  std::int64_t tail_length(int j, std::size_t scale) const {
    return t_[scale * static_cast<std::size_t>(p_) + j];
  }
  std::int64_t aux_tail_length(int j, std::size_t scale) const {
    return tau_[scale * static_cast<std::size_t>(p_) + j];
  }
  std::int64_t aux_tail_shadow(int j, std::size_t scale) const {
    return tau_tilde_[scale * static_cast<std::size_t>(p_) + j];
  }
  double lambda_entry(int k, int j, std::size_t scale) const {
    const std::size_t pi = scale * static_cast<std::size_t>(p_) + j;
    return lam_cols_[pi * static_cast<std::size_t>(p_) + k];
  }

 private:
  int p_;
  ScaleGrid grid_;
  std::vector<double> a_levels_;
  std::int64_t n_ = 0;
  std::vector<std::int64_t> t_, start_, tau_, tau_tilde_;
  std::vector<double> a_cols_, lam_cols_, lam_tilde_cols_;
  std::vector<double> r_;
};

// Dedup layout for ocd': pairs sharing a reset time share (A, Lambda,
// Lambda-tilde) columns and the (t, tau, tau-tilde) scalars, since all of
// them are deterministic functions of the observations since the reset.
class OcdPrimeDedupEngine final : public StepEngine {
 public:
  OcdPrimeDedupEngine(const DetectorConfig& config, const ScaleGrid& grid)
      : p_(config.p), grid_(grid), a_levels_(config.a_levels()) {
    if (grid.p != config.p)
      throw ConfigError("engine: grid was built for a different p");
    const std::size_t pairs = static_cast<std::size_t>(p_) * grid_.size();
    slot_of_.assign(pairs, 0);
    r_.assign(pairs, 0.0);
    slots_.push_back(make_slot(0));
    slots_[0].refcount = static_cast<std::int64_t>(pairs);
    detail::init_snapshot(snap_, a_levels_.size());
  }

  const StatSnapshot& step(std::span<const double> x) override {
    check_input(x);
    ++n_;
    const int p = p_;
    const std::size_t n_scales = grid_.size();

    for (Slot& s : slots_) {
      if (s.refcount == 0) continue;
      const std::int64_t t = n_ - s.start;
      double* a_col = s.a_col.data();
      double* lam = s.lam.data();
      double* lam_tilde = s.lam_tilde.data();
      for (int k = 0; k < p; ++k) a_col[k] += x[k];
      if (detail::is_pow2(t)) {
        s.tau = s.tau_tilde + 1;
        s.tau_tilde = 0;
        for (int k = 0; k < p; ++k) {
          lam[k] = lam_tilde[k] + x[k];
          lam_tilde[k] = 0.0;
        }
      } else {
        ++s.tau;
        ++s.tau_tilde;
        for (int k = 0; k < p; ++k) {
          lam[k] += x[k];
          lam_tilde[k] += x[k];
        }
      }
    }

    std::int32_t zero_slot = -1;
    for (std::size_t si = 0; si < n_scales; ++si) {
      const double b = grid_.b_values[si];
      for (int j = 0; j < p; ++j) {
        const std::size_t pi = si * static_cast<std::size_t>(p) + j;
        Slot& s = slots_[slot_of_[pi]];
        const std::int64_t t = n_ - s.start;
        double r = detail::r_statistic(b, s.a_col[j], t);
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
      s.level_sums.resize(a_levels_.size());
      for (std::size_t lvl = 0; lvl < a_levels_.size(); ++lvl) {
        const double thr =
            a_levels_[lvl] * std::sqrt(static_cast<double>(s.tau));
        s.level_sums[lvl] =
            detail::hard_threshold_sum(s.lam.data(), p, thr);
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
        for (std::size_t lvl = 0; lvl < a_levels_.size(); ++lvl) {
          const double thr =
              a_levels_[lvl] * std::sqrt(static_cast<double>(s.tau));
          off[lvl].offer(
              detail::q_from_sums(s.level_sums[lvl], s.lam[j], thr, s.tau),
              j, static_cast<std::int32_t>(si));
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
    slots_.push_back(make_slot(0));
    slots_[0].refcount = static_cast<std::int64_t>(pairs);
    detail::init_snapshot(snap_, a_levels_.size());
  }

  std::int64_t time() const override { return n_; }
  int dim() const override { return p_; }

  StateFootprint footprint() const override {
    std::size_t live = 0;
    for (const Slot& s : slots_)
      if (s.refcount > 0) ++live;
    return {slot_of_.size() + 4 * live,
            3 * live * static_cast<std::size_t>(p_)};
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
    std::int64_t tau = 0;
    std::int64_t tau_tilde = 0;
    std::vector<double> a_col, lam, lam_tilde;
    std::vector<double> level_sums;
  };

  Slot make_slot(std::int64_t start) const {
    Slot s;
    s.start = start;
    s.a_col.assign(p_, 0.0);
    s.lam.assign(p_, 0.0);
    s.lam_tilde.assign(p_, 0.0);
    return s;
  }

  std::int32_t acquire_zero_slot() {
    if (!free_.empty()) {
      const std::int32_t i = free_.back();
      free_.pop_back();
      Slot& s = slots_[i];
      s.start = n_;
      s.refcount = 0;
      s.tau = 0;
      s.tau_tilde = 0;
      std::fill(s.a_col.begin(), s.a_col.end(), 0.0);
      std::fill(s.lam.begin(), s.lam.end(), 0.0);
      std::fill(s.lam_tilde.begin(), s.lam_tilde.end(), 0.0);
      return i;
    }
    slots_.push_back(make_slot(n_));
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

inline std::unique_ptr<StepEngine> make_engine(const DetectorConfig& config,
                                               const ScaleGrid& grid) {
  if (config.variant == Variant::ocd_prime) {
    if (config.dedup)
      return std::make_unique<OcdPrimeDedupEngine>(config, grid);
    return std::make_unique<OcdPrimeEngine>(config, grid);
  }
  if (config.dedup) return std::make_unique<OcdDedupEngine>(config, grid);
  return std::make_unique<OcdEngine>(config, grid);
}

}  // namespace ocd
