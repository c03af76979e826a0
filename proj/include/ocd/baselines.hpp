#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "ocd/stats.hpp"

namespace ocd {

// Aggregated CUSUM baseline with unknown change vector: per-coordinate
// likelihood-ratio recursions at b = +beta/sqrt(p) and b = -beta/sqrt(p),
// aggregated by coordinate sum and coordinate max, each maximized over the
// two signs.
class MeiDetector {
 public:
  MeiDetector(int p, double beta)
      : p_(p), b_(beta / std::sqrt(static_cast<double>(p))),
        r_pos_(p, 0.0), r_neg_(p, 0.0) {
    if (p < 1) throw ConfigError("mei: p must be >= 1");
    if (!(beta > 0.0)) throw ConfigError("mei: beta must be > 0");
  }

  struct Stats {
    double sum_stat = 0.0;
    double max_stat = 0.0;
    // Per-sign internals; max <= sum holds within one sign.
    double sum_pos = 0.0, sum_neg = 0.0;
    double max_pos = 0.0, max_neg = 0.0;
  };

  Stats step(std::span<const double> x) {
    if (static_cast<int>(x.size()) != p_)
      throw DataError("mei: dimension mismatch");
    Stats st;
    for (int j = 0; j < p_; ++j) {
      r_pos_[j] = std::max(r_pos_[j] + b_ * (x[j] - b_ / 2.0), 0.0);
      r_neg_[j] = std::max(r_neg_[j] + (-b_) * (x[j] + b_ / 2.0), 0.0);
      st.sum_pos += r_pos_[j];
      st.sum_neg += r_neg_[j];
      st.max_pos = std::max(st.max_pos, r_pos_[j]);
      st.max_neg = std::max(st.max_neg, r_neg_[j]);
    }
    st.sum_stat = std::max(st.sum_pos, st.sum_neg);
    st.max_stat = std::max(st.max_pos, st.max_neg);
    return st;
  }

  void reset() {
    std::fill(r_pos_.begin(), r_pos_.end(), 0.0);
    std::fill(r_neg_.begin(), r_neg_.end(), 0.0);
  }

  int dim() const { return p_; }

 private:
  int p_;
  double b_;
  std::vector<double> r_pos_, r_neg_;
};

// Mixture-likelihood window scan parameters. Presets: Xie--Siegmund
// (lambda, kappa, w) = (1, 2, 200) and Chan (2 sqrt(2) - 2, 4, 200), both
// with p0 = 1/sqrt(p) by default.
struct MixtureParams {
  double p0 = 1.0;
  double lambda = 1.0;
  double kappa = 2.0;
  int w = 200;

  static MixtureParams xs(int p) {
    return {1.0 / std::sqrt(static_cast<double>(p)), 1.0, 2.0, 200};
  }
  static MixtureParams chan(int p) {
    return {1.0 / std::sqrt(static_cast<double>(p)), 2.0 * std::sqrt(2.0) - 2.0,
            4.0, 200};
  }

  void validate() const {
    if (!(p0 > 0.0) || p0 > 1.0) throw ConfigError("mixture: p0 in (0,1]");
    if (!(lambda > 0.0)) throw ConfigError("mixture: lambda > 0");
    if (!(kappa > 0.0)) throw ConfigError("mixture: kappa > 0");
    if (w < 1) throw ConfigError("mixture: w >= 1");
  }
};

namespace detail {

// log(1 - p0 + lambda p0 e^g) without overflow: for g > 0 the factored form
// g + log(lambda p0 + (1 - p0) e^{-g}) is used; g grows like Z^2, so the
// direct exponential overflows routinely at strong signals.
inline double mixture_term(double g, double p0, double lambda) {
  if (g <= 0.0) return std::log1p(p0 * (lambda - 1.0));
  return g + std::log(lambda * p0 + (1.0 - p0) * std::exp(-g));
}

}  // namespace detail

// Windowed mixture-likelihood detector: S+ v S- where
// S+/- = max_{r in [w ^ n]} sum_j log(1 - p0 + lambda p0 e^{(Z v/^ 0)^2 / k}),
// with Z_{n,r}^j the normalized sum of the last r observations in
// coordinate j. Storage is the ring of the last w observations; per-step
// work depends only on (p, w).
class MixtureWindowDetector {
 public:
  MixtureWindowDetector(int p, MixtureParams params)
      : p_(p), params_(params), ring_(static_cast<std::size_t>(params.w) * p),
        suffix_(p) {
    params_.validate();
    if (p < 1) throw ConfigError("mixture: p must be >= 1");
  }

  double step(std::span<const double> x) {
    if (static_cast<int>(x.size()) != p_)
      throw DataError("mixture: dimension mismatch");
    double* slot = &ring_[static_cast<std::size_t>(head_) * p_];
    std::copy(x.begin(), x.end(), slot);
    head_ = (head_ + 1) % params_.w;
    ++n_;

    const double c0 = detail::mixture_term(0.0, params_.p0, params_.lambda);
    const std::int64_t r_max = std::min<std::int64_t>(params_.w, n_);
    std::fill(suffix_.begin(), suffix_.end(), 0.0);
    double best_pos = -std::numeric_limits<double>::infinity();
    double best_neg = best_pos;
    for (std::int64_t r = 1; r <= r_max; ++r) {
      // Row for time n - r + 1.
      const int row = static_cast<int>((head_ - r + 2 * params_.w) % params_.w);
      const double* past = &ring_[static_cast<std::size_t>(row) * p_];
      const double inv_sqrt_r = 1.0 / std::sqrt(static_cast<double>(r));
      double s_pos = 0.0, s_neg = 0.0;
      for (int j = 0; j < p_; ++j) {
        suffix_[j] += past[j];
        const double z = suffix_[j] * inv_sqrt_r;
        if (z > 0.0) {
          s_pos += detail::mixture_term(z * z / params_.kappa, params_.p0,
                                        params_.lambda);
          s_neg += c0;
        } else if (z < 0.0) {
          s_pos += c0;
          s_neg += detail::mixture_term(z * z / params_.kappa, params_.p0,
                                        params_.lambda);
        } else {
          s_pos += c0;
          s_neg += c0;
        }
      }
      best_pos = std::max(best_pos, s_pos);
      best_neg = std::max(best_neg, s_neg);
    }
    return std::max(best_pos, best_neg);
  }

  void reset() {
    n_ = 0;
    head_ = 0;
    std::fill(ring_.begin(), ring_.end(), 0.0);
  }

  int dim() const { return p_; }
  std::int64_t time() const { return n_; }

  // Z_{n,r} recomputed from the retained ring buffer, for validation.
  std::vector<double> z_direct(std::int64_t r) const {
    if (r < 1 || r > std::min<std::int64_t>(params_.w, n_))
      throw std::invalid_argument("z_direct: r out of range");
    std::vector<double> z(p_, 0.0);
    for (std::int64_t back = 1; back <= r; ++back) {
      const int row =
          static_cast<int>((head_ - back + 2 * params_.w) % params_.w);
      for (int j = 0; j < p_; ++j)
        z[j] += ring_[static_cast<std::size_t>(row) * p_ + j];
    }
    const double inv = 1.0 / std::sqrt(static_cast<double>(r));
    for (double& v : z) v *= inv;
    return z;
  }

  std::size_t storage_slots() const { return ring_.size() + suffix_.size(); }

 private:
  int p_;
  MixtureParams params_;
  std::vector<double> ring_;
  std::vector<double> suffix_;
  std::int64_t n_ = 0;
  int head_ = 0;  // next write position
};

}  // namespace ocd
