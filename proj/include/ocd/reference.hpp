#pragma once

// Direct quadratic-time evaluations of the detector statistics, used to
// validate the streaming implementations. Nothing here shares code with the
// streaming engines.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace ocd::reference {

struct RT {
  double r = 0.0;
  std::int64_t t = 0;
};

// R_{n,b} = max over h in {0..n} of sum_{i=n-h+1}^{n} b(x_i - b/2), and the
// smallest maximising h. Each candidate sum is evaluated afresh; an empty sum
// is 0.
inline RT r_bruteforce(std::span<const double> xs, double b) {
  const std::int64_t n = static_cast<std::int64_t>(xs.size());
  for (double x : xs)
    if (!std::isfinite(x))
      throw std::invalid_argument("r_bruteforce: non-finite input");
  double best = 0.0;  // h = 0
  std::int64_t best_h = 0;
  for (std::int64_t h = 1; h <= n; ++h) {
    double s = 0.0;
    for (std::int64_t i = n - h; i < n; ++i) s += b * (xs[i] - b / 2.0);
    if (s > best) {
      best = s;
      best_h = h;
    }
  }
  return {best, best_h};
}

// (R_m, t_m) for every prefix length m = 1..n. Quadratic overall: for each m
// the maximum is taken over candidate sums accumulated backwards from m.
inline std::vector<RT> r_trajectory(std::span<const double> xs, double b) {
  const std::int64_t n = static_cast<std::int64_t>(xs.size());
  std::vector<RT> out(n);
  for (std::int64_t m = 1; m <= n; ++m) {
    double best = 0.0;
    std::int64_t best_h = 0;
    double acc = 0.0;
    for (std::int64_t h = 1; h <= m; ++h) {
      acc += b * (xs[m - h] - b / 2.0);
      if (acc > best) {
        best = acc;
        best_h = h;
      }
    }
    out[m - 1] = {best, best_h};
  }
  return out;
}

// Tail sum of the last `len` observations of coordinate `coord`, recomputed
// from the retained history.
inline double window_sum(const std::vector<std::vector<double>>& history,
                         std::size_t coord, std::int64_t len) {
  double s = 0.0;
  const std::int64_t n = static_cast<std::int64_t>(history.size());
  for (std::int64_t i = n - len; i < n; ++i) s += history[i][coord];
  return s;
}

// Off-diagonal statistic for anchor j from explicit tail sums.
inline double q_direct(const std::vector<double>& tail_sums, std::size_t j,
                       std::int64_t t, double a) {
  double q = 0.0;
  const double thr = a * std::sqrt(static_cast<double>(t));
  for (std::size_t k = 0; k < tail_sums.size(); ++k) {
    if (k == j) continue;
    if (std::abs(tail_sums[k]) >= thr)
      q += tail_sums[k] * tail_sums[k] /
           static_cast<double>(std::max<std::int64_t>(t, 1));
  }
  return q;
}

// The deterministic auxiliary-tail sequences: a_n is the dyadic-restart tail
// length after n reset-free steps, b_n its shadow. a_0 = b_0 = 0;
// at n a power of two, a_n = b_{n-1} + 1 and b_n = 0; otherwise both grow by 1.
inline std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>>
dyadic_tail_table(std::int64_t n_max) {
  std::vector<std::int64_t> a(n_max + 1, 0), b(n_max + 1, 0);
  for (std::int64_t n = 1; n <= n_max; ++n) {
    const bool pow2 = (n & (n - 1)) == 0;
    b[n] = pow2 ? 0 : b[n - 1] + 1;
    a[n] = pow2 ? b[n - 1] + 1 : a[n - 1] + 1;
  }
  return {std::move(a), std::move(b)};
}

}  // namespace ocd::reference
