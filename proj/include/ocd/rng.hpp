#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace ocd {

// splitmix64 finalizer; used to derive independent sub-seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Sub-seed for replication `index` of the stream family `tag`. Replications
// are reproducible regardless of execution order or thread schedule.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag,
                                 std::uint64_t index) {
  return mix64(mix64(mix64(master) ^ tag) ^ index);
}

// Stream-family tags for seed derivation.
namespace seed_tag {
inline constexpr std::uint64_t calibrate_individual = 0x0c1;
inline constexpr std::uint64_t calibrate_combined = 0x0c2;
inline constexpr std::uint64_t null_run = 0x0d1;
inline constexpr std::uint64_t change_direction = 0x0e1;
inline constexpr std::uint64_t change_stream = 0x0e2;
}  // namespace seed_tag

// mt19937_64 with project-wide fixed uniform and Gaussian samplers, so the
// same seed regenerates byte-identical streams across runs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  // Standard Gaussian via the Marsaglia polar method.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ocd
