#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ocd {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Variant { ocd, ocd_prime };
enum class SparseMode { practical, theoretical };

inline int floor_log2(std::int64_t p) {
  if (p < 1) throw ConfigError("floor_log2: argument must be >= 1");
  return std::bit_width(static_cast<std::uint64_t>(p)) - 1;
}

// log2 evaluated as a natural-log ratio; the integer floor above is computed
// by bit length so exact powers of two are never misrounded.
inline double log2_real(double x) { return std::log(x) / std::log(2.0); }

// Global detector configuration: stream dimension p, assumed lower bound
// beta on the l2 norm of the mean change, nominal patience gamma, and the
// hard-threshold levels for the off-diagonal statistics.
struct DetectorConfig {
  int p = 1;
  double beta = 1.0;
  double gamma = 1.0;
  double a_dense = 0.0;
  SparseMode a_sparse_mode = SparseMode::practical;
  Variant variant = Variant::ocd;
  bool dedup = true;

  double a_sparse() const {
    if (a_sparse_mode == SparseMode::practical)
      return std::sqrt(2.0 * std::log(static_cast<double>(p)));
    if (p < 2)
      throw ConfigError("theoretical a_sparse requires p >= 2");
    return std::sqrt(8.0 * std::log(static_cast<double>(p - 1)));
  }

  std::vector<double> a_levels() const { return {a_dense, a_sparse()}; }

  void validate() const {
    if (p < 1) throw ConfigError("config: p must be >= 1");
    if (!(beta > 0.0)) throw ConfigError("config: beta must be > 0");
    if (!(gamma >= 1.0)) throw ConfigError("config: gamma must be >= 1");
    if (a_dense < 0.0) throw ConfigError("config: a_dense must be >= 0");
    if (a_sparse_mode == SparseMode::theoretical && p < 2)
      throw ConfigError("config: theoretical a_sparse requires p >= 2");
  }
};

// Signed dyadic scale grid B u B0. Scales are identified by index in
// `b_values`; equality of scales is by index, never by float comparison.
// Layout: for l = 0..floor(log2 p) the pair (+b_l, -b_l), then the B0 pair.
// The first 2(floor(log2 p)+1) entries form B (used by the off-diagonal
// statistics); the trailing pair is B0 (diagonal statistic only).
struct ScaleGrid {
  int p = 1;
  double beta = 1.0;
  std::vector<double> b_values;
  std::size_t core_count = 0;  // |B|; entries [0, core_count) are B

  std::size_t size() const { return b_values.size(); }
  bool is_core(std::size_t i) const { return i < core_count; }
};

inline ScaleGrid build_grid(const DetectorConfig& config) {
  config.validate();
  const int L = floor_log2(config.p);
  const double log2_2p = log2_real(2.0 * config.p);
  ScaleGrid grid;
  grid.p = config.p;
  grid.beta = config.beta;
  grid.b_values.reserve(2 * (L + 2));
  for (int l = 0; l <= L + 1; ++l) {
    const double b = config.beta / std::sqrt(std::ldexp(log2_2p, l));
    grid.b_values.push_back(b);
    grid.b_values.push_back(-b);
  }
  grid.core_count = 2 * static_cast<std::size_t>(L + 1);
  return grid;
}

// --- flat key=value config file -------------------------------------------
//
// Recognized keys: p, beta, gamma, a_sparse_mode in {practical, theoretical},
// variant in {ocd, ocd_prime}, dedup in {true, false, 1, 0}.
// Lines starting with '#' and blank lines are skipped.

inline Variant parse_variant(const std::string& s) {
  if (s == "ocd") return Variant::ocd;
  if (s == "ocd_prime") return Variant::ocd_prime;
  throw ConfigError("unknown variant: " + s);
}

inline SparseMode parse_sparse_mode(const std::string& s) {
  if (s == "practical") return SparseMode::practical;
  if (s == "theoretical") return SparseMode::theoretical;
  throw ConfigError("unknown a_sparse_mode: " + s);
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "on") return true;
  if (s == "false" || s == "0" || s == "off") return false;
  throw ConfigError("expected boolean, got: " + s);
}

inline void apply_config_entry(DetectorConfig& cfg, const std::string& key,
                               const std::string& value) {
  try {
    if (key == "p")
      cfg.p = std::stoi(value);
    else if (key == "beta")
      cfg.beta = std::stod(value);
    else if (key == "gamma")
      cfg.gamma = std::stod(value);
    else if (key == "a_sparse_mode")
      cfg.a_sparse_mode = parse_sparse_mode(value);
    else if (key == "variant")
      cfg.variant = parse_variant(value);
    else if (key == "dedup")
      cfg.dedup = parse_bool(value);
    else
      throw ConfigError("unknown config key: " + key);
  } catch (const std::invalid_argument&) {
    throw ConfigError("invalid value for " + key + ": " + value);
  }
}

inline DetectorConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  DetectorConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

}  // namespace ocd
