#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ocd/calibrate.hpp"
#include "ocd/detector.hpp"
#include "ocd/grid.hpp"
#include "ocd/simulate.hpp"

namespace ocd {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

enum class StreamFormat { csv, jsonl };

inline StreamFormat parse_format(const std::string& s) {
  if (s == "csv") return StreamFormat::csv;
  if (s == "jsonl") return StreamFormat::jsonl;
  throw ConfigError("unknown stream format: " + s);
}

// Reads p-vectors from CSV rows or JSONL arrays. The dimension is inferred
// from the first data row and enforced afterwards; '#'-prefixed lines are
// comments. All errors carry the 1-based line number.
class TextStreamSource final : public ObservationSource {
 public:
  TextStreamSource(std::istream& in, StreamFormat format,
                   std::string name = "<stream>")
      : in_(in), format_(format), name_(std::move(name)) {}

  bool next(std::vector<double>& out) override {
    std::string line;
    while (std::getline(in_, line)) {
      ++lineno_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos) continue;
      if (line[first] == '#') continue;
      parse_row(line, out);
      if (p_ < 0) {
        p_ = static_cast<int>(out.size());
        if (p_ == 0) fail("empty data row");
      } else if (static_cast<int>(out.size()) != p_) {
        fail("row has " + std::to_string(out.size()) + " fields, expected " +
             std::to_string(p_));
      }
      return true;
    }
    if (in_.bad()) fail("read failure");
    return false;
  }

  int dim() const { return p_; }
  std::int64_t line_number() const { return lineno_; }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw IoError(name_ + ":" + std::to_string(lineno_) + ": " + msg);
  }

  void parse_row(const std::string& line, std::vector<double>& out) {
    out.clear();
    if (format_ == StreamFormat::jsonl) {
      nlohmann::json row = nlohmann::json::parse(line, nullptr, false);
      if (row.is_discarded() || !row.is_array()) fail("expected a JSON array");
      for (const auto& v : row) {
        if (!v.is_number()) fail("non-numeric field");
        out.push_back(v.get<double>());
      }
    } else {
      std::size_t pos = 0;
      while (pos <= line.size()) {
        std::size_t comma = line.find(',', pos);
        if (comma == std::string::npos) comma = line.size();
        const std::string field = line.substr(pos, comma - pos);
        try {
          std::size_t used = 0;
          const double v = std::stod(field, &used);
          while (used < field.size() &&
                 (field[used] == ' ' || field[used] == '\t'))
            ++used;
          if (used != field.size()) throw std::invalid_argument(field);
          out.push_back(v);
        } catch (const std::exception&) {
          fail("non-numeric field '" + field + "'");
        }
        pos = comma + 1;
        if (comma == line.size()) break;
      }
    }
    for (double v : out)
      if (!std::isfinite(v)) fail("non-finite value");
  }

  std::istream& in_;
  StreamFormat format_;
  std::string name_;
  int p_ = -1;
  std::int64_t lineno_ = 0;
};

// Owns the underlying file stream.
class FileStreamSource final : public ObservationSource {
 public:
  FileStreamSource(const std::string& path, StreamFormat format)
      : file_(std::make_unique<std::ifstream>(path)) {
    if (!*file_) throw IoError("cannot open data file: " + path);
    inner_ = std::make_unique<TextStreamSource>(*file_, format, path);
  }
  bool next(std::vector<double>& out) override { return inner_->next(out); }
  TextStreamSource& text() { return *inner_; }

 private:
  std::unique_ptr<std::ifstream> file_;
  std::unique_ptr<TextStreamSource> inner_;
};

struct PreprocessParams {
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<double> rho;  // empty unless AR(1) residuals requested
};

// Standardizes by mean and standard deviation estimated from the first
// training_n observations, which are consumed rather than monitored. With
// ar1, additionally emits AR(1) residuals (y_n - rho y_{n-1}) / sqrt(1-rho^2)
// with rho the lag-1 sample autocorrelation of the standardized training
// data. No estimated parameter depends on anything after the training prefix.
class PreprocessSource final : public ObservationSource {
 public:
  PreprocessSource(ObservationSource& inner, int training_n, bool ar1)
      : inner_(inner), training_n_(training_n), ar1_(ar1) {
    if (training_n < 10)
      throw ConfigError("preprocess: training_n must be >= 10");
  }

  bool next(std::vector<double>& out) override {
    if (!trained_) train();
    if (!inner_.next(out)) return false;
    standardize(out);
    if (ar1_) {
      for (std::size_t j = 0; j < out.size(); ++j) {
        const double y = out[j];
        out[j] = (y - params_.rho[j] * prev_[j]) / norm_[j];
        prev_[j] = y;
      }
    }
    return true;
  }

  const PreprocessParams& params() {
    if (!trained_) train();
    return params_;
  }

 private:
  void standardize(std::vector<double>& x) const {
    for (std::size_t j = 0; j < x.size(); ++j)
      x[j] = (x[j] - params_.mean[j]) / params_.sd[j];
  }

  void train() {
    std::vector<std::vector<double>> training;
    training.reserve(training_n_);
    std::vector<double> row;
    for (int i = 0; i < training_n_; ++i) {
      if (!inner_.next(row))
        throw IoError("preprocess: stream ended during the training prefix (" +
                      std::to_string(i) + " of " +
                      std::to_string(training_n_) + " rows)");
      training.push_back(row);
    }
    const std::size_t p = training.front().size();
    const double n = static_cast<double>(training_n_);
    params_.mean.assign(p, 0.0);
    params_.sd.assign(p, 0.0);
    for (const auto& r : training)
      for (std::size_t j = 0; j < p; ++j) params_.mean[j] += r[j];
    for (std::size_t j = 0; j < p; ++j) params_.mean[j] /= n;
    for (const auto& r : training)
      for (std::size_t j = 0; j < p; ++j) {
        const double d = r[j] - params_.mean[j];
        params_.sd[j] += d * d;
      }
    for (std::size_t j = 0; j < p; ++j) {
      params_.sd[j] = std::sqrt(params_.sd[j] / (n - 1.0));
      if (!(params_.sd[j] > 0.0))
        throw IoError("preprocess: coordinate " + std::to_string(j) +
                      " is constant over the training prefix");
    }
    if (ar1_) {
      params_.rho.assign(p, 0.0);
      std::vector<double> denom(p, 0.0);
      std::vector<double> prev_std(p, 0.0);
      for (int i = 0; i < training_n_; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
          const double y = (training[i][j] - params_.mean[j]) / params_.sd[j];
          if (i > 0) params_.rho[j] += prev_std[j] * y;
          denom[j] += y * y;
          prev_std[j] = y;
        }
      }
      norm_.assign(p, 1.0);
      for (std::size_t j = 0; j < p; ++j) {
        params_.rho[j] /= denom[j];
        if (!(std::abs(params_.rho[j]) < 1.0))
          throw IoError("preprocess: |rho| >= 1 in coordinate " +
                        std::to_string(j));
        norm_[j] = std::sqrt(1.0 - params_.rho[j] * params_.rho[j]);
      }
      prev_ = prev_std;  // last standardized training value seeds the AR(1)
    }
    trained_ = true;
  }

  ObservationSource& inner_;
  int training_n_;
  bool ar1_;
  bool trained_ = false;
  PreprocessParams params_;
  std::vector<double> prev_, norm_;
};

// --- JSON serialization -----------------------------------------------------

// Infinite thresholds (disabled statistics) are stored as the string "inf".
inline nlohmann::json threshold_value_to_json(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

inline double threshold_value_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf")
      return std::numeric_limits<double>::infinity();
    throw IoError("bad threshold value: " + j.dump());
  }
  return j.get<double>();
}

struct ThresholdFile {
  ThresholdSet thresholds;
  int p = 0;
  double beta = 0.0;
  double gamma = 0.0;
  std::uint64_t seed = 0;
  std::size_t b_reps = 0;
};

inline nlohmann::json to_json(const ThresholdFile& f) {
  return {
      {"p", f.p},
      {"beta", f.beta},
      {"gamma", f.gamma},
      {"t_diag", threshold_value_to_json(f.thresholds.t_diag)},
      {"t_off_dense", threshold_value_to_json(f.thresholds.t_off_dense)},
      {"t_off_sparse", threshold_value_to_json(f.thresholds.t_off_sparse)},
      {"source", to_string(f.thresholds.source)},
      {"seed", f.seed},
      {"B_reps", f.b_reps},
  };
}

inline ThresholdSource threshold_source_from_string(const std::string& s) {
  if (s == "theoretical_dense") return ThresholdSource::theoretical_dense;
  if (s == "theoretical_sparse") return ThresholdSource::theoretical_sparse;
  if (s == "theoretical_adaptive")
    return ThresholdSource::theoretical_adaptive;
  if (s == "monte_carlo") return ThresholdSource::monte_carlo;
  throw IoError("unknown threshold source: " + s);
}

inline ThresholdFile threshold_file_from_json(const nlohmann::json& j) {
  ThresholdFile f;
  f.p = j.at("p").get<int>();
  f.beta = j.at("beta").get<double>();
  f.gamma = j.at("gamma").get<double>();
  f.thresholds.t_diag = threshold_value_from_json(j.at("t_diag"));
  f.thresholds.t_off_dense = threshold_value_from_json(j.at("t_off_dense"));
  f.thresholds.t_off_sparse = threshold_value_from_json(j.at("t_off_sparse"));
  f.thresholds.source =
      threshold_source_from_string(j.at("source").get<std::string>());
  f.seed = j.value("seed", std::uint64_t{0});
  f.b_reps = j.value("B_reps", std::size_t{0});
  return f;
}

inline ThresholdFile load_threshold_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open threshold file: " + path);
  nlohmann::json j;
  in >> j;
  return threshold_file_from_json(j);
}

inline void save_threshold_file(const std::string& path,
                                const ThresholdFile& f) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write threshold file: " + path);
  out << to_json(f).dump(2) << "\n";
}

inline nlohmann::json declaration_report(const RunResult& result,
                                         const ThresholdSet& thresholds,
                                         const DetectorConfig& config) {
  nlohmann::json j;
  j["censored"] = result.censored();
  j["n"] = result.declared() ? result.declaration->n : result.n_processed;
  if (result.declared()) {
    const Declaration& d = *result.declaration;
    j["trigger"] = d.trigger_name();
    nlohmann::json list = nlohmann::json::array();
    for (StatKind k : d.triggered) list.push_back(to_string(k));
    j["triggered"] = list;
    j["anchor"] = d.anchor.coord;
    j["scale_index"] = d.anchor.scale;
    j["statistic_value"] = d.statistic_value;
  }
  j["thresholds"] = {
      {"t_diag", threshold_value_to_json(thresholds.t_diag)},
      {"t_off_dense", threshold_value_to_json(thresholds.t_off_dense)},
      {"t_off_sparse", threshold_value_to_json(thresholds.t_off_sparse)},
      {"source", to_string(thresholds.source)},
  };
  j["config"] = {
      {"p", config.p},
      {"beta", config.beta},
      {"gamma", config.gamma},
      {"variant", config.variant == Variant::ocd ? "ocd" : "ocd_prime"},
      {"a_dense", config.a_dense},
      {"a_sparse", config.a_sparse()},
      {"dedup", config.dedup},
  };
  return j;
}

inline TraceSink jsonl_trace_sink(std::ostream& out) {
  return [&out](const StatSnapshot& snap, bool declared) {
    nlohmann::json j = {
        {"n", snap.n},
        {"s_diag", snap.s_diag},
        {"s_off_d", snap.s_off_dense()},
        {"s_off_s", snap.s_off_sparse()},
        {"declared", declared},
    };
    out << j.dump() << "\n";
  };
}

// --- CSV stream output ------------------------------------------------------

inline void write_stream_csv(std::ostream& out, const ChangeSpec& spec,
                             const std::vector<std::vector<double>>& rows,
                             std::uint64_t seed) {
  out << "# p=" << spec.p() << " z=" << spec.z
      << " vartheta=" << format_double(spec.vartheta) << " s=" << spec.s_nominal
      << " seed=" << seed << "\n";
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ",";
      out << format_double(row[j]);
    }
    out << "\n";
  }
}

}  // namespace ocd
