#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ocd/bench.hpp"
#include "ocd/calibrate.hpp"
#include "ocd/detector.hpp"
#include "ocd/io.hpp"
#include "ocd/simulate.hpp"

namespace {

// Exit codes for `detect`, in the diff/cmp tradition: 0 means the stream ran
// to completion with no change declared, 1 means a change was declared, and
// 2 signals an error.
constexpr int kExitNoChange = 0;
constexpr int kExitDeclared = 1;
constexpr int kExitError = 2;

struct ConfigFlags {
  std::optional<std::string> config_file;
  std::optional<int> p;
  std::optional<double> beta;
  std::optional<double> gamma;
  std::optional<std::string> a_sparse_mode;
  std::optional<std::string> variant;
  std::optional<bool> dedup;

  void add_to(CLI::App& app) {
    app.add_option("--config", config_file, "flat key=value config file");
    app.add_option("--p", p, "stream dimension");
    app.add_option("--beta", beta, "lower bound on the change l2 norm");
    app.add_option("--gamma", gamma, "nominal patience");
    app.add_option("--a-sparse-mode", a_sparse_mode,
                   "sparse threshold level: practical|theoretical");
    app.add_option("--variant", variant, "ocd|ocd_prime");
    app.add_option("--dedup", dedup, "tail-length dedup fast path");
  }

  ocd::DetectorConfig resolve() const {
    ocd::DetectorConfig cfg;
    if (config_file) cfg = ocd::load_config_file(*config_file);
    if (p) cfg.p = *p;
    if (beta) cfg.beta = *beta;
    if (gamma) cfg.gamma = *gamma;
    if (a_sparse_mode) cfg.a_sparse_mode = ocd::parse_sparse_mode(*a_sparse_mode);
    if (variant) cfg.variant = ocd::parse_variant(*variant);
    if (dedup) cfg.dedup = *dedup;
    return cfg;
  }
};

std::unique_ptr<std::ostream> open_output(const std::string& path,
                                          std::ostream*& out) {
  if (path.empty() || path == "-") {
    out = &std::cout;
    return nullptr;
  }
  auto file = std::make_unique<std::ofstream>(path);
  if (!*file) throw ocd::IoError("cannot open output file: " + path);
  out = file.get();
  return file;
}

nlohmann::json bench_metadata(const ocd::DetectorConfig& cfg,
                              std::uint64_t seed, std::size_t reps,
                              const ocd::ThresholdSet& thr) {
  return {
      {"p", cfg.p},
      {"beta", cfg.beta},
      {"gamma", cfg.gamma},
      {"variant", cfg.variant == ocd::Variant::ocd ? "ocd" : "ocd_prime"},
      {"seed", seed},
      {"reps", reps},
      {"t_diag", ocd::threshold_value_to_json(thr.t_diag)},
      {"t_off_dense", ocd::threshold_value_to_json(thr.t_off_dense)},
      {"t_off_sparse", ocd::threshold_value_to_json(thr.t_off_sparse)},
      {"threshold_source", ocd::to_string(thr.source)},
  };
}

int run_detect(const ConfigFlags& flags, const std::string& input,
               const std::string& format_name,
               const std::string& thresholds_file,
               const std::string& theoretical_mode, int train_n, bool ar1,
               const std::string& trace_path,
               std::optional<std::int64_t> max_n) {
  const ocd::StreamFormat format = ocd::parse_format(format_name);

  std::unique_ptr<ocd::ObservationSource> file_source;
  std::unique_ptr<ocd::TextStreamSource> stdin_source;
  ocd::ObservationSource* source = nullptr;
  if (input.empty() || input == "-") {
    stdin_source = std::make_unique<ocd::TextStreamSource>(std::cin, format,
                                                           "<stdin>");
    source = stdin_source.get();
  } else {
    file_source = std::make_unique<ocd::FileStreamSource>(input, format);
    source = file_source.get();
  }

  std::unique_ptr<ocd::PreprocessSource> preprocessed;
  if (train_n > 0) {
    preprocessed = std::make_unique<ocd::PreprocessSource>(*source, train_n, ar1);
    source = preprocessed.get();
  }

  // The dimension comes from the first data row unless set explicitly; the
  // buffered row is replayed into the detector below.
  std::vector<double> first_row;
  const bool has_data = source->next(first_row);
  const bool p_explicit =
      flags.p.has_value() || flags.config_file.has_value() ||
      !thresholds_file.empty();

  ocd::DetectorConfig cfg = flags.resolve();
  ocd::ThresholdSet thresholds;
  if (!thresholds_file.empty()) {
    const ocd::ThresholdFile tf = ocd::load_threshold_file(thresholds_file);
    thresholds = tf.thresholds;
    if (!flags.p) cfg.p = tf.p;
    if (!flags.beta) cfg.beta = tf.beta;
    if (!flags.gamma) cfg.gamma = tf.gamma;
  } else {
    ocd::ThresholdMode mode = ocd::ThresholdMode::adaptive;
    if (theoretical_mode == "dense")
      mode = ocd::ThresholdMode::dense;
    else if (theoretical_mode == "sparse")
      mode = ocd::ThresholdMode::sparse;
    else if (theoretical_mode != "adaptive" && !theoretical_mode.empty())
      throw ocd::ConfigError("unknown theoretical mode: " + theoretical_mode);
    if (has_data && !p_explicit) cfg.p = static_cast<int>(first_row.size());
    thresholds = ocd::theoretical_thresholds(cfg, mode);
  }
  if (has_data && static_cast<int>(first_row.size()) != cfg.p)
    throw ocd::DataError("data has dimension " +
                         std::to_string(first_row.size()) +
                         ", but p is configured as " + std::to_string(cfg.p));
  cfg.validate();
  const ocd::ScaleGrid grid = ocd::build_grid(cfg);

  std::unique_ptr<std::ofstream> trace_file;
  ocd::TraceSink trace;
  if (!trace_path.empty()) {
    trace_file = std::make_unique<std::ofstream>(trace_path);
    if (!*trace_file)
      throw ocd::IoError("cannot open trace file: " + trace_path);
    trace = ocd::jsonl_trace_sink(*trace_file);
  }

  bool first_pending = has_data;
  ocd::FunctionSource replay([&](std::vector<double>& out) {
    if (first_pending) {
      out = first_row;
      first_pending = false;
      return true;
    }
    return source->next(out);
  });
  const ocd::RunResult result =
      ocd::run_detector(replay, cfg, grid, thresholds, max_n, trace);
  std::cout << ocd::declaration_report(result, thresholds, cfg).dump(2)
            << std::endl;
  return result.declared() ? kExitDeclared : kExitNoChange;
}

int run_calibrate(const ConfigFlags& flags, std::size_t b_reps,
                  std::uint64_t seed, const std::string& out_path,
                  unsigned threads) {
  ocd::DetectorConfig cfg = flags.resolve();
  cfg.validate();
  const ocd::ScaleGrid grid = ocd::build_grid(cfg);
  const ocd::ThresholdSet thresholds =
      ocd::calibrate_thresholds(cfg, grid, b_reps, seed, threads);
  ocd::ThresholdFile tf;
  tf.thresholds = thresholds;
  tf.p = cfg.p;
  tf.beta = cfg.beta;
  tf.gamma = cfg.gamma;
  tf.seed = seed;
  tf.b_reps = b_reps;
  if (out_path.empty() || out_path == "-")
    std::cout << ocd::to_json(tf).dump(2) << std::endl;
  else
    ocd::save_threshold_file(out_path, tf);
  return 0;
}

int run_simulate(int p, int s, double vartheta, std::int64_t z,
                 std::int64_t n_total, std::uint64_t seed,
                 const std::string& out_path) {
  ocd::ChangeSpec spec;
  if (vartheta == 0.0) {
    spec = ocd::ChangeSpec::null_stream(p);
    spec.z = z;
  } else {
    ocd::Rng dir_rng(ocd::derive_seed(seed, ocd::seed_tag::change_direction, 0));
    spec = ocd::make_change_spec(p, s, vartheta, z, dir_rng);
  }
  const auto rows = ocd::generate_stream(
      spec, n_total, ocd::derive_seed(seed, ocd::seed_tag::change_stream, 0));
  std::ostream* out = nullptr;
  auto holder = open_output(out_path, out);
  ocd::write_stream_csv(*out, spec, rows, seed);
  return 0;
}

int run_bench(const ConfigFlags& flags, const std::string& experiment,
              std::size_t reps, std::int64_t cap, std::uint64_t seed, int s,
              double vartheta, std::int64_t z, const std::string& mode_name,
              const std::vector<std::string>& methods,
              const std::string& thresholds_file, std::size_t b_reps,
              const std::string& table_path, const std::string& plot_path,
              std::int64_t n_points, unsigned threads) {
  ocd::DetectorConfig cfg = flags.resolve();
  cfg.validate();
  const ocd::ScaleGrid grid = ocd::build_grid(cfg);

  auto get_thresholds = [&]() -> ocd::ThresholdSet {
    if (!thresholds_file.empty())
      return ocd::load_threshold_file(thresholds_file).thresholds;
    return ocd::calibrate_thresholds(cfg, grid, b_reps, seed, threads);
  };

  std::ostream* table = nullptr;
  auto table_holder = open_output(table_path, table);

  if (experiment == "patience") {
    const ocd::ThresholdSet thr = get_thresholds();
    const ocd::PatienceResult res =
        ocd::estimate_patience(cfg, grid, thr, reps, cap, seed, threads);
    ocd::write_patience_csv(*table, cfg, res, cap, reps);
    *table << "# " << bench_metadata(cfg, seed, reps, thr).dump() << "\n";
    if (!plot_path.empty()) {
      std::ofstream plot(plot_path);
      ocd::write_run_lengths_csv(plot, res);
    }
    return 0;
  }
  if (experiment == "delay") {
    const ocd::ThresholdSet thr = get_thresholds();
    const ocd::DelayMode mode = mode_name == "first_trigger"
                                    ? ocd::DelayMode::first_trigger
                                    : ocd::DelayMode::all_three;
    const auto family = ocd::sparse_spec_family(cfg.p, s, vartheta, z, seed);
    const ocd::DelayResult res = ocd::estimate_delay(
        cfg, grid, thr, family, reps, mode, cap, seed, threads);
    ocd::write_delay_csv(*table, s, vartheta, cfg.beta, res);
    *table << "# " << bench_metadata(cfg, seed, reps, thr).dump() << "\n";
    if (!plot_path.empty()) {
      std::ofstream plot(plot_path);
      ocd::write_delay_reps_csv(plot, res);
    }
    return 0;
  }
  if (experiment == "compare") {
    *table << "p,s,vartheta,method,delay\n";
    const auto family = ocd::sparse_spec_family(cfg.p, s, vartheta, z, seed);
    for (const std::string& name : methods) {
      const ocd::Method method = ocd::parse_method(name);
      const auto thr = ocd::calibrate_method_thresholds(method, cfg, grid,
                                                        b_reps, seed, threads);
      const double delay = ocd::estimate_method_delay(
          method, cfg, grid, thr, family, reps, cap, seed, threads);
      *table << cfg.p << "," << s << "," << ocd::format_double(vartheta) << ","
             << name << "," << ocd::format_double(delay) << "\n";
    }
    *table << "# "
           << bench_metadata(cfg, seed, reps, ocd::ThresholdSet{}).dump()
           << "\n";
    return 0;
  }
  if (experiment == "complexity") {
    const ocd::ComplexityReport rep =
        ocd::complexity_probe(cfg, grid, n_points, seed);
    *table << "window,median_step_seconds,ints,reals\n";
    *table << "start," << ocd::format_double(rep.median_step_seconds_start)
           << "," << rep.footprint_start.ints << ","
           << rep.footprint_start.reals << "\n";
    *table << "end," << ocd::format_double(rep.median_step_seconds_end) << ","
           << rep.footprint_end.ints << "," << rep.footprint_end.reals << "\n";
    return 0;
  }
  throw ocd::ConfigError("unknown experiment: " + experiment);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ocd: online changepoint detection for high-dimensional "
               "Gaussian streams"};
  app.require_subcommand(1);

  // detect
  auto* detect = app.add_subcommand(
      "detect", "monitor a stream and report the first declaration");
  detect->footer("Exit status: 0 = no change declared (censored), "
                 "1 = change declared, 2 = error.");
  ConfigFlags detect_flags;
  detect_flags.add_to(*detect);
  std::string input = "-", format_name = "csv", thresholds_file,
              theoretical_mode = "adaptive", trace_path;
  int train_n = 0;
  bool ar1 = false;
  std::optional<std::int64_t> max_n;
  detect->add_option("--input", input, "data file, or - for stdin");
  detect->add_option("--format", format_name, "csv|jsonl");
  detect->add_option("--thresholds", thresholds_file,
                     "JSON threshold file from `calibrate`");
  detect->add_option("--theoretical", theoretical_mode,
                     "dense|sparse|adaptive (when no threshold file)");
  detect->add_option("--train", train_n,
                     "standardize using this many leading observations");
  detect->add_flag("--ar1", ar1, "also fit AR(1) residuals on the prefix");
  detect->add_option("--trace", trace_path, "per-step JSON-lines trace file");
  detect->add_option("--max-n", max_n, "censor after this many observations");

  // calibrate
  auto* calibrate =
      app.add_subcommand("calibrate", "Monte Carlo threshold calibration");
  ConfigFlags cal_flags;
  cal_flags.add_to(*calibrate);
  std::size_t b_reps = ocd::kDefaultCalibrationReps;
  std::uint64_t seed = 1;
  std::string out_path;
  unsigned threads = 0;
  calibrate->add_option("--B", b_reps, "Monte Carlo replications");
  calibrate->add_option("--seed", seed, "master seed");
  calibrate->add_option("--out", out_path, "output JSON file (default stdout)");
  calibrate->add_option("--threads", threads, "worker threads (0 = all)");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic stream");
  int sim_p = 10, sim_s = 1;
  double sim_vartheta = 0.0;
  std::int64_t sim_z = 0, sim_n = 1000;
  std::uint64_t sim_seed = 1;
  std::string sim_out;
  simulate->add_option("--p", sim_p, "dimension")->required();
  simulate->add_option("--s", sim_s, "sparsity of the change direction");
  simulate->add_option("--vartheta", sim_vartheta,
                       "l2 norm of the change (0 = null stream)");
  simulate->add_option("--z", sim_z, "changepoint time");
  simulate->add_option("--n", sim_n, "total observations")->required();
  simulate->add_option("--seed", sim_seed, "master seed");
  simulate->add_option("--out", sim_out, "output CSV (default stdout)");

  // bench
  auto* bench = app.add_subcommand("bench", "experiment harness");
  ConfigFlags bench_flags;
  bench_flags.add_to(*bench);
  std::string experiment = "patience", mode_name = "all_three", table_path,
              plot_path, bench_thresholds;
  std::size_t reps = 200, bench_b = ocd::kDefaultCalibrationReps;
  std::int64_t cap = 20000, bench_z = 0, n_points = 100000;
  std::uint64_t bench_seed = 1;
  int bench_s = 1;
  double bench_vartheta = 1.0;
  unsigned bench_threads = 0;
  std::vector<std::string> methods = {"ocd", "mei", "xs", "chan"};
  bench->add_option("--experiment", experiment,
                    "patience|delay|compare|complexity");
  bench->add_option("--reps", reps, "replications");
  bench->add_option("--cap", cap, "truncation point for each run");
  bench->add_option("--seed", bench_seed, "master seed");
  bench->add_option("--s", bench_s, "sparsity of the change direction");
  bench->add_option("--vartheta", bench_vartheta, "l2 norm of the change");
  bench->add_option("--z", bench_z, "changepoint time");
  bench->add_option("--mode", mode_name, "all_three|first_trigger");
  bench->add_option("--method", methods,
                    "methods for compare: ocd|ocd_prime|mei|xs|chan");
  bench->add_option("--thresholds", bench_thresholds,
                    "JSON threshold file (otherwise calibrated in-run)");
  bench->add_option("--B", bench_b, "calibration replications");
  bench->add_option("--table-out", table_path, "CSV output (default stdout)");
  bench->add_option("--plot-data-out", plot_path,
                    "long-format per-replication CSV");
  bench->add_option("--n-points", n_points, "complexity probe run length");
  bench->add_option("--threads", bench_threads, "worker threads (0 = all)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (detect->parsed())
      return run_detect(detect_flags, input, format_name, thresholds_file,
                        theoretical_mode, train_n, ar1, trace_path, max_n);
    if (calibrate->parsed())
      return run_calibrate(cal_flags, b_reps, seed, out_path, threads);
    if (simulate->parsed())
      return run_simulate(sim_p, sim_s, sim_vartheta, sim_z, sim_n, sim_seed,
                          sim_out);
    if (bench->parsed())
      return run_bench(bench_flags, experiment, reps, cap, bench_seed, bench_s,
                       bench_vartheta, bench_z, mode_name, methods,
                       bench_thresholds, bench_b, table_path, plot_path,
                       n_points, bench_threads);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitError;
  }
  return kExitError;
}
