#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "uwbloc/experiment.hpp"

namespace fs = std::filesystem;
using namespace uwbloc;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
};

ExperimentConfig require_config(const Globals& g) {
  if (g.config_path.empty()) throw ConfigError("--config is required for this command", 0);
  ExperimentConfig cfg = load_config(g.config_path);
  if (g.seed) cfg.scenario.seed = *g.seed;
  return cfg;
}

fs::path out_path(const Globals& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / name;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  return f;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot read " + p.string());
  return f;
}

void write_report(const Globals& g, const AccuracyReport& report) {
  const auto path = out_path(g, "report.json");
  open_out(path) << report_to_json(report);
  print_report_table(std::cout, report);
  std::cout << "report written to " << path.string() << "\n";
}

void cmd_simulate(const Globals& g) {
  const auto cfg = require_config(g);
  const EventTrace trace = simulate(cfg);
  const auto path = out_path(g, "trace.jsonl");
  auto f = open_out(path);
  write_trace(f, trace);
  std::cout << "epochs " << cfg.scenario.epochs << ", messages " << trace.message_count() << ", receptions "
            << trace.count(TraceEventType::Rx) << ", drops " << trace.count(TraceEventType::Drop) << "\n";
  std::cout << "trace written to " << path.string() << "\n";
}

void cmd_localize(const Globals& g, const std::string& trace_file) {
  const auto cfg = require_config(g);
  const fs::path trace_path = trace_file.empty() ? fs::path(g.out_dir) / "trace.jsonl" : fs::path(trace_file);
  auto in = open_in(trace_path);
  const EventTrace trace = read_trace(in);
  const auto rows = localize(trace, cfg);
  const auto path = out_path(g, "positions.csv");
  auto f = open_out(path);
  write_positions_csv(f, rows);
  std::size_t ok = 0;
  for (const auto& r : rows) ok += r.status == FixStatus::Ok;
  std::cout << ok << " of " << rows.size() << " epochs localized\n";
  std::cout << "positions written to " << path.string() << "\n";
}

void cmd_report(const Globals& g, const std::string& positions_file, std::vector<double> thresholds) {
  std::optional<ExperimentConfig> cfg;
  if (!g.config_path.empty()) cfg = require_config(g);
  if (thresholds.empty()) thresholds = cfg ? cfg->thresholds_m : std::vector<double>{0.1, 0.2};
  const fs::path pos_path = positions_file.empty() ? fs::path(g.out_dir) / "positions.csv" : fs::path(positions_file);
  auto in = open_in(pos_path);
  const auto rows = read_positions_csv(in);
  AccuracyReport report = make_report(rows, thresholds);
  if (cfg) {
    report.seed = cfg->scenario.seed;
    report.config_hash = config_hash(*cfg);
    const fs::path trace_path = fs::path(g.out_dir) / "trace.jsonl";
    if (fs::exists(trace_path)) {
      auto tin = open_in(trace_path);
      attach_trace_counts(report, read_trace(tin));
    }
  }
  write_report(g, report);
}

void cmd_run(const Globals& g) {
  const auto cfg = require_config(g);
  const RunOutput run = run_experiment(cfg);
  {
    auto f = open_out(out_path(g, "trace.jsonl"));
    write_trace(f, run.trace);
  }
  {
    auto f = open_out(out_path(g, "positions.csv"));
    write_positions_csv(f, run.rows);
  }
  write_report(g, run.report);
}

void cmd_sweep(const Globals& g, const std::string& param, const std::vector<std::string>& values, bool serial) {
  const auto cfg = require_config(g);
  const auto points = sweep(cfg, param, values, !serial);
  const auto path = out_path(g, "sweep.csv");
  auto f = open_out(path);
  write_sweep_csv(f, param, points);
  std::cout << std::left << std::setw(14) << param;
  for (double t : cfg.thresholds_m) std::cout << std::right << std::setw(10) << (std::to_string(int(t * 100 + 0.5)) + "cm %");
  std::cout << std::setw(12) << "mean m" << "\n";
  std::cout << std::fixed;
  for (const auto& p : points) {
    std::cout << std::left << std::setw(14) << p.value << std::right << std::setprecision(1);
    for (double pct : p.report.pct_within) std::cout << std::setw(10) << pct;
    std::cout << std::setprecision(4) << std::setw(12) << p.report.mean_error_m << "\n";
  }
  std::cout << "sweep written to " << path.string() << "\n";
}

void cmd_driftplot(const Globals& g) {
  const auto cfg = require_config(g);
  const DriftResult drift = driftplot(cfg);
  const auto path = out_path(g, "drift.csv");
  auto f = open_out(path);
  write_drift_csv(f, drift);
  std::cout << std::fixed << std::setprecision(3) << "anchors " << drift.anchor_a.value << " vs "
            << drift.anchor_b.value << ": " << drift.samples.size() << " SYNC epochs, slope " << drift.slope * 1e9
            << " ns/s (" << drift.slope * kSpeedOfLight << " m of range error per second)\n";
  std::cout << "drift written to " << path.string() << "\n";
}

void cmd_calibrate(const Globals& g, const std::string& samples_file) {
  auto in = open_in(samples_file);
  const auto samples = read_calibration_csv(in);
  const CalibrationModel model = calibrate(samples);
  std::cout << std::setprecision(6) << "measured = " << model.slope << " * true + " << model.offset << " m ("
            << samples.size() << " samples)\n";
  if (!model.plausible()) std::cout << "warning: slope outside the plausible range (0.5, 1.5)\n";
  const auto path = out_path(g, "calibration.json");
  nlohmann::json j = {{"slope", model.slope}, {"offset_m", model.offset}};
  open_out(path) << j.dump(2) << "\n";
  std::cout << "calibration written to " << path.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UWB localization simulator and experiment harness"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "experiment config JSON");
  auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", g.out_dir, "output directory")->capture_default_str();

  auto* simulate_cmd = app.add_subcommand("simulate", "run the network simulation and write trace.jsonl");
  auto* localize_cmd = app.add_subcommand("localize", "solve positions from a trace into positions.csv");
  std::string trace_file;
  localize_cmd->add_option("--trace", trace_file, "trace file (default OUT/trace.jsonl)");
  auto* report_cmd = app.add_subcommand("report", "accuracy statistics from positions.csv");
  std::string positions_file;
  std::vector<double> thresholds;
  report_cmd->add_option("--positions", positions_file, "positions CSV (default OUT/positions.csv)");
  report_cmd->add_option("--thresholds", thresholds, "error thresholds in meters")->delimiter(',');
  auto* run_cmd = app.add_subcommand("run", "simulate, localize and report in one step");
  auto* sweep_cmd = app.add_subcommand("sweep", "run the config once per parameter value");
  std::string param;
  std::vector<std::string> values;
  bool serial = false;
  sweep_cmd->add_option("--param", param, "sync_interval_s, timestamp_noise_sigma_s, method or filter")->required();
  sweep_cmd->add_option("--values", values, "comma-separated values")->delimiter(',');
  sweep_cmd->add_flag("--serial", serial, "run the values one after another");
  auto* drift_cmd = app.add_subcommand("driftplot", "relative drift of two anchors from SYNC receptions");
  auto* calibrate_cmd = app.add_subcommand("calibrate", "fit measured = slope * true + offset");
  std::string samples_file;
  calibrate_cmd->add_option("--samples", samples_file, "CSV with true_m,measured_m columns")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  if (seed_opt->count()) g.seed = seed;

  try {
    if (*simulate_cmd) cmd_simulate(g);
    if (*localize_cmd) cmd_localize(g, trace_file);
    if (*report_cmd) cmd_report(g, positions_file, thresholds);
    if (*run_cmd) cmd_run(g);
    if (*sweep_cmd) cmd_sweep(g, param, values, serial);
    if (*drift_cmd) cmd_driftplot(g);
    if (*calibrate_cmd) cmd_calibrate(g, samples_file);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    const bool config = e.code() == ErrorCode::ConfigError || e.code() == ErrorCode::InvalidArgument;
    return config ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
