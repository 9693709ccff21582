#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uwbloc/clock.hpp"
#include "uwbloc/netsim.hpp"
#include "uwbloc/solver.hpp"
#include "uwbloc/tdoa.hpp"
#include "uwbloc/twr.hpp"

namespace uwbloc {

enum class Protocol { TwrSingle, TwrSds, TdoaRaw, TdoaKalman };

std::string_view to_string(Protocol protocol);
std::optional<Protocol> parse_protocol(std::string_view name);
inline bool is_tdoa(Protocol p) { return p == Protocol::TdoaRaw || p == Protocol::TdoaKalman; }

// Random clocks for every node without an explicit entry, drawn from the run seed.
struct ClockGenerator {
  double skew_ppm_max = 0.0;       // skew uniform in 1 +- this * 1e-6
  double start_offset_max_s = 0.0;  // offset uniform in [0, this]
  double random_walk_sigma_per_sqrt_s = 0.0;
};

struct ExperimentConfig {
  int schema_version = 1;
  Protocol protocol = Protocol::TdoaRaw;
  ScenarioConfig scenario;  // layout, timing, clocks, channel, trajectory, seed
  std::optional<ClockGenerator> clock_generator;
  SolveMethod method = SolveMethod::LeastSquares;
  bool use_prior = true;
  ClockKfParams kalman;
  std::optional<CalibrationModel> calibration;
  std::vector<double> thresholds_m{0.1, 0.2};

  // Throws Error(ConfigError).
  void validate() const;

  // Scenario with generated clocks filled in.
  ScenarioConfig resolved_scenario() const;
};

// Config error carrying the 1-based line of the offending key, 0 if unknown.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, std::size_t line)
      : Error(ErrorCode::ConfigError, line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);

// FNV-1a over the canonical JSON form.
std::uint64_t config_hash(const ExperimentConfig& config);

EventTrace simulate(const ExperimentConfig& config);

enum class FixStatus { Ok, Incomplete, InsufficientHistory, Failed, Ambiguous };

std::string_view to_string(FixStatus status);
std::optional<FixStatus> parse_fix_status(std::string_view name);

struct PositionRow {
  std::int64_t epoch = 0;
  FixStatus status = FixStatus::Ok;
  double t_s = 0.0;  // true time the truth position refers to
  Position estimate;
  double residual = 0.0;
  int iterations = 0;
  double wall_time_us = 0.0;
  Position truth;
};

std::vector<PositionRow> localize(const EventTrace& trace, const ExperimentConfig& config);

// Per-epoch ranges from a TWR trace, calibration applied when configured.
std::map<std::int64_t, std::vector<RangeMeasurement>> twr_ranges(const EventTrace& trace,
                                                                 const ExperimentConfig& config);

void write_positions_csv(std::ostream& out, const std::vector<PositionRow>& rows);
std::vector<PositionRow> read_positions_csv(std::istream& in);

struct AccuracyReport {
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> config_hash;
  std::size_t epochs_total = 0;
  std::size_t epochs_ok = 0;
  std::vector<double> thresholds_m;
  std::vector<double> pct_within;  // over successful epochs
  double mean_error_m = 0.0;
  double median_error_m = 0.0;
  double p95_error_m = 0.0;
  double update_rate_hz = 0.0;
  std::map<std::string, std::size_t> messages;  // by kind plus "total"
  std::vector<double> errors_m;
};

double pct_within(const std::vector<double>& errors, double threshold);

// Throws InvalidArgument on an empty row set.
AccuracyReport make_report(const std::vector<PositionRow>& rows, const std::vector<double>& thresholds);
void attach_trace_counts(AccuracyReport& report, const EventTrace& trace);

std::string report_to_json(const AccuracyReport& report);
void print_report_table(std::ostream& out, const AccuracyReport& report);

// Full pipeline for one config.
struct RunOutput {
  EventTrace trace;
  std::vector<PositionRow> rows;
  AccuracyReport report;
};
RunOutput run_experiment(const ExperimentConfig& config);

// Sweepable fields: sync_interval_s, timestamp_noise_sigma_s, method, filter.
ExperimentConfig apply_sweep_value(const ExperimentConfig& base, const std::string& parameter, const std::string& value);

struct SweepPoint {
  std::string value;
  AccuracyReport report;
};
std::vector<SweepPoint> sweep(const ExperimentConfig& base, const std::string& parameter,
                              const std::vector<std::string>& values, bool parallel = true);
void write_sweep_csv(std::ostream& out, const std::string& parameter, const std::vector<SweepPoint>& points);

struct DriftSample {
  double t_sync = 0.0;           // sync clock, s
  double interval_diff = 0.0;    // (rx_A,i - rx_A,i-1) - (rx_B,i - rx_B,i-1), s
  double cumulative_diff = 0.0;  // (rx_A,i - rx_A,0) - (rx_B,i - rx_B,0), s
};
struct DriftResult {
  NodeId anchor_a;
  NodeId anchor_b;
  std::vector<DriftSample> samples;
  double slope = 0.0;  // s per s of sync time
};

// Relative drift of two anchors seen through consecutive SYNC receptions.
DriftResult driftplot(const ExperimentConfig& config);
void write_drift_csv(std::ostream& out, const DriftResult& result);

}  // namespace uwbloc
