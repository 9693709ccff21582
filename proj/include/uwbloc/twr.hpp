#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "uwbloc/core.hpp"

namespace uwbloc {

// Durations of a ranging exchange. Round 1 is measured by the initiator
// (round) and responder (reply); round 2, when present, the other way round.
struct TwrExchange {
  double t_round1 = 0.0;
  double t_reply1 = 0.0;
  std::optional<double> t_round2;
  std::optional<double> t_reply2;

  // Builds both rounds from the six device timestamps of POLL / POLL_ACK / RANGE_FINAL.
  static TwrExchange from_timestamps(double poll_tx, double poll_rx, double ack_tx, double ack_rx, double final_tx,
                                     double final_rx);
};

double single_sided_tof(const TwrExchange& exchange);

// Symmetric double-sided estimate; cancels clock skew to first order.
double sds_tof(const TwrExchange& exchange);

inline double tof_to_range(double tof) { return tof * kSpeedOfLight; }

struct CalibrationModel {
  double slope = 1.0;
  double offset = 0.0;  // m

  bool plausible() const { return slope > 0.5 && slope < 1.5; }
};

struct CalibrationSample {
  double true_distance = 0.0;
  double measured_distance = 0.0;
};

// Least-squares fit of measured = slope * true + offset.
CalibrationModel calibrate(std::span<const CalibrationSample> samples);

struct CalibratedRange {
  double range = 0.0;
  bool clamped = false;
};

// Inverts the fitted forward model; negative results clamp to zero and are flagged.
CalibratedRange apply_calibration(const CalibrationModel& model, double measured);

// Two-column CSV (true_m, measured_m) with a header row.
std::vector<CalibrationSample> read_calibration_csv(std::istream& in);

struct RangeMeasurement {
  NodeId anchor;
  double range = 0.0;  // m
  std::int64_t epoch = 0;
  bool clamped = false;
};

struct MessageBudget {
  int anchors = 0;
  int messages_per_anchor = 0;
  int messages_per_localization = 0;
  double localization_period_s = 0.0;
  double max_update_rate_hz = 0.0;
};

// Anchors needed for an unambiguous fix plus the message count and the update
// rate allowed when every message turn waits out the reply floor.
MessageBudget message_budget(int n_dim, bool tag_initiated, double reply_floor = 500e-6);

// Forward TDoA: RANGE_REQ, SYNC, RANGE per fix.
MessageBudget tdoa_message_budget(int n_dim, double reply_floor = 500e-6);

}  // namespace uwbloc
