#include "uwbloc/twr.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>
#include <string>

namespace uwbloc {

TwrExchange TwrExchange::from_timestamps(double poll_tx, double poll_rx, double ack_tx, double ack_rx,
                                         double final_tx, double final_rx) {
  TwrExchange e;
  e.t_round1 = ack_rx - poll_tx;
  e.t_reply1 = ack_tx - poll_rx;
  e.t_round2 = final_rx - ack_tx;
  e.t_reply2 = final_tx - ack_rx;
  return e;
}

double single_sided_tof(const TwrExchange& exchange) { return (exchange.t_round1 - exchange.t_reply1) / 2.0; }

double sds_tof(const TwrExchange& exchange) {
  if (!exchange.t_round2 || !exchange.t_reply2) {
    throw Error(ErrorCode::DegenerateExchange, "double-sided ranging needs both rounds");
  }
  const double round1 = exchange.t_round1;
  const double reply1 = exchange.t_reply1;
  const double round2 = *exchange.t_round2;
  const double reply2 = *exchange.t_reply2;
  const double denom = round1 + round2 + reply1 + reply2;
  if (!(denom > 0.0)) throw Error(ErrorCode::DegenerateExchange, "exchange durations sum to zero");
  return (round1 * round2 - reply1 * reply2) / denom;
}

CalibrationModel calibrate(std::span<const CalibrationSample> samples) {
  if (samples.size() < 2) throw Error(ErrorCode::RankDeficient, "calibration needs at least two samples");
  const double n = static_cast<double>(samples.size());
  double mean_x = 0.0;
  double mean_y = 0.0;
  for (const auto& s : samples) {
    mean_x += s.true_distance;
    mean_y += s.measured_distance;
  }
  mean_x /= n;
  mean_y /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& s : samples) {
    const double dx = s.true_distance - mean_x;
    sxx += dx * dx;
    sxy += dx * (s.measured_distance - mean_y);
  }
  if (!(sxx > 1e-12 * n * std::max(1.0, mean_x * mean_x))) {
    throw Error(ErrorCode::RankDeficient, "calibration true distances are all equal");
  }
  CalibrationModel model;
  model.slope = sxy / sxx;
  model.offset = mean_y - model.slope * mean_x;
  return model;
}

CalibratedRange apply_calibration(const CalibrationModel& model, double measured) {
  if (model.slope == 0.0) throw Error(ErrorCode::InvalidArgument, "calibration slope is zero");
  const double r = (measured - model.offset) / model.slope;
  if (r < 0.0) return {0.0, true};
  return {r, false};
}

std::vector<CalibrationSample> read_calibration_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::IoError, "calibration CSV is empty");
  std::vector<CalibrationSample> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    CalibrationSample s;
    if (!(row >> s.true_distance >> s.measured_distance)) {
      throw Error(ErrorCode::IoError, "calibration CSV line " + std::to_string(line_no) + " is malformed");
    }
    out.push_back(s);
  }
  return out;
}

MessageBudget message_budget(int n_dim, bool tag_initiated, double reply_floor) {
  if (n_dim != 2 && n_dim != 3) throw Error(ErrorCode::InvalidArgument, "n_dim must be 2 or 3");
  MessageBudget b;
  b.anchors = n_dim + 1;
  b.messages_per_anchor = tag_initiated ? 4 : 3;
  b.messages_per_localization = b.anchors * b.messages_per_anchor;
  b.localization_period_s = b.messages_per_localization * reply_floor;
  b.max_update_rate_hz = 1.0 / b.localization_period_s;
  return b;
}

MessageBudget tdoa_message_budget(int n_dim, double reply_floor) {
  if (n_dim != 2 && n_dim != 3) throw Error(ErrorCode::InvalidArgument, "n_dim must be 2 or 3");
  MessageBudget b;
  b.anchors = n_dim + 1;
  b.messages_per_anchor = 0;
  b.messages_per_localization = 3;
  b.localization_period_s = b.messages_per_localization * reply_floor;
  b.max_update_rate_hz = 1.0 / b.localization_period_s;
  return b;
}

}  // namespace uwbloc
