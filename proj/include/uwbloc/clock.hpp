#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "uwbloc/core.hpp"

namespace uwbloc {

// Oscillator description. The reading at true time t is
//   start_offset + integral_0^t skew(s) ds
// where skew(s) starts at `skew` and diffuses as a Wiener process with
// intensity random_walk_sigma (1/sqrt(s)).
struct ClockModel {
  double start_offset = 0.0;  // s
  double skew = 1.0;
  double random_walk_sigma = 0.0;

  void validate() const;
};

// One deterministic realization of a ClockModel. The skew path is generated
// lazily on a fixed grid, so reads must come from a single thread.
class ClockRealization {
 public:
  static constexpr double kGridStep = 1e-3;  // s

  ClockRealization(ClockModel model, std::uint64_t seed, double tick_period = kDefaultTickPeriod);

  // Continuous (unquantized) local clock reading in seconds.
  long double reading(long double true_seconds);

  // Instantaneous skew at a true time.
  double skew_at(long double true_seconds);

  // Latched counter value; `noise` (s) is added before quantization.
  DeviceTime stamp(long double true_seconds, double noise = 0.0);
  DeviceTime read(TrueTime now) { return stamp(static_cast<long double>(now.picoseconds) * 1e-12L); }

  const ClockModel& model() const { return model_; }
  double tick_period() const { return tick_period_; }

 private:
  void extend_to(std::size_t step);

  ClockModel model_;
  double tick_period_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  // phase_[j] is the integrated skew at j * kGridStep, skew_[j] the skew on [j, j+1).
  std::vector<long double> phase_;
  std::vector<double> skew_;
};

// Stateless read of a fresh realization (convenience for one-off reads).
DeviceTime read_clock(const ClockModel& model, TrueTime now, std::uint64_t rng_seed,
                      double tick_period = kDefaultTickPeriod);

// Clock rate of an anchor relative to the sync clock from two consecutive SYNC
// receptions. Propagation offsets cancel in the differences.
double estimate_skew(double t_sync_rx_prev, double t_sync_rx_cur, double t_sync_tx_prev, double t_sync_tx_cur);

enum class ProcessNoiseModel {
  Diagonal,  // Q = diag(sigma2_t, sigma2_m) per SYNC step
  Wiener,    // Q from an integrated random-walk skew with intensity wiener_q (1/s)
};

struct ClockKfParams {
  double sigma2_t_ns2 = 0.4;  // timing variance, ns^2
  double sigma2_m = 0.01;     // skew variance (dimensionless^2)
  double p0_t_ns2 = 1.0;      // initial timestamp variance, ns^2
  double p0_m = 0.001;        // initial skew variance
  ProcessNoiseModel process = ProcessNoiseModel::Diagonal;
  double wiener_q = 0.0;  // skew diffusion intensity (1/s) for the Wiener model

  void validate() const;

  Eigen::Matrix2d process_noise(double dt_sync) const;
  Eigen::Matrix2d measurement_noise() const;
  Eigen::Matrix2d initial_covariance() const;
};

// Filter state for one anchor: estimated anchor-clock reading at the last SYNC
// and the anchor skew relative to the sync clock. Units are seconds and
// dimensionless skew.
struct ClockKfState {
  double t_hat = 0.0;
  double m_hat = 1.0;
  Eigen::Matrix2d P = Eigen::Matrix2d::Identity();
};

ClockKfState kf_init(double t_measured, double m_measured, const ClockKfParams& params);

ClockKfState kf_predict(const ClockKfState& state, double dt_sync, const ClockKfParams& params);

// Measurement is [timestamp, ratio skew] with covariance diag(sigma2_t, sigma2_m).
ClockKfState kf_update(const ClockKfState& state, double measured_t, double measured_m, const ClockKfParams& params);

// Anchor-clock reading predicted at sync-clock time `tau`, with `tau_last_sync`
// the sync-clock time of the SYNC the state refers to.
inline double kf_interpolate(const ClockKfState& state, double tau, double tau_last_sync) {
  return state.t_hat + state.m_hat * (tau - tau_last_sync);
}

}  // namespace uwbloc
