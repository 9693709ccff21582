#include "uwbloc/clock.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/LU>

namespace uwbloc {

namespace {
constexpr double kNs2ToS2 = 1e-18;
constexpr double kMinSkew = 0.5;
}  // namespace

void ClockModel::validate() const {
  if (!(skew > 0.0) || !std::isfinite(skew)) throw Error(ErrorCode::ConfigError, "clock skew must be positive");
  if (!(start_offset >= 0.0) || !std::isfinite(start_offset)) {
    throw Error(ErrorCode::ConfigError, "clock start offset must be non-negative");
  }
  if (!(random_walk_sigma >= 0.0)) throw Error(ErrorCode::ConfigError, "random walk sigma must be >= 0");
}

ClockRealization::ClockRealization(ClockModel model, std::uint64_t seed, double tick_period)
    : model_(model), tick_period_(tick_period), rng_(seed) {
  model_.validate();
  if (!(tick_period_ > 0.0)) throw Error(ErrorCode::InvalidArgument, "tick period must be positive");
  phase_.push_back(0.0L);
  skew_.push_back(model_.skew);
}

void ClockRealization::extend_to(std::size_t step) {
  const double step_sigma = model_.random_walk_sigma * std::sqrt(kGridStep);
  while (skew_.size() <= step) {
    phase_.push_back(phase_.back() + static_cast<long double>(skew_.back()) * kGridStep);
    skew_.push_back(std::max(kMinSkew, skew_.back() + step_sigma * normal_(rng_)));
  }
}

long double ClockRealization::reading(long double true_seconds) {
  const long double t = std::max(0.0L, true_seconds);
  if (model_.random_walk_sigma == 0.0) {
    return static_cast<long double>(model_.start_offset) + static_cast<long double>(model_.skew) * t;
  }
  const auto step = static_cast<std::size_t>(t / kGridStep);
  extend_to(step);
  const long double into = t - static_cast<long double>(step) * kGridStep;
  return model_.start_offset + phase_[step] + static_cast<long double>(skew_[step]) * into;
}

double ClockRealization::skew_at(long double true_seconds) {
  if (model_.random_walk_sigma == 0.0) return model_.skew;
  const auto step = static_cast<std::size_t>(std::max(0.0L, true_seconds) / kGridStep);
  extend_to(step);
  return skew_[step];
}

DeviceTime ClockRealization::stamp(long double true_seconds, double noise) {
  return DeviceTime::from_seconds(reading(true_seconds) + noise, tick_period_);
}

DeviceTime read_clock(const ClockModel& model, TrueTime now, std::uint64_t rng_seed, double tick_period) {
  ClockRealization clock(model, rng_seed, tick_period);
  return clock.read(now);
}

double estimate_skew(double t_sync_rx_prev, double t_sync_rx_cur, double t_sync_tx_prev, double t_sync_tx_cur) {
  const double tx_interval = t_sync_tx_cur - t_sync_tx_prev;
  if (!(tx_interval > 0.0)) {
    throw Error(ErrorCode::DegenerateInterval, "SYNC transmit interval must be positive, got " +
                                                   std::to_string(tx_interval));
  }
  return (t_sync_rx_cur - t_sync_rx_prev) / tx_interval;
}

void ClockKfParams::validate() const {
  if (!(sigma2_t_ns2 >= 0.0 && sigma2_m >= 0.0 && p0_t_ns2 >= 0.0 && p0_m >= 0.0 && wiener_q >= 0.0)) {
    throw Error(ErrorCode::ConfigError, "Kalman variances must be non-negative");
  }
}

Eigen::Matrix2d ClockKfParams::process_noise(double dt_sync) const {
  Eigen::Matrix2d q = Eigen::Matrix2d::Zero();
  switch (process) {
    case ProcessNoiseModel::Diagonal:
      q(0, 0) = sigma2_t_ns2 * kNs2ToS2;
      q(1, 1) = sigma2_m;
      break;
    case ProcessNoiseModel::Wiener: {
      const double dt = dt_sync;
      q(0, 0) = wiener_q * dt * dt * dt / 3.0;
      q(0, 1) = q(1, 0) = wiener_q * dt * dt / 2.0;
      q(1, 1) = wiener_q * dt;
      break;
    }
  }
  return q;
}

Eigen::Matrix2d ClockKfParams::measurement_noise() const {
  Eigen::Matrix2d r = Eigen::Matrix2d::Zero();
  r(0, 0) = sigma2_t_ns2 * kNs2ToS2;
  r(1, 1) = sigma2_m;
  return r;
}

Eigen::Matrix2d ClockKfParams::initial_covariance() const {
  Eigen::Matrix2d p = Eigen::Matrix2d::Zero();
  p(0, 0) = p0_t_ns2 * kNs2ToS2;
  p(1, 1) = p0_m;
  return p;
}

ClockKfState kf_init(double t_measured, double m_measured, const ClockKfParams& params) {
  params.validate();
  return {t_measured, m_measured, params.initial_covariance()};
}

ClockKfState kf_predict(const ClockKfState& state, double dt_sync, const ClockKfParams& params) {
  if (!(dt_sync > 0.0)) throw Error(ErrorCode::DegenerateInterval, "predict step must be positive");
  Eigen::Matrix2d F;
  F << 1.0, dt_sync, 0.0, 1.0;
  ClockKfState next;
  next.t_hat = state.t_hat + state.m_hat * dt_sync;
  next.m_hat = state.m_hat;
  next.P = F * state.P * F.transpose() + params.process_noise(dt_sync);
  next.P = (0.5 * (next.P + next.P.transpose())).eval();
  return next;
}

ClockKfState kf_update(const ClockKfState& state, double measured_t, double measured_m, const ClockKfParams& params) {
  const Eigen::Matrix2d R = params.measurement_noise();
  const Eigen::Matrix2d S = state.P + R;
  const double det = S(0, 0) * S(1, 1) - S(0, 1) * S(1, 0);
  if (!(S(0, 0) > 0.0) || !(det > 0.0)) {
    throw Error(ErrorCode::NonPositiveInnovationCovariance, "innovation covariance is not positive definite");
  }
  Eigen::Matrix2d S_inv;
  S_inv << S(1, 1) / det, -S(0, 1) / det, -S(1, 0) / det, S(0, 0) / det;
  const Eigen::Matrix2d K = state.P * S_inv;
  const Eigen::Vector2d innovation(measured_t - state.t_hat, measured_m - state.m_hat);
  const Eigen::Vector2d dx = K * innovation;

  ClockKfState next;
  next.t_hat = state.t_hat + dx(0);
  next.m_hat = state.m_hat + dx(1);
  // Joseph form keeps P symmetric PSD despite the 1e-19 vs 1e-3 scale spread.
  const Eigen::Matrix2d I_K = Eigen::Matrix2d::Identity() - K;
  next.P = I_K * state.P * I_K.transpose() + K * R * K.transpose();
  next.P = (0.5 * (next.P + next.P.transpose())).eval();
  return next;
}

}  // namespace uwbloc
