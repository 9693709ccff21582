#include <gtest/gtest.h>

#include <random>

#include <Eigen/Eigenvalues>

#include "uwbloc/clock.hpp"

using namespace uwbloc;

namespace {

double min_eigenvalue(const Eigen::Matrix2d& P) {
  return Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(P).eigenvalues().minCoeff();
}

}  // namespace

TEST(ClockRead, IdealClockReadsTrueTime) {
  const auto t = read_clock(ClockModel{0.0, 1.0, 0.0}, TrueTime::from_seconds(1.0), 1);
  EXPECT_EQ(t.ticks, 63'897'600'000);
}

TEST(ClockRead, SkewedClocksGainNanoseconds) {
  const double tick = kDefaultTickPeriod;
  const auto a = read_clock(ClockModel{0.0, 1.000000026, 0.0}, TrueTime::from_seconds(1.0), 1);
  EXPECT_NEAR(a.seconds() - 1.0, 26e-9, tick);
  const auto b = read_clock(ClockModel{0.0, 1.0000000136, 0.0}, TrueTime::from_seconds(1.0), 1);
  EXPECT_NEAR(b.seconds() - 1.0, 13.6e-9, tick);
}

TEST(ClockRead, OffsetShiftsReading) {
  const auto t = read_clock(ClockModel{0.5, 1.0, 0.0}, TrueTime::from_seconds(1.0), 1, 1e-12);
  EXPECT_NEAR(t.seconds(), 1.5, 1e-12);
}

TEST(ClockRead, AffineWithoutRandomWalk) {
  const ClockModel m{0.3, 1.00002, 0.0};
  ClockRealization clock(m, 9);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> when(0.0, 100.0);
  for (int i = 0; i < 200; ++i) {
    const double t1 = when(rng);
    const double t2 = when(rng);
    const double d = clock.read(TrueTime::from_seconds(t2)).seconds() - clock.read(TrueTime::from_seconds(t1)).seconds();
    const double expected =
        m.skew * (TrueTime::from_seconds(t2).seconds() - TrueTime::from_seconds(t1).seconds());
    EXPECT_NEAR(d, expected, kDefaultTickPeriod * 1.01 + 1e-14);
  }
}

TEST(ClockRead, RandomWalkIsReproducibleAndContinuous) {
  const ClockModel m{0.0, 1.0, 1e-6};
  ClockRealization a(m, 5);
  ClockRealization b(m, 5);
  ClockRealization c(m, 6);
  EXPECT_EQ(a.read(TrueTime::from_seconds(3.3)), b.read(TrueTime::from_seconds(3.3)));
  EXPECT_NE(a.read(TrueTime::from_seconds(3.3)).ticks, c.read(TrueTime::from_seconds(3.3)).ticks);
  // Reading is monotone and its local rate stays near the skew.
  long double prev = a.reading(0.0L);
  for (int i = 1; i < 5000; ++i) {
    const long double cur = a.reading(i * 1e-3L);
    EXPECT_GT(cur, prev);
    prev = cur;
  }
  EXPECT_NEAR(a.skew_at(4.0L), 1.0, 1e-4);
}

TEST(ClockModel, RejectsBadParameters) {
  EXPECT_THROW((ClockModel{0.0, 0.0, 0.0}).validate(), Error);
  EXPECT_THROW((ClockModel{-1.0, 1.0, 0.0}).validate(), Error);
  EXPECT_THROW((ClockModel{0.0, 1.0, -1.0}).validate(), Error);
}

TEST(EstimateSkew, Examples) {
  EXPECT_DOUBLE_EQ(estimate_skew(5.0, 6.0, 1.0, 2.0), 1.0);
  EXPECT_NEAR(estimate_skew(0.0, 1.000000026, 0.0, 1.0), 1.000000026, 1e-15);
  EXPECT_THROW(estimate_skew(0.0, 1.0, 2.0, 2.0), Error);
}

TEST(EstimateSkew, FromSimulatedClockAt100ms) {
  const ClockModel m{0.2, 1.000000014, 0.0};
  ClockRealization clock(m, 1);
  const double rx0 = clock.read(TrueTime::from_seconds(1.0)).seconds();
  const double rx1 = clock.read(TrueTime::from_seconds(1.1)).seconds();
  EXPECT_NEAR(estimate_skew(rx0, rx1, 1.0, 1.1), 1.000000014, kDefaultTickPeriod / 0.1);
}

TEST(EstimateSkew, AffineClockWithinTwoTicksPerInterval) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ppm(-50.0, 50.0);
  for (int i = 0; i < 50; ++i) {
    const ClockModel m{0.1, 1.0 + ppm(rng) * 1e-6, 0.0};
    ClockRealization clock(m, 1);
    const double interval = 0.05 + 0.01 * i;
    const double t0 = 2.0 + 0.1 * i;
    const double rx0 = clock.read(TrueTime::from_seconds(t0)).seconds();
    const double rx1 = clock.read(TrueTime::from_seconds(t0 + interval)).seconds();
    EXPECT_NEAR(estimate_skew(rx0, rx1, t0, t0 + interval), m.skew, 2.0 * kDefaultTickPeriod / interval);
  }
}

TEST(KalmanPredict, PropagatesWithSkew) {
  const ClockKfParams p;
  const ClockKfState s{0.0, 1.0, p.initial_covariance()};
  EXPECT_DOUBLE_EQ(kf_predict(s, 1.0, p).t_hat, 1.0);
  const ClockKfState s2{0.0, 1.000000026, p.initial_covariance()};
  EXPECT_DOUBLE_EQ(kf_predict(s2, 1.0, p).t_hat, 1.000000026);
  EXPECT_DOUBLE_EQ(kf_predict(s2, 1.0, p).m_hat, 1.000000026);
}

TEST(KalmanPredict, CovarianceGrows) {
  for (auto model : {ProcessNoiseModel::Diagonal, ProcessNoiseModel::Wiener}) {
    ClockKfParams p;
    p.process = model;
    p.wiener_q = 1e-16;
    const ClockKfState s{0.0, 1.0, p.initial_covariance()};
    const auto next = kf_predict(s, 0.1, p);
    EXPECT_GE(next.P.trace(), s.P.trace());
    EXPECT_THROW(kf_predict(s, 0.0, p), Error);
  }
}

TEST(KalmanUpdate, ZeroInnovationOnlyShrinksCovariance) {
  const ClockKfParams p;
  const ClockKfState s{1.0, 1.00001, p.initial_covariance()};
  const auto next = kf_update(s, s.t_hat, s.m_hat, p);
  EXPECT_DOUBLE_EQ(next.t_hat, s.t_hat);
  EXPECT_DOUBLE_EQ(next.m_hat, s.m_hat);
  EXPECT_LT(next.P(0, 0), s.P(0, 0));
  EXPECT_LT(next.P(1, 1), s.P(1, 1));
}

TEST(KalmanUpdate, SingularInnovationIsReported) {
  const ClockKfParams p;
  ClockKfState s{0.0, 1.0, -Eigen::Matrix2d::Identity()};
  try {
    kf_update(s, 0.0, 1.0, p);
    FAIL() << "expected NonPositiveInnovationCovariance";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonPositiveInnovationCovariance);
  }
}

TEST(KalmanUpdate, ConvergesToConstantSkew) {
  const double skew = 1.00000002;
  const ClockKfParams p;
  const double dt = 0.1;
  auto reading = [&](int k) { return 0.7 + skew * (k * dt); };
  ClockKfState s = kf_init(reading(1), (reading(1) - reading(0)) / dt, p);
  for (int k = 2; k <= 50; ++k) {
    s = kf_predict(s, dt, p);
    s = kf_update(s, reading(k), (reading(k) - reading(k - 1)) / dt, p);
  }
  EXPECT_NEAR(s.m_hat, skew, 5e-9);
  EXPECT_NEAR(s.t_hat, reading(50), 1e-12);
}

TEST(KalmanUpdate, ReferenceParametersStayBoundedAndPsd) {
  const ClockKfParams p;  // defaults are the reference values
  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise(0.0, 1e-10);
  const double skew = 1.0 + 13e-6;
  ClockKfState s = kf_init(0.0, skew, p);
  double t_true = 0.0;
  double prev_meas = 0.0;
  for (int k = 1; k <= 10000; ++k) {
    t_true += skew * 0.1;
    const double meas = t_true + noise(rng);
    s = kf_predict(s, 0.1, p);
    s = kf_update(s, meas, (meas - prev_meas) / 0.1, p);
    prev_meas = meas;
    ASSERT_NEAR(s.P(0, 1), s.P(1, 0), 1e-30);
    ASSERT_GE(min_eigenvalue(s.P), -1e-15);
    ASSERT_LT(s.P.trace(), 1.0);
  }
}

TEST(KalmanUpdate, NoiseFreeTracksClockExactly) {
  ClockKfParams p;
  p.process = ProcessNoiseModel::Wiener;
  p.wiener_q = 1e-18;
  p.sigma2_t_ns2 = 1e-6;
  const double skew = 1.0 - 7e-6;
  ClockKfState s = kf_init(0.0, skew, p);
  for (int k = 1; k <= 200; ++k) {
    s = kf_predict(s, 0.05, p);
    s = kf_update(s, skew * 0.05 * k, skew, p);
  }
  EXPECT_NEAR(s.t_hat, skew * 0.05 * 200, 1e-12);
  EXPECT_NEAR(s.m_hat, skew, 1e-12);
  EXPECT_NEAR(kf_interpolate(s, 10.5, 10.0), skew * 10.0 + skew * 0.5, 1e-12);
}

TEST(KalmanParams, MatricesInSecondsAndValidation) {
  const ClockKfParams p;
  EXPECT_DOUBLE_EQ(p.measurement_noise()(0, 0), 0.4e-18);
  EXPECT_DOUBLE_EQ(p.measurement_noise()(1, 1), 0.01);
  EXPECT_DOUBLE_EQ(p.initial_covariance()(0, 0), 1e-18);
  EXPECT_DOUBLE_EQ(p.initial_covariance()(1, 1), 0.001);
  ClockKfParams w;
  w.process = ProcessNoiseModel::Wiener;
  w.wiener_q = 3.0;
  const auto q = w.process_noise(2.0);
  EXPECT_DOUBLE_EQ(q(0, 0), 8.0);
  EXPECT_DOUBLE_EQ(q(0, 1), 6.0);
  EXPECT_DOUBLE_EQ(q(1, 1), 6.0);
  ClockKfParams bad;
  bad.sigma2_m = -1.0;
  EXPECT_THROW(bad.validate(), Error);
}
