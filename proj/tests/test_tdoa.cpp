#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"
#include "uwbloc/tdoa.hpp"

using namespace uwbloc;

namespace {

ScenarioConfig noiseless_scenario(std::int64_t epochs, Position sync_at = {2.0, 0.0}) {
  ScenarioConfig s;
  s.layout = oracle::reference_layout();
  s.layout.sync.position = sync_at;
  s.family = ProtocolFamily::Tdoa;
  s.epochs = epochs;
  s.trajectory = Trajectory::fixed({0.0, 2.0});
  s.tick_period_s = 1e-15;
  s.range_delay_fraction = 0.5;
  s.clocks[NodeId{1}] = ClockModel{0.25, 1.0 + 12e-6, 0.0};
  s.clocks[NodeId{2}] = ClockModel{0.5, 1.0 - 7e-6, 0.0};
  s.clocks[NodeId{3}] = ClockModel{0.75, 1.0 + 3e-6, 0.0};
  s.clocks[NodeId{20}] = ClockModel{0.1, 1.0 + 15e-6, 0.0};
  s.seed = 1;
  return s;
}

std::vector<EpochResult> process_all(const EventTrace& trace, const SystemLayout& l, const TdoaOptions& o) {
  std::vector<EpochResult> out;
  TdoaState state;
  for (const auto& rec : assemble_tdoa_epochs(trace, l)) {
    out.push_back(process_epoch(state, rec.sync, rec.range, l, o));
    state = out.back().next;
  }
  return out;
}

double exact_dt(const SystemLayout& l, Position tag, NodeId k, NodeId m) {
  return (oracle::euclid(tag, oracle::anchor_at(l, k)) - oracle::euclid(tag, oracle::anchor_at(l, m))) /
         kSpeedOfLight;
}

// The sync-to-anchor delay is added on the anchor clock before the skew
// division, which leaves zeta * (1/m - 1) per anchor: below 1e-12 s here.
constexpr double kZetaSkewTerm = 1e-12;

}  // namespace

TEST(AdjustedArrival, Formula) {
  EXPECT_DOUBLE_EQ(adjusted_arrival(12.0, 10.0, 5.0, 1.0, 0.0), 7.0);
  EXPECT_DOUBLE_EQ(adjusted_arrival(12.0, 10.0, 5.0, 2.0, 1.0), 6.5);
  EXPECT_THROW(adjusted_arrival(1.0, 0.0, 0.0, 0.0, 0.0), Error);
}

TEST(AdjustedArrival, MissingSyncStamp) {
  SyncEpoch s{3, 1.0, {{NodeId{1}, 1.5}}};
  EXPECT_DOUBLE_EQ(adjusted_arrival(2.0, s, 1.0, 0.0, NodeId{1}), 1.5);
  try {
    adjusted_arrival(2.0, s, 1.0, 0.0, NodeId{2});
    FAIL() << "expected MissingSyncRx";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingSyncRx);
  }
}

TEST(Pairwise, SignAndOrdering) {
  const std::map<NodeId, double> adj{{NodeId{3}, 1.0}, {NodeId{1}, 4.0}, {NodeId{2}, 2.0}};
  const auto m = pairwise_tdoa(adj, 9);
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m[0].anchor_k, NodeId{1});
  EXPECT_EQ(m[0].anchor_l, NodeId{2});
  EXPECT_DOUBLE_EQ(m[0].dt, 2.0);
  EXPECT_DOUBLE_EQ(m[1].dt, 3.0);
  EXPECT_DOUBLE_EQ(m[2].dt, 1.0);
  EXPECT_EQ(m[2].epoch, 9);
}

TEST(Pairwise, CycleConsistency) {
  const std::map<NodeId, double> adj{{NodeId{1}, 0.123456789}, {NodeId{2}, 0.123456701}, {NodeId{3}, 0.1234568}};
  const auto m = pairwise_tdoa(adj, 0);
  // dt12 + dt23 = dt13
  EXPECT_NEAR(m[0].dt + m[2].dt, m[1].dt, 4 * std::numeric_limits<double>::epsilon());
  EXPECT_EQ(pairwise_tdoa({{NodeId{1}, 1.0}}, 0).size(), 0u);
}

TEST(ProcessEpoch, FirstEpochLacksHistory) {
  const auto l = oracle::reference_layout();
  SyncEpoch s{0, 1.0, {{NodeId{1}, 2.0}, {NodeId{2}, 3.0}, {NodeId{3}, 4.0}}};
  RangeEpoch r{0, {{NodeId{1}, 2.05}, {NodeId{2}, 3.05}, {NodeId{3}, 4.05}}};
  for (auto mode : {TdoaMode::Raw, TdoaMode::Kalman}) {
    TdoaOptions o;
    o.mode = mode;
    const auto res = process_epoch({}, s, r, l, o);
    ASSERT_TRUE(res.failure);
    EXPECT_EQ(*res.failure, ErrorCode::InsufficientHistory);
    EXPECT_TRUE(res.measurements.empty());
    EXPECT_EQ(res.next.anchors.size(), 3u);
  }
}

TEST(ProcessEpoch, MissingRangeStampIsIncomplete) {
  const auto l = oracle::reference_layout();
  TdoaState st;
  SyncEpoch s0{0, 1.0, {{NodeId{1}, 2.0}, {NodeId{2}, 3.0}, {NodeId{3}, 4.0}}};
  st = process_epoch(st, s0, RangeEpoch{0, {}}, l, {}).next;
  SyncEpoch s1{1, 1.1, {{NodeId{1}, 2.1}, {NodeId{2}, 3.1}, {NodeId{3}, 4.1}}};
  RangeEpoch r1{1, {{NodeId{1}, 2.15}, {NodeId{2}, 3.15}}};
  const auto res = process_epoch(st, s1, r1, l, {});
  ASSERT_TRUE(res.failure);
  EXPECT_EQ(*res.failure, ErrorCode::IncompleteEpoch);

  TdoaOptions degraded;
  degraded.allow_degraded = true;
  const auto deg = process_epoch(st, s1, r1, l, degraded);
  EXPECT_FALSE(deg.failure);
  EXPECT_EQ(deg.measurements.size(), 1u);
}

TEST(ProcessEpoch, RawAndKalmanDifferOnMissedSync) {
  const auto l = oracle::reference_layout();
  auto scenario = noiseless_scenario(6);
  const auto trace = run_scenario(scenario);
  auto records = assemble_tdoa_epochs(trace, l);
  ASSERT_EQ(records.size(), 6u);
  // Anchor 1 misses SYNC in epoch 4.
  records[4].sync->rx.erase(NodeId{1});
  for (auto mode : {TdoaMode::Raw, TdoaMode::Kalman}) {
    TdoaOptions o;
    o.mode = mode;
    TdoaState st;
    std::vector<EpochResult> results;
    for (const auto& rec : records) {
      results.push_back(process_epoch(st, rec.sync, rec.range, l, o));
      st = results.back().next;
    }
    if (mode == TdoaMode::Raw) {
      ASSERT_TRUE(results[4].failure);
      EXPECT_EQ(*results[4].failure, ErrorCode::IncompleteEpoch);
    } else {
      EXPECT_FALSE(results[4].failure) << results[4].detail;
      for (const auto& m : results[4].measurements) {
        EXPECT_NEAR(m.dt, exact_dt(l, {0.0, 2.0}, m.anchor_k, m.anchor_l), 1e-12);
      }
    }
    EXPECT_FALSE(results[5].failure);
  }
}

TEST(ProcessEpoch, NoiselessPipelineRecoversExactDifferences) {
  const auto l = oracle::reference_layout();
  const auto trace = run_scenario(noiseless_scenario(20));
  for (auto mode : {TdoaMode::Raw, TdoaMode::Kalman}) {
    TdoaOptions o;
    o.mode = mode;
    const auto results = process_all(trace, l, o);
    ASSERT_EQ(results.size(), 20u);
    EXPECT_TRUE(results[0].failure);
    for (std::size_t i = 1; i < results.size(); ++i) {
      ASSERT_FALSE(results[i].failure) << results[i].detail;
      ASSERT_EQ(results[i].measurements.size(), 3u);
      for (const auto& m : results[i].measurements) {
        EXPECT_NEAR(m.dt, exact_dt(l, {0.0, 2.0}, m.anchor_k, m.anchor_l), kZetaSkewTerm);
      }
    }
  }
}

TEST(ProcessEpoch, SyncRelocationLeavesDifferencesUnchanged) {
  const auto a_trace = run_scenario(noiseless_scenario(5, {2.0, 0.0}));
  const auto b_trace = run_scenario(noiseless_scenario(5, {6.0, 7.0}));
  auto la = oracle::reference_layout();
  auto lb = la;
  lb.sync.position = {6.0, 7.0};
  const auto a = process_all(a_trace, la, {});
  const auto b = process_all(b_trace, lb, {});
  for (std::size_t i = 1; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].measurements.size(); ++j) {
      EXPECT_NEAR(a[i].measurements[j].dt, b[i].measurements[j].dt, kZetaSkewTerm);
    }
  }
}

TEST(AssembleEpochs, GroupsStampsByEpoch) {
  const auto l = oracle::reference_layout();
  const auto trace = run_scenario(noiseless_scenario(3));
  const auto recs = assemble_tdoa_epochs(trace, l);
  ASSERT_EQ(recs.size(), 3u);
  for (const auto& r : recs) {
    ASSERT_TRUE(r.sync);
    EXPECT_EQ(r.sync->rx.size(), 3u);
    EXPECT_EQ(r.range.rx.size(), 3u);
    EXPECT_TRUE(r.range_tx_true);
  }
}

TEST(TdoaCsv, HeaderAndRows) {
  std::ostringstream out;
  write_tdoa_csv(out, {{NodeId{1}, NodeId{2}, 1e-9, 4}});
  EXPECT_EQ(out.str(), "epoch,anchor_k,anchor_l,dt_seconds\n4,1,2,1.0000000000000001e-09\n");
}
