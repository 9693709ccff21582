#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"
#include "uwbloc/netsim.hpp"

using namespace uwbloc;

namespace {

SystemLayout line_layout() {
  SystemLayout l;
  l.anchors = {{NodeId{1}, {0.0, 0.0}}, {NodeId{2}, {4.0, 0.0}}};
  l.sync = {NodeId{10}, {2.0, 3.0}};
  l.tag = NodeId{20};
  l.tag_start = {2.0, 0.0};
  l.bounds = {0.0, 4.0, 0.0, 4.0};
  return l;
}

ScenarioConfig tdoa_scenario(std::int64_t epochs) {
  ScenarioConfig s;
  s.layout = oracle::reference_layout();
  s.family = ProtocolFamily::Tdoa;
  s.epochs = epochs;
  s.trajectory = Trajectory::fixed({0.0, 2.0});
  s.seed = 3;
  return s;
}

}  // namespace

TEST(Broadcast, ArrivalIsLightSpeedDelay) {
  auto l = line_layout();
  const auto tx = broadcast(l, NodeId{20}, MessageKind::Range, TrueTime::from_seconds(1.0), {}, {}, 1, 1e-15);
  ASSERT_EQ(tx.received.size(), 3u);
  for (const auto& rx : tx.received) {
    if (rx.receiver == NodeId{1} || rx.receiver == NodeId{2}) {
      EXPECT_NEAR(rx.true_rx_time.seconds() - 1.0, 6.6713e-9, 1e-12);
      EXPECT_NEAR(rx.device_rx_time.seconds() - tx.tx_stamp.seconds(), 2.0 / kSpeedOfLight, 1e-14);
    }
  }
}

TEST(Broadcast, EquidistantReceiversGetEqualStamps) {
  auto l = line_layout();
  const auto tx = broadcast(l, NodeId{20}, MessageKind::Range, TrueTime::from_seconds(0.5), {}, {}, 1);
  std::map<NodeId, std::int64_t> stamp;
  for (const auto& rx : tx.received) stamp[rx.receiver] = rx.device_rx_time.ticks;
  EXPECT_EQ(stamp.at(NodeId{1}), stamp.at(NodeId{2}));
}

TEST(Broadcast, FullDropProbabilityReachesNobody) {
  ChannelModel ch;
  ch.drop_probability = 1.0;
  const auto tx = broadcast(line_layout(), NodeId{10}, MessageKind::Sync, TrueTime::from_seconds(1.0), {}, ch, 1);
  EXPECT_TRUE(tx.received.empty());
  EXPECT_EQ(tx.dropped.size(), 3u);
}

TEST(Broadcast, NoiseIsSeededAndPerturbsStamps) {
  ChannelModel ch;
  ch.timestamp_noise_sigma = 1e-9;
  const auto l = line_layout();
  const auto a = broadcast(l, NodeId{20}, MessageKind::Range, TrueTime::from_seconds(1.0), {}, ch, 4);
  const auto b = broadcast(l, NodeId{20}, MessageKind::Range, TrueTime::from_seconds(1.0), {}, ch, 4);
  const auto c = broadcast(l, NodeId{20}, MessageKind::Range, TrueTime::from_seconds(1.0), {}, ch, 5);
  ASSERT_EQ(a.received.size(), b.received.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.received.size(); ++i) {
    EXPECT_EQ(a.received[i].device_rx_time.ticks, b.received[i].device_rx_time.ticks);
    differs = differs || a.received[i].device_rx_time.ticks != c.received[i].device_rx_time.ticks;
  }
  EXPECT_TRUE(differs);
}

TEST(Broadcast, NearAnchorBiasAppliesOnlyInsideRadius) {
  ChannelModel ch;
  ch.near_anchor_bias = NearAnchorBias{2.5, 1e-9};
  auto l = line_layout();
  l.tag_start = {0.5, 0.0};
  const auto biased = broadcast(l, NodeId{20}, MessageKind::Range, TrueTime::from_seconds(1.0), {}, ch, 1, 1e-15);
  const auto plain = broadcast(l, NodeId{20}, MessageKind::Range, TrueTime::from_seconds(1.0), {}, {}, 1, 1e-15);
  for (std::size_t i = 0; i < biased.received.size(); ++i) {
    const double d = biased.received[i].device_rx_time.seconds() - plain.received[i].device_rx_time.seconds();
    const NodeId r = biased.received[i].receiver;
    EXPECT_NEAR(d, r == NodeId{1} ? 1e-9 : 0.0, 1e-14) << r.value;
  }
}

TEST(Network, DirectedTransmissionHasOneListener) {
  Network net(line_layout(), {}, {}, 1);
  const auto tx = net.transmit(NodeId{20}, MessageKind::Poll, TrueTime::from_seconds(1.0), 0, NodeId{2});
  ASSERT_EQ(tx.received.size(), 1u);
  EXPECT_EQ(tx.received[0].receiver, NodeId{2});
  EXPECT_THROW(net.transmit(NodeId{99}, MessageKind::Poll, TrueTime::from_seconds(1.0), 0), Error);
}

TEST(ReplyDelay, FloorIsEnforced) {
  const TrueTime rx = TrueTime::from_seconds(1.0);
  EXPECT_EQ(enforce_reply_delay(rx, TrueTime::from_seconds(1.0002)), TrueTime::from_seconds(1.0005));
  EXPECT_EQ(enforce_reply_delay(rx, TrueTime::from_seconds(1.001)), TrueTime::from_seconds(1.001));
  EXPECT_EQ(enforce_reply_delay(rx, rx, 0.0), rx);
}

TEST(Scenario, TdoaMessageCount) {
  const auto trace = run_scenario(tdoa_scenario(10));
  EXPECT_EQ(trace.message_count(), 30u);
  EXPECT_EQ(trace.count(TraceEventType::Tx, MessageKind::Sync), 10u);
  EXPECT_EQ(trace.count(TraceEventType::Tx, MessageKind::Range), 10u);
}

TEST(Scenario, SingleAnchorTagInitiatedTwr) {
  ScenarioConfig s;
  s.layout = line_layout();
  s.layout.anchors.resize(1);
  s.family = ProtocolFamily::Twr;
  s.epochs = 1;
  s.trajectory = Trajectory::fixed({2.0, 0.0});
  const auto trace = run_scenario(s);
  EXPECT_EQ(trace.message_count(), 4u);
  s.twr_tag_initiated = false;
  EXPECT_EQ(run_scenario(s).message_count(), 3u);
}

TEST(Scenario, RepliesRespectFloor) {
  const auto trace = run_scenario(tdoa_scenario(5));
  std::map<std::int64_t, TrueTime> req_rx;
  for (const auto& e : trace.events) {
    if (e.type == TraceEventType::Rx && e.kind == MessageKind::RangeReq) req_rx[e.epoch] = e.time;
    if (e.type == TraceEventType::Tx && e.kind == MessageKind::Sync) {
      EXPECT_GE(e.time.picoseconds - req_rx.at(e.epoch).picoseconds, 500'000'000);
    }
  }
}

TEST(Scenario, ZeroEpochsGivesEmptyTrace) {
  EXPECT_TRUE(run_scenario(tdoa_scenario(0)).events.empty());
}

TEST(Scenario, EventsAreTimeOrdered) {
  const auto trace = run_scenario(tdoa_scenario(20));
  for (std::size_t i = 1; i < trace.events.size(); ++i) {
    EXPECT_LE(trace.events[i - 1].time, trace.events[i].time);
  }
}

TEST(Scenario, DeterministicForSeed) {
  auto s = tdoa_scenario(50);
  s.channel.timestamp_noise_sigma = 1e-10;
  s.channel.drop_probability = 0.1;
  s.clocks[NodeId{1}] = ClockModel{0.1, 1.00001, 1e-9};
  const auto a = run_scenario(s);
  const auto b = run_scenario(s);
  EXPECT_EQ(a.events, b.events);
  s.seed = 4;
  EXPECT_NE(a.events, run_scenario(s).events);
}

TEST(Scenario, RejectsBadConfigs) {
  auto s = tdoa_scenario(1);
  s.channel.drop_probability = 1.5;
  EXPECT_THROW(run_scenario(s), Error);
  s = tdoa_scenario(1);
  s.range_delay_s = 0.2;
  EXPECT_THROW(run_scenario(s), Error);
  s = tdoa_scenario(1);
  s.clocks[NodeId{77}] = ClockModel{};
  EXPECT_THROW(run_scenario(s), Error);
  s = tdoa_scenario(1);
  s.trajectory = Trajectory::fixed({9.0, 9.0});
  EXPECT_THROW(run_scenario(s), Error);
}

TEST(Trace, RoundTripsThroughJsonLines) {
  auto s = tdoa_scenario(5);
  s.channel.drop_probability = 0.3;
  const auto trace = run_scenario(s);
  std::stringstream buf;
  write_trace(buf, trace);
  const auto back = read_trace(buf);
  EXPECT_EQ(back.seed, trace.seed);
  EXPECT_EQ(back.tick_period, trace.tick_period);
  EXPECT_EQ(back.events, trace.events);
}

TEST(Trace, MalformedInputIsReported) {
  std::stringstream no_header("{\"type\":\"tx\"}\n");
  EXPECT_THROW(read_trace(no_header), Error);
  std::stringstream bad("not json\n");
  EXPECT_THROW(read_trace(bad), Error);
}

TEST(Trajectory, InterpolatesAtConstantSpeed) {
  const Trajectory t{{{0.0, 0.0}, {2.0, 0.0}, {2.0, 2.0}}, 1.0};
  EXPECT_EQ(t.at(1.0), (Position{1.0, 0.0}));
  EXPECT_EQ(t.at(3.0), (Position{2.0, 1.0}));
  EXPECT_EQ(t.at(10.0), (Position{2.0, 2.0}));
  EXPECT_EQ(Trajectory::fixed({1.0, 1.0}).at(5.0), (Position{1.0, 1.0}));
}
