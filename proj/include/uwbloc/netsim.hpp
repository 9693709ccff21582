#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "uwbloc/clock.hpp"
#include "uwbloc/core.hpp"

namespace uwbloc {

// RangeReport is the fourth message of tag-initiated ranging, returning the
// computed range from the anchor to the tag.
enum class MessageKind { Poll, PollAck, RangeFinal, RangeReport, RangeReq, Sync, Range };

std::string_view to_string(MessageKind kind);
std::optional<MessageKind> parse_message_kind(std::string_view name);

inline constexpr double kDefaultReplyFloor = 500e-6;  // s

struct RxRecord {
  NodeId receiver;
  NodeId sender;
  MessageKind kind = MessageKind::Sync;
  DeviceTime device_rx_time;
  TrueTime true_rx_time;
  std::int64_t epoch = 0;
};

struct NearAnchorBias {
  double radius_m = 0.5;
  double bias_s = 0.0;
};

struct ChannelModel {
  double timestamp_noise_sigma = 0.0;  // s, Gaussian on device RX stamps
  double drop_probability = 0.0;
  std::optional<NearAnchorBias> near_anchor_bias;

  void validate() const;
};

enum class TraceEventType { Tx, Rx, Drop };

std::string_view to_string(TraceEventType type);

struct TraceEvent {
  TrueTime time;
  TraceEventType type = TraceEventType::Tx;
  std::int64_t epoch = 0;
  MessageKind kind = MessageKind::Sync;
  NodeId sender;
  std::optional<NodeId> receiver;  // absent for Tx
  std::optional<std::int64_t> ticks;  // device stamp; absent for Drop

  bool operator==(const TraceEvent&) const = default;
};

struct EventTrace {
  std::uint64_t seed = 0;
  double tick_period = kDefaultTickPeriod;
  std::vector<TraceEvent> events;

  std::size_t message_count() const;
  std::size_t count(TraceEventType type, std::optional<MessageKind> kind = std::nullopt) const;
};

// Line-delimited JSON: a header object followed by one object per event.
void write_trace(std::ostream& out, const EventTrace& trace);
EventTrace read_trace(std::istream& in);

// Replies are never scheduled sooner than `reply_floor` after the triggering reception.
TrueTime enforce_reply_delay(TrueTime rx, TrueTime requested_tx, double reply_floor = kDefaultReplyFloor);

// Radio medium plus per-node clocks. Each transmission is stamped by the
// sender's clock and by every receiver's clock at the light-speed arrival time.
class Network {
 public:
  struct Drop {
    NodeId receiver;
    TrueTime true_rx_time;
  };

  struct Transmission {
    DeviceTime tx_stamp;
    std::vector<RxRecord> received;
    std::vector<Drop> dropped;
  };

  Network(const SystemLayout& layout, const std::map<NodeId, ClockModel>& clocks, ChannelModel channel,
          std::uint64_t seed, double tick_period = kDefaultTickPeriod);

  // Broadcast when `dest` is empty, otherwise only `dest` listens.
  Transmission transmit(NodeId sender, MessageKind kind, TrueTime tx_true, std::int64_t epoch,
                        std::optional<NodeId> dest = std::nullopt);

  void set_position(NodeId id, Position p);
  Position position(NodeId id) const;
  const SystemLayout& layout() const { return layout_; }
  ClockRealization& clock(NodeId id);

 private:
  SystemLayout layout_;
  ChannelModel channel_;
  std::map<NodeId, Position> positions_;
  std::map<NodeId, ClockRealization> clocks_;
  std::mt19937_64 noise_rng_;
  std::mt19937_64 drop_rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

Network::Transmission broadcast(const SystemLayout& layout, NodeId sender, MessageKind kind, TrueTime tx_true,
                                const std::map<NodeId, ClockModel>& clocks, const ChannelModel& channel,
                                std::uint64_t seed, double tick_period = kDefaultTickPeriod);

// Piecewise-linear tag path traversed at constant speed; holds the last waypoint.
struct Trajectory {
  std::vector<Position> waypoints;
  double speed_mps = 0.0;

  static Trajectory fixed(Position p) { return {{p}, 0.0}; }
  Position at(double t_seconds) const;
};

enum class ProtocolFamily { Twr, Tdoa };

struct ScenarioConfig {
  SystemLayout layout;
  ProtocolFamily family = ProtocolFamily::Tdoa;
  std::int64_t epochs = 0;
  double start_time_s = 0.01;
  double reply_floor_s = kDefaultReplyFloor;

  // TDoA: RANGE_REQ every sync_interval_s; the tag's RANGE follows the SYNC by
  // range_delay_s, or by range_delay_fraction * sync_interval_s.
  double sync_interval_s = 0.1;
  std::optional<double> range_delay_s;
  std::optional<double> range_delay_fraction;

  // TWR: one localization round every twr_interval_s, anchors ranged in turn.
  double twr_interval_s = 0.1;
  bool twr_tag_initiated = true;

  std::map<NodeId, ClockModel> clocks;  // nodes absent here run ideal clocks
  ChannelModel channel;
  Trajectory trajectory;
  double tick_period_s = kDefaultTickPeriod;
  double max_speed_mps = 2.0;
  std::uint64_t seed = 0;

  void validate() const;
  double tdoa_range_delay() const;
  // Fixed TDMA slot per anchor in a TWR round.
  double twr_slot_s() const;
};

EventTrace run_scenario(const ScenarioConfig& config);

}  // namespace uwbloc
