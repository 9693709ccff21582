#include "uwbloc/netsim.hpp"

#include <cmath>
#include <functional>
#include <istream>
#include <ostream>
#include <queue>
#include <string>
#include <tuple>

#include "json.hpp"

namespace uwbloc {

namespace {

constexpr std::uint64_t kNoiseSalt = 0x4E015E;
constexpr std::uint64_t kDropSalt = 0xD209;
constexpr std::uint64_t kClockSalt = 0xC10C;

std::int64_t to_ps(double seconds) { return std::llround(static_cast<long double>(seconds) * 1e12L); }

}  // namespace

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::Poll: return "POLL";
    case MessageKind::PollAck: return "POLL_ACK";
    case MessageKind::RangeFinal: return "RANGE_FINAL";
    case MessageKind::RangeReport: return "RANGE_REPORT";
    case MessageKind::RangeReq: return "RANGE_REQ";
    case MessageKind::Sync: return "SYNC";
    case MessageKind::Range: return "RANGE";
  }
  return "?";
}

std::optional<MessageKind> parse_message_kind(std::string_view name) {
  for (auto k : {MessageKind::Poll, MessageKind::PollAck, MessageKind::RangeFinal, MessageKind::RangeReport,
                 MessageKind::RangeReq, MessageKind::Sync, MessageKind::Range}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::string_view to_string(TraceEventType type) {
  switch (type) {
    case TraceEventType::Tx: return "tx";
    case TraceEventType::Rx: return "rx";
    case TraceEventType::Drop: return "drop";
  }
  return "?";
}

void ChannelModel::validate() const {
  if (!(timestamp_noise_sigma >= 0.0)) throw Error(ErrorCode::ConfigError, "timestamp noise sigma must be >= 0");
  if (!(drop_probability >= 0.0 && drop_probability <= 1.0)) {
    throw Error(ErrorCode::ConfigError, "drop probability must lie in [0, 1]");
  }
  if (near_anchor_bias && !(near_anchor_bias->radius_m >= 0.0)) {
    throw Error(ErrorCode::ConfigError, "near-anchor bias radius must be >= 0");
  }
}

std::size_t EventTrace::message_count() const { return count(TraceEventType::Tx); }

std::size_t EventTrace::count(TraceEventType type, std::optional<MessageKind> kind) const {
  std::size_t n = 0;
  for (const auto& e : events) {
    if (e.type == type && (!kind || e.kind == *kind)) ++n;
  }
  return n;
}

void write_trace(std::ostream& out, const EventTrace& trace) {
  nlohmann::ordered_json header;
  header["type"] = "header";
  header["trace_version"] = 1;
  header["seed"] = trace.seed;
  header["tick_period_s"] = trace.tick_period;
  out << header.dump() << '\n';
  for (const auto& e : trace.events) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["type"] = to_string(e.type);
    j["kind"] = to_string(e.kind);
    j["sender"] = e.sender.value;
    j["receiver"] = e.receiver ? nlohmann::ordered_json(e.receiver->value) : nlohmann::ordered_json(nullptr);
    j["ticks"] = e.ticks ? nlohmann::ordered_json(*e.ticks) : nlohmann::ordered_json(nullptr);
    j["true_ps"] = e.time.picoseconds;
    out << j.dump() << '\n';
  }
}

EventTrace read_trace(std::istream& in) {
  EventTrace trace;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "header") {
        trace.seed = j.at("seed").get<std::uint64_t>();
        trace.tick_period = j.at("tick_period_s").get<double>();
        have_header = true;
        continue;
      }
      TraceEvent e;
      if (type == "tx") e.type = TraceEventType::Tx;
      else if (type == "rx") e.type = TraceEventType::Rx;
      else if (type == "drop") e.type = TraceEventType::Drop;
      else throw Error(ErrorCode::IoError, "unknown event type '" + type + "'");
      e.epoch = j.at("epoch").get<std::int64_t>();
      const auto kind = parse_message_kind(j.at("kind").get<std::string>());
      if (!kind) throw Error(ErrorCode::IoError, "unknown message kind");
      e.kind = *kind;
      e.sender = NodeId{j.at("sender").get<int>()};
      if (!j.at("receiver").is_null()) e.receiver = NodeId{j.at("receiver").get<int>()};
      if (!j.at("ticks").is_null()) e.ticks = j.at("ticks").get<std::int64_t>();
      e.time = TrueTime{j.at("true_ps").get<std::int64_t>()};
      trace.events.push_back(e);
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::IoError, "trace line " + std::to_string(line_no) + ": " + ex.what());
    } catch (const Error& ex) {
      throw Error(ErrorCode::IoError, "trace line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  if (!have_header) throw Error(ErrorCode::IoError, "trace has no header record");
  return trace;
}

TrueTime enforce_reply_delay(TrueTime rx, TrueTime requested_tx, double reply_floor) {
  const TrueTime floor_time = rx + to_ps(reply_floor);
  return requested_tx < floor_time ? floor_time : requested_tx;
}

Network::Network(const SystemLayout& layout, const std::map<NodeId, ClockModel>& clocks, ChannelModel channel,
                 std::uint64_t seed, double tick_period)
    : layout_(layout),
      channel_(channel),
      noise_rng_(derive_seed(seed, kNoiseSalt)),
      drop_rng_(derive_seed(seed, kDropSalt)) {
  channel_.validate();
  auto add = [&](NodeId id, Position p) {
    positions_[id] = p;
    const auto it = clocks.find(id);
    const ClockModel model = it == clocks.end() ? ClockModel{} : it->second;
    clocks_.emplace(id, ClockRealization(model, derive_seed(seed, kClockSalt + static_cast<std::uint64_t>(id.value)),
                                         tick_period));
  };
  for (const auto& a : layout_.anchors) add(a.id, a.position);
  add(layout_.sync.id, layout_.sync.position);
  add(layout_.tag, layout_.tag_start);
  for (const auto& [id, model] : clocks) {
    if (!positions_.contains(id)) {
      throw Error(ErrorCode::ConfigError, "clock given for unknown node " + std::to_string(id.value));
    }
  }
}

void Network::set_position(NodeId id, Position p) {
  const auto it = positions_.find(id);
  if (it == positions_.end()) throw Error(ErrorCode::InvalidArgument, "unknown node " + std::to_string(id.value));
  it->second = p;
}

Position Network::position(NodeId id) const {
  const auto it = positions_.find(id);
  if (it == positions_.end()) throw Error(ErrorCode::InvalidArgument, "unknown node " + std::to_string(id.value));
  return it->second;
}

ClockRealization& Network::clock(NodeId id) {
  const auto it = clocks_.find(id);
  if (it == clocks_.end()) throw Error(ErrorCode::InvalidArgument, "unknown node " + std::to_string(id.value));
  return it->second;
}

Network::Transmission Network::transmit(NodeId sender, MessageKind kind, TrueTime tx_true, std::int64_t epoch,
                                        std::optional<NodeId> dest) {
  const Position from = position(sender);
  const long double tx_seconds = static_cast<long double>(tx_true.picoseconds) * 1e-12L;
  Transmission out;
  out.tx_stamp = clock(sender).stamp(tx_seconds);

  const auto sender_role = layout_.role_of(sender);
  for (auto& [receiver, to] : positions_) {
    if (receiver == sender || (dest && receiver != *dest)) continue;
    const double delay = propagation_delay(from, to);
    const TrueTime arrival = tx_true + to_ps(delay);
    // Both streams advance once per receiver so toggling one knob leaves the other's draws unchanged.
    const bool lost = uniform_(drop_rng_) < channel_.drop_probability;
    const double jitter = channel_.timestamp_noise_sigma * normal_(noise_rng_);
    if (lost) {
      out.dropped.push_back({receiver, arrival});
      continue;
    }
    double bias = 0.0;
    if (channel_.near_anchor_bias) {
      const auto receiver_role = layout_.role_of(receiver);
      const bool tag_anchor_link = (sender_role == NodeRole::Tag && receiver_role == NodeRole::Anchor) ||
                                   (sender_role == NodeRole::Anchor && receiver_role == NodeRole::Tag);
      if (tag_anchor_link && distance(from, to) <= channel_.near_anchor_bias->radius_m) {
        bias = channel_.near_anchor_bias->bias_s;
      }
    }
    RxRecord rec;
    rec.receiver = receiver;
    rec.sender = sender;
    rec.kind = kind;
    rec.device_rx_time = clock(receiver).stamp(tx_seconds + static_cast<long double>(delay), jitter + bias);
    rec.true_rx_time = arrival;
    rec.epoch = epoch;
    out.received.push_back(rec);
  }
  return out;
}

Network::Transmission broadcast(const SystemLayout& layout, NodeId sender, MessageKind kind, TrueTime tx_true,
                                const std::map<NodeId, ClockModel>& clocks, const ChannelModel& channel,
                                std::uint64_t seed, double tick_period) {
  Network net(layout, clocks, channel, seed, tick_period);
  return net.transmit(sender, kind, tx_true, 0);
}

Position Trajectory::at(double t_seconds) const {
  if (waypoints.empty()) throw Error(ErrorCode::InvalidArgument, "trajectory has no waypoints");
  if (waypoints.size() == 1 || speed_mps <= 0.0) return waypoints.front();
  double remaining = std::max(0.0, t_seconds) * speed_mps;
  for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
    const double seg = distance(waypoints[i], waypoints[i + 1]);
    if (remaining <= seg) {
      const double f = seg > 0.0 ? remaining / seg : 0.0;
      return waypoints[i] + f * (waypoints[i + 1] - waypoints[i]);
    }
    remaining -= seg;
  }
  return waypoints.back();
}

double ScenarioConfig::tdoa_range_delay() const {
  if (range_delay_s) return std::max(*range_delay_s, reply_floor_s);
  if (range_delay_fraction) return std::max(*range_delay_fraction * sync_interval_s, reply_floor_s);
  return reply_floor_s;
}

double ScenarioConfig::twr_slot_s() const {
  const int messages = twr_tag_initiated ? 4 : 3;
  return messages * reply_floor_s + 200e-6;
}

void ScenarioConfig::validate() const {
  layout.validate(family == ProtocolFamily::Tdoa ? 2 : 1);
  if (epochs < 0) throw Error(ErrorCode::ConfigError, "epochs must be >= 0");
  if (!(tick_period_s > 0.0)) throw Error(ErrorCode::ConfigError, "tick period must be positive");
  if (!(reply_floor_s >= 0.0)) throw Error(ErrorCode::ConfigError, "reply floor must be >= 0");
  channel.validate();
  for (const auto& [id, model] : clocks) {
    if (!layout.role_of(id)) throw Error(ErrorCode::ConfigError, "clock given for unknown node " + std::to_string(id.value));
    model.validate();
  }
  if (trajectory.waypoints.empty()) throw Error(ErrorCode::ConfigError, "tag trajectory has no waypoints");
  for (const auto& w : trajectory.waypoints) {
    if (!layout.bounds.contains(w)) throw Error(ErrorCode::ConfigError, "trajectory waypoint outside bounds");
  }
  if (trajectory.speed_mps < 0.0 || trajectory.speed_mps > max_speed_mps) {
    throw Error(ErrorCode::ConfigError, "tag speed must lie in [0, max_speed]");
  }
  if (range_delay_s && range_delay_fraction) {
    throw Error(ErrorCode::ConfigError, "give either range_delay_s or range_delay_fraction, not both");
  }
  if (family == ProtocolFamily::Tdoa) {
    if (!(sync_interval_s > 0.0)) throw Error(ErrorCode::ConfigError, "sync interval must be positive");
    // RANGE must land before the next RANGE_REQ goes out.
    if (tdoa_range_delay() + 2.0 * reply_floor_s + 1e-6 >= sync_interval_s) {
      throw Error(ErrorCode::ConfigError, "RANGE delay does not fit inside the sync interval");
    }
  } else {
    if (!(twr_interval_s > 0.0)) throw Error(ErrorCode::ConfigError, "TWR interval must be positive");
    if (twr_slot_s() * static_cast<double>(layout.anchors.size()) > twr_interval_s) {
      throw Error(ErrorCode::ConfigError, "TWR round does not fit inside the TWR interval");
    }
  }
}

namespace {

class Simulator {
 public:
  explicit Simulator(const ScenarioConfig& cfg)
      : cfg_(cfg), net_(cfg.layout, cfg.clocks, cfg.channel, cfg.seed, cfg.tick_period_s) {
    trace_.seed = cfg.seed;
    trace_.tick_period = cfg.tick_period_s;
  }

  EventTrace run() {
    const TrueTime start = TrueTime::from_seconds(cfg_.start_time_s);
    const NodeId tag = cfg_.layout.tag;
    for (std::int64_t i = 0; i < cfg_.epochs; ++i) {
      if (cfg_.family == ProtocolFamily::Tdoa) {
        send(tag, MessageKind::RangeReq, start + to_ps(static_cast<double>(i) * cfg_.sync_interval_s), i,
             cfg_.layout.sync.id);
      } else {
        const TrueTime round = start + to_ps(static_cast<double>(i) * cfg_.twr_interval_s);
        for (std::size_t k = 0; k < cfg_.layout.anchors.size(); ++k) {
          const NodeId anchor = cfg_.layout.anchors[k].id;
          const NodeId initiator = cfg_.twr_tag_initiated ? tag : anchor;
          const NodeId responder = cfg_.twr_tag_initiated ? anchor : tag;
          send(initiator, MessageKind::Poll, round + to_ps(static_cast<double>(k) * cfg_.twr_slot_s()), i,
               responder);
        }
      }
    }
    while (!queue_.empty()) {
      auto next = queue_.top();
      queue_.pop();
      next.action();
    }
    return std::move(trace_);
  }

 private:
  struct Scheduled {
    TrueTime time;
    NodeId node;
    MessageKind kind;
    std::uint64_t seq;
    std::function<void()> action;
  };
  struct Later {
    bool operator()(const Scheduled& a, const Scheduled& b) const {
      return std::tie(a.time, a.node, a.kind, a.seq) > std::tie(b.time, b.node, b.kind, b.seq);
    }
  };

  void schedule(TrueTime t, NodeId node, MessageKind kind, std::function<void()> action) {
    queue_.push({t, node, kind, seq_++, std::move(action)});
  }

  void send(NodeId sender, MessageKind kind, TrueTime t, std::int64_t epoch, std::optional<NodeId> dest) {
    schedule(t, sender, kind, [=, this] {
      if (sender == cfg_.layout.tag) net_.set_position(sender, cfg_.trajectory.at(t.seconds()));
      auto tx = net_.transmit(sender, kind, t, epoch, dest);
      trace_.events.push_back({t, TraceEventType::Tx, epoch, kind, sender, std::nullopt, tx.tx_stamp.ticks});
      for (const auto& rx : tx.received) {
        schedule(rx.true_rx_time, rx.receiver, kind, [rx, this] {
          trace_.events.push_back({rx.true_rx_time, TraceEventType::Rx, rx.epoch, rx.kind, rx.sender, rx.receiver,
                                   rx.device_rx_time.ticks});
          on_receive(rx);
        });
      }
      for (const auto& d : tx.dropped) {
        schedule(d.true_rx_time, d.receiver, kind, [=, this] {
          trace_.events.push_back(
              {d.true_rx_time, TraceEventType::Drop, epoch, kind, sender, d.receiver, std::nullopt});
        });
      }
    });
  }

  void reply(const RxRecord& rx, MessageKind kind, TrueTime requested, std::optional<NodeId> dest) {
    send(rx.receiver, kind, enforce_reply_delay(rx.true_rx_time, requested, cfg_.reply_floor_s), rx.epoch, dest);
  }

  void on_receive(const RxRecord& rx) {
    const NodeId tag = cfg_.layout.tag;
    const NodeId sync = cfg_.layout.sync.id;
    switch (rx.kind) {
      case MessageKind::RangeReq:
        if (rx.receiver == sync) reply(rx, MessageKind::Sync, rx.true_rx_time, std::nullopt);
        break;
      case MessageKind::Sync:
        if (rx.receiver == tag) {
          reply(rx, MessageKind::Range, rx.true_rx_time + to_ps(cfg_.tdoa_range_delay()), std::nullopt);
        }
        break;
      case MessageKind::Poll:
        reply(rx, MessageKind::PollAck, rx.true_rx_time, rx.sender);
        break;
      case MessageKind::PollAck:
        reply(rx, MessageKind::RangeFinal, rx.true_rx_time, rx.sender);
        break;
      case MessageKind::RangeFinal:
        if (cfg_.twr_tag_initiated) reply(rx, MessageKind::RangeReport, rx.true_rx_time, rx.sender);
        break;
      case MessageKind::RangeReport:
      case MessageKind::Range:
        break;
    }
  }

  const ScenarioConfig& cfg_;
  Network net_;
  EventTrace trace_;
  std::priority_queue<Scheduled, std::vector<Scheduled>, Later> queue_;
  std::uint64_t seq_ = 0;
};

}  // namespace

EventTrace run_scenario(const ScenarioConfig& config) {
  config.validate();
  Simulator sim(config);
  return sim.run();
}

}  // namespace uwbloc
