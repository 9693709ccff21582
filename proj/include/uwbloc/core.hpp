#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "uwbloc/error.hpp"

namespace uwbloc {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

// DW1000-class timestamp counter: 38.4 MHz reference multiplied up to 63.8976 GHz.
inline constexpr double kDefaultTickPeriod = 1.0 / 63.8976e9;  // ~15.65 ps

struct Position {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Position&) const = default;
};

inline Position operator+(Position a, Position b) { return {a.x + b.x, a.y + b.y}; }
inline Position operator-(Position a, Position b) { return {a.x - b.x, a.y - b.y}; }
inline Position operator*(double s, Position a) { return {s * a.x, s * a.y}; }

bool is_finite(Position p);

double distance(Position a, Position b);

// Time of flight between two points at the speed of light, in seconds.
double propagation_delay(Position a, Position b);

struct NodeId {
  int value = 0;

  auto operator<=>(const NodeId&) const = default;
};

enum class NodeRole { Anchor, Tag, Sync };

std::string_view to_string(NodeRole role);

// Simulated wall-clock time in integer picoseconds.
struct TrueTime {
  std::int64_t picoseconds = 0;

  static TrueTime from_seconds(double seconds);
  double seconds() const { return static_cast<double>(picoseconds) * 1e-12; }

  auto operator<=>(const TrueTime&) const = default;
};

inline TrueTime operator+(TrueTime t, std::int64_t ps) { return {t.picoseconds + ps}; }

// A device timestamp: an integer count of ticks of the device counter.
struct DeviceTime {
  std::int64_t ticks = 0;
  double tick_period = kDefaultTickPeriod;

  // Counter value reached at `seconds` of local clock time (truncating, like a
  // hardware counter latch).
  static DeviceTime from_seconds(long double seconds, double tick_period = kDefaultTickPeriod);
  double seconds() const;

  bool operator==(const DeviceTime&) const = default;
};

struct Rect {
  double min_x = 0.0;
  double max_x = 0.0;
  double min_y = 0.0;
  double max_y = 0.0;

  bool contains(Position p, double tol = 0.0) const;
  Position clamp(Position p) const;
  Position center() const { return {0.5 * (min_x + max_x), 0.5 * (min_y + max_y)}; }
  bool valid() const { return min_x < max_x && min_y < max_y; }
};

struct Node {
  NodeId id;
  Position position;
};

struct SystemLayout {
  std::vector<Node> anchors;
  Node sync;
  NodeId tag;
  Position tag_start;
  Rect bounds;

  // Throws ConfigError on duplicate ids, too few anchors or out-of-bounds nodes.
  void validate(std::size_t min_anchors = 2) const;

  std::optional<Position> position_of(NodeId id) const;
  std::optional<NodeRole> role_of(NodeId id) const;
  std::vector<NodeId> anchor_ids() const;
};

// Mixes a base seed with a salt into an independent 64-bit stream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace uwbloc

template <>
struct std::hash<uwbloc::NodeId> {
  std::size_t operator()(const uwbloc::NodeId& id) const noexcept { return std::hash<int>{}(id.value); }
};
