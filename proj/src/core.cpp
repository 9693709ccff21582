#include "uwbloc/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace uwbloc {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DegenerateInterval: return "DegenerateInterval";
    case ErrorCode::NonPositiveInnovationCovariance: return "NonPositiveInnovationCovariance";
    case ErrorCode::DegenerateExchange: return "DegenerateExchange";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::MissingSyncRx: return "MissingSyncRx";
    case ErrorCode::InsufficientHistory: return "InsufficientHistory";
    case ErrorCode::IncompleteEpoch: return "IncompleteEpoch";
    case ErrorCode::CollinearAnchors: return "CollinearAnchors";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::SingularPoint: return "SingularPoint";
    case ErrorCode::DidNotConverge: return "DidNotConverge";
    case ErrorCode::AmbiguousSolution: return "AmbiguousSolution";
  }
  return "Unknown";
}

std::string_view to_string(NodeRole role) {
  switch (role) {
    case NodeRole::Anchor: return "anchor";
    case NodeRole::Tag: return "tag";
    case NodeRole::Sync: return "sync";
  }
  return "unknown";
}

bool is_finite(Position p) { return std::isfinite(p.x) && std::isfinite(p.y); }

double distance(Position a, Position b) { return std::hypot(a.x - b.x, a.y - b.y); }

double propagation_delay(Position a, Position b) { return distance(a, b) / kSpeedOfLight; }

TrueTime TrueTime::from_seconds(double seconds) {
  return {static_cast<std::int64_t>(std::llround(static_cast<long double>(seconds) * 1e12L))};
}

DeviceTime DeviceTime::from_seconds(long double seconds, double tick_period) {
  if (!(tick_period > 0.0)) throw Error(ErrorCode::InvalidArgument, "tick period must be positive");
  // The tick period itself is rounded to double; values a hair below an edge
  // are taken to sit on it.
  const long double ratio = seconds / static_cast<long double>(tick_period);
  long double ticks = std::floor(ratio);
  if (ratio - ticks > 1.0L - 1e-4L) ticks += 1.0L;
  return {std::max<std::int64_t>(0, static_cast<std::int64_t>(ticks)), tick_period};
}

double DeviceTime::seconds() const {
  return static_cast<double>(static_cast<long double>(ticks) * static_cast<long double>(tick_period));
}

bool Rect::contains(Position p, double tol) const {
  return p.x >= min_x - tol && p.x <= max_x + tol && p.y >= min_y - tol && p.y <= max_y + tol;
}

Position Rect::clamp(Position p) const {
  return {std::clamp(p.x, min_x, max_x), std::clamp(p.y, min_y, max_y)};
}

void SystemLayout::validate(std::size_t min_anchors) const {
  if (anchors.size() < min_anchors) {
    throw Error(ErrorCode::ConfigError, "layout needs at least " + std::to_string(min_anchors) + " anchors, got " +
                                            std::to_string(anchors.size()));
  }
  if (!bounds.valid()) throw Error(ErrorCode::ConfigError, "layout bounds are empty");
  std::set<NodeId> ids;
  auto check = [&](NodeId id, Position p, std::string_view what) {
    if (!ids.insert(id).second) {
      throw Error(ErrorCode::ConfigError, "duplicate node id " + std::to_string(id.value));
    }
    if (!is_finite(p) || !bounds.contains(p)) {
      throw Error(ErrorCode::ConfigError,
                  std::string(what) + " " + std::to_string(id.value) + " lies outside the layout bounds");
    }
  };
  for (const auto& a : anchors) check(a.id, a.position, "anchor");
  check(sync.id, sync.position, "sync node");
  check(tag, tag_start, "tag");
}

std::optional<Position> SystemLayout::position_of(NodeId id) const {
  for (const auto& a : anchors) {
    if (a.id == id) return a.position;
  }
  if (sync.id == id) return sync.position;
  if (tag == id) return tag_start;
  return std::nullopt;
}

std::optional<NodeRole> SystemLayout::role_of(NodeId id) const {
  for (const auto& a : anchors) {
    if (a.id == id) return NodeRole::Anchor;
  }
  if (sync.id == id) return NodeRole::Sync;
  if (tag == id) return NodeRole::Tag;
  return std::nullopt;
}

std::vector<NodeId> SystemLayout::anchor_ids() const {
  std::vector<NodeId> out;
  out.reserve(anchors.size());
  for (const auto& a : anchors) out.push_back(a.id);
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace uwbloc
