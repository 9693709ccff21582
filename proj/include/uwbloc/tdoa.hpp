#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uwbloc/clock.hpp"
#include "uwbloc/core.hpp"
#include "uwbloc/netsim.hpp"

namespace uwbloc {

// One SYNC broadcast: transmit stamp on the sync clock and the reception
// stamps on each anchor's own clock.
struct SyncEpoch {
  std::int64_t epoch = 0;
  double t_sync_tx = 0.0;
  std::map<NodeId, double> rx;
};

// Reception stamps of the tag's RANGE broadcast, anchor clocks.
struct RangeEpoch {
  std::int64_t epoch = 0;
  std::map<NodeId, double> rx;
};

// dt = t_k - t_l on the sync clock with k < l; positive when the tag is
// farther from k than from l.
struct TdoaMeasurement {
  NodeId anchor_k;
  NodeId anchor_l;
  double dt = 0.0;
  std::int64_t epoch = 0;
};

// RANGE reception re-expressed on the sync clock:
//   (t_range_rx - t_sync_rx + zeta) / skew + t_sync_tx
double adjusted_arrival(double t_range_rx, double t_sync_rx, double t_sync_tx, double skew, double zeta);

// Same, looking the anchor's SYNC stamp up in `sync`; throws MissingSyncRx.
double adjusted_arrival(double t_range_rx, const SyncEpoch& sync, double skew, double zeta, NodeId anchor);

std::vector<TdoaMeasurement> pairwise_tdoa(const std::map<NodeId, double>& adjusted, std::int64_t epoch);

enum class TdoaMode { Raw, Kalman };

struct TdoaOptions {
  TdoaMode mode = TdoaMode::Raw;
  ClockKfParams kalman;
  bool allow_degraded = false;  // solve with the anchors that remain when stamps are missing
};

// Per-anchor synchronization history carried between epochs.
struct AnchorClockTrack {
  // Most recent SYNC seen by this anchor: sync-clock TX stamp and local RX stamp.
  std::optional<double> last_sync_tx;
  std::optional<double> last_sync_rx;
  std::optional<std::int64_t> last_sync_epoch;
  std::optional<double> raw_skew;  // ratio skew over the last two SYNCs
  std::optional<ClockKfState> filter;
};

struct TdoaState {
  std::map<NodeId, AnchorClockTrack> anchors;
};

struct EpochResult {
  std::vector<TdoaMeasurement> measurements;
  std::map<NodeId, double> adjusted;
  TdoaState next;
  std::optional<ErrorCode> failure;  // InsufficientHistory or IncompleteEpoch
  std::string detail;
};

// Folds one SYNC/RANGE epoch into the per-anchor clock state and produces the
// pairwise TDoA set. `sync` is empty when no SYNC went out this epoch.
EpochResult process_epoch(const TdoaState& prev, const std::optional<SyncEpoch>& sync, const RangeEpoch& range,
                          const SystemLayout& layout, const TdoaOptions& options);

struct TdoaEpochRecord {
  std::int64_t epoch = 0;
  std::optional<SyncEpoch> sync;
  RangeEpoch range;
  std::optional<TrueTime> range_tx_true;
};

// Groups trace stamps by the epoch counter carried in each message.
std::vector<TdoaEpochRecord> assemble_tdoa_epochs(const EventTrace& trace, const SystemLayout& layout);

void write_tdoa_csv(std::ostream& out, const std::vector<TdoaMeasurement>& measurements);

}  // namespace uwbloc
