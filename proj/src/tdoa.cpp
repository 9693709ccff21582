#include "uwbloc/tdoa.hpp"

#include <iomanip>
#include <ostream>
#include <string>

namespace uwbloc {

double adjusted_arrival(double t_range_rx, double t_sync_rx, double t_sync_tx, double skew, double zeta) {
  if (!(skew > 0.0)) throw Error(ErrorCode::InvalidArgument, "skew must be positive");
  return (t_range_rx - t_sync_rx + zeta) / skew + t_sync_tx;
}

double adjusted_arrival(double t_range_rx, const SyncEpoch& sync, double skew, double zeta, NodeId anchor) {
  const auto it = sync.rx.find(anchor);
  if (it == sync.rx.end()) {
    throw Error(ErrorCode::MissingSyncRx, "anchor " + std::to_string(anchor.value) + " has no SYNC stamp in epoch " +
                                              std::to_string(sync.epoch));
  }
  return adjusted_arrival(t_range_rx, it->second, sync.t_sync_tx, skew, zeta);
}

std::vector<TdoaMeasurement> pairwise_tdoa(const std::map<NodeId, double>& adjusted, std::int64_t epoch) {
  std::vector<TdoaMeasurement> out;
  for (auto k = adjusted.begin(); k != adjusted.end(); ++k) {
    for (auto l = std::next(k); l != adjusted.end(); ++l) {
      out.push_back({k->first, l->first, k->second - l->second, epoch});
    }
  }
  return out;
}

namespace {

void fold_sync(AnchorClockTrack& track, const SyncEpoch& sync, double rx, const TdoaOptions& options) {
  if (track.last_sync_tx && track.last_sync_rx) {
    const double skew = estimate_skew(*track.last_sync_rx, rx, *track.last_sync_tx, sync.t_sync_tx);
    track.raw_skew = skew;
    if (options.mode == TdoaMode::Kalman) {
      if (track.filter) {
        auto predicted = kf_predict(*track.filter, sync.t_sync_tx - *track.last_sync_tx, options.kalman);
        track.filter = kf_update(predicted, rx, skew, options.kalman);
      } else {
        track.filter = kf_init(rx, skew, options.kalman);
      }
    }
  }
  track.last_sync_tx = sync.t_sync_tx;
  track.last_sync_rx = rx;
  track.last_sync_epoch = sync.epoch;
}

}  // namespace

EpochResult process_epoch(const TdoaState& prev, const std::optional<SyncEpoch>& sync, const RangeEpoch& range,
                          const SystemLayout& layout, const TdoaOptions& options) {
  EpochResult result;
  result.next = prev;

  if (sync) {
    for (const auto& anchor : layout.anchors) {
      const auto it = sync->rx.find(anchor.id);
      if (it == sync->rx.end()) continue;
      fold_sync(result.next.anchors[anchor.id], *sync, it->second, options);
    }
  }

  std::vector<NodeId> missing;
  std::vector<NodeId> no_history;
  for (const auto& anchor : layout.anchors) {
    const auto rx = range.rx.find(anchor.id);
    const auto track_it = result.next.anchors.find(anchor.id);
    const bool synced_now = sync && track_it != result.next.anchors.end() &&
                            track_it->second.last_sync_epoch == sync->epoch;
    if (rx == range.rx.end()) {
      missing.push_back(anchor.id);
      continue;
    }
    const double zeta = propagation_delay(layout.sync.position, anchor.position);
    if (options.mode == TdoaMode::Raw) {
      // Raw ratio skew is only valid against this epoch's SYNC.
      if (!synced_now) {
        missing.push_back(anchor.id);
        continue;
      }
      const auto& track = track_it->second;
      if (!track.raw_skew) {
        no_history.push_back(anchor.id);
        continue;
      }
      result.adjusted[anchor.id] =
          adjusted_arrival(rx->second, *track.last_sync_rx, *track.last_sync_tx, *track.raw_skew, zeta);
    } else {
      // The filter state refers to the anchor's latest SYNC, which may be older
      // than this epoch; the linear clock model bridges the gap.
      if (track_it == result.next.anchors.end() || !track_it->second.last_sync_tx) {
        if (sync && !sync->rx.contains(anchor.id)) {
          missing.push_back(anchor.id);
        } else {
          no_history.push_back(anchor.id);
        }
        continue;
      }
      const auto& track = track_it->second;
      if (!track.filter) {
        no_history.push_back(anchor.id);
        continue;
      }
      result.adjusted[anchor.id] =
          adjusted_arrival(rx->second, track.filter->t_hat, *track.last_sync_tx, track.filter->m_hat, zeta);
    }
  }

  auto list = [](const std::vector<NodeId>& ids) {
    std::string s;
    for (const auto& id : ids) s += (s.empty() ? "" : ",") + std::to_string(id.value);
    return s;
  };
  if (!missing.empty() && !options.allow_degraded) {
    result.failure = ErrorCode::IncompleteEpoch;
    result.detail = "missing stamps from anchors " + list(missing);
    result.adjusted.clear();
    return result;
  }
  if (!no_history.empty() && (!options.allow_degraded || result.adjusted.size() < 2)) {
    result.failure = ErrorCode::InsufficientHistory;
    result.detail = "no previous SYNC for anchors " + list(no_history);
    result.adjusted.clear();
    return result;
  }
  if (result.adjusted.size() < 2) {
    result.failure = ErrorCode::IncompleteEpoch;
    result.detail = "fewer than two usable anchors";
    result.adjusted.clear();
    return result;
  }
  result.measurements = pairwise_tdoa(result.adjusted, range.epoch);
  return result;
}

std::vector<TdoaEpochRecord> assemble_tdoa_epochs(const EventTrace& trace, const SystemLayout& layout) {
  std::map<std::int64_t, TdoaEpochRecord> by_epoch;
  const auto is_anchor = [&](NodeId id) { return layout.role_of(id) == NodeRole::Anchor; };
  for (const auto& e : trace.events) {
    auto& rec = by_epoch[e.epoch];
    rec.epoch = e.epoch;
    rec.range.epoch = e.epoch;
    if (e.type == TraceEventType::Tx) {
      if (e.kind == MessageKind::Sync && e.sender == layout.sync.id && e.ticks) {
        if (!rec.sync) rec.sync = SyncEpoch{e.epoch, 0.0, {}};
        rec.sync->t_sync_tx = DeviceTime{*e.ticks, trace.tick_period}.seconds();
      } else if (e.kind == MessageKind::Range && e.sender == layout.tag) {
        rec.range_tx_true = e.time;
      }
    } else if (e.type == TraceEventType::Rx && e.receiver && e.ticks && is_anchor(*e.receiver)) {
      const double stamp = DeviceTime{*e.ticks, trace.tick_period}.seconds();
      if (e.kind == MessageKind::Sync && e.sender == layout.sync.id) {
        if (!rec.sync) rec.sync = SyncEpoch{e.epoch, 0.0, {}};
        rec.sync->rx[*e.receiver] = stamp;
      } else if (e.kind == MessageKind::Range && e.sender == layout.tag) {
        rec.range.rx[*e.receiver] = stamp;
      }
    }
  }
  std::vector<TdoaEpochRecord> out;
  out.reserve(by_epoch.size());
  for (auto& [epoch, rec] : by_epoch) out.push_back(std::move(rec));
  return out;
}

void write_tdoa_csv(std::ostream& out, const std::vector<TdoaMeasurement>& measurements) {
  out << "epoch,anchor_k,anchor_l,dt_seconds\n";
  out << std::setprecision(17);
  for (const auto& m : measurements) {
    out << m.epoch << ',' << m.anchor_k.value << ',' << m.anchor_l.value << ',' << m.dt << '\n';
  }
}

}  // namespace uwbloc
