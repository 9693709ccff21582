#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "uwbloc/core.hpp"
#include "uwbloc/solver.hpp"

namespace uwbloc::oracle {

// Three anchors, sync node at (2,0), 8 m x 8 m room.
inline SystemLayout reference_layout() {
  SystemLayout l;
  l.anchors = {{NodeId{1}, {5.2, 4.3}}, {NodeId{2}, {0.0, 0.0}}, {NodeId{3}, {0.0, 4.3}}};
  l.sync = {NodeId{10}, {2.0, 0.0}};
  l.tag = NodeId{20};
  l.tag_start = {0.0, 2.0};
  l.bounds = {0.0, 8.0, 0.0, 8.0};
  return l;
}

inline double euclid(Position a, Position b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

inline Position anchor_at(const SystemLayout& l, NodeId id) {
  for (const auto& a : l.anchors) {
    if (a.id == id) return a.position;
  }
  return {std::nan(""), std::nan("")};
}

inline std::vector<TdoaMeasurement> exact_tdoa(const SystemLayout& l, Position tag, std::int64_t epoch = 0) {
  std::vector<TdoaMeasurement> out;
  for (std::size_t k = 0; k < l.anchors.size(); ++k) {
    for (std::size_t m = k + 1; m < l.anchors.size(); ++m) {
      const double dk = euclid(tag, l.anchors[k].position);
      const double dm = euclid(tag, l.anchors[m].position);
      out.push_back({l.anchors[k].id, l.anchors[m].id, (dk - dm) / 299792458.0, epoch});
    }
  }
  return out;
}

inline std::vector<RangeMeasurement> exact_ranges(const SystemLayout& l, Position tag) {
  std::vector<RangeMeasurement> out;
  for (const auto& a : l.anchors) out.push_back({a.id, euclid(tag, a.position), 0, false});
  return out;
}

// Cost functions written out independently of the library.
inline double oracle_tdoa_cost(const SystemLayout& l, const std::vector<TdoaMeasurement>& ms, Position p) {
  double c = 0.0;
  for (const auto& m : ms) {
    const double r = 299792458.0 * m.dt - (euclid(p, anchor_at(l, m.anchor_k)) - euclid(p, anchor_at(l, m.anchor_l)));
    c += r * r;
  }
  return c;
}

inline double oracle_twr_cost(const SystemLayout& l, const std::vector<RangeMeasurement>& ms, Position p) {
  double c = 0.0;
  for (const auto& m : ms) {
    const double d = euclid(p, anchor_at(l, m.anchor));
    const double r = m.range * m.range - d * d;
    c += r * r;
  }
  return c;
}

struct GridMin {
  Position at;
  double cost = std::numeric_limits<double>::infinity();
};

// Exhaustive search over the bounds at spacing `step`.
template <typename Cost>
GridMin grid_oracle(const Rect& b, double step, Cost&& cost) {
  GridMin best;
  const auto nx = static_cast<long>(std::floor((b.max_x - b.min_x) / step + 1e-9));
  const auto ny = static_cast<long>(std::floor((b.max_y - b.min_y) / step + 1e-9));
  for (long i = 0; i <= nx; ++i) {
    const double x = b.min_x + static_cast<double>(i) * step;
    for (long j = 0; j <= ny; ++j) {
      const Position p{x, b.min_y + static_cast<double>(j) * step};
      const double c = cost(p);
      if (c < best.cost) best = {p, c};
    }
  }
  return best;
}

// Central differences of the residual vector.
inline Eigen::MatrixX2d finite_difference_jacobian(const SolveRequest& req, Position p, double h = 1e-6) {
  const auto r0 = residuals_and_jacobian(req, p).r;
  Eigen::MatrixX2d J(r0.size(), 2);
  for (int axis = 0; axis < 2; ++axis) {
    Position lo = p;
    Position hi = p;
    (axis == 0 ? lo.x : lo.y) -= h;
    (axis == 0 ? hi.x : hi.y) += h;
    J.col(axis) = (residuals_and_jacobian(req, hi).r - residuals_and_jacobian(req, lo).r) / (2.0 * h);
  }
  return J;
}

}  // namespace uwbloc::oracle
