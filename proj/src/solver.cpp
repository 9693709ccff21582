#include "uwbloc/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "optimize.hpp"

namespace uwbloc {

namespace {

using detail::Vec2;

constexpr int kGridStarts = 16;  // per axis

Vec2 to_vec(Position p) { return {p.x, p.y}; }
Position to_pos(const Vec2& v) { return {v(0), v(1)}; }

Position anchor_position(const SystemLayout& layout, NodeId id) {
  for (const auto& a : layout.anchors) {
    if (a.id == id) return a.position;
  }
  throw Error(ErrorCode::InvalidArgument, "measurement refers to unknown anchor " + std::to_string(id.value));
}

// Measurement set resolved to anchor coordinates.
struct Problem {
  bool tdoa = false;
  std::vector<Vec2> range_anchor;
  std::vector<double> range;
  std::vector<std::pair<Vec2, Vec2>> pair_anchor;
  std::vector<double> range_diff;  // c * dt
  std::vector<Vec2> distinct;      // distinct anchor positions involved
};

void add_distinct(std::vector<Vec2>& list, const Vec2& p) {
  for (const auto& q : list) {
    if (q == p) return;
  }
  list.push_back(p);
}

Problem prepare(const SolveRequest& request) {
  Problem prob;
  if (const auto* ranges = std::get_if<std::vector<RangeMeasurement>>(&request.measurements)) {
    for (const auto& m : *ranges) {
      const Vec2 p = to_vec(anchor_position(request.layout, m.anchor));
      prob.range_anchor.push_back(p);
      prob.range.push_back(m.range);
      add_distinct(prob.distinct, p);
    }
  } else {
    prob.tdoa = true;
    for (const auto& m : std::get<std::vector<TdoaMeasurement>>(request.measurements)) {
      const Vec2 pk = to_vec(anchor_position(request.layout, m.anchor_k));
      const Vec2 pl = to_vec(anchor_position(request.layout, m.anchor_l));
      prob.pair_anchor.emplace_back(pk, pl);
      prob.range_diff.push_back(kSpeedOfLight * m.dt);
      add_distinct(prob.distinct, pk);
      add_distinct(prob.distinct, pl);
    }
  }
  return prob;
}

// Exact-singularity handling: `strict` throws on an anchor, otherwise the unit
// vector there is taken as zero.
detail::Residuals evaluate(const Problem& prob, const Vec2& p, bool strict) {
  detail::Residuals out;
  if (!prob.tdoa) {
    const auto n = static_cast<Eigen::Index>(prob.range.size());
    out.r.resize(n);
    out.J.resize(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vec2 diff = prob.range_anchor[i] - p;
      out.r(i) = prob.range[i] * prob.range[i] - diff.squaredNorm();
      out.J.row(i) = 2.0 * diff.transpose();
    }
    return out;
  }
  const auto n = static_cast<Eigen::Index>(prob.range_diff.size());
  out.r.resize(n);
  out.J.resize(n, 2);
  const auto unit = [&](const Vec2& anchor, double& dist) -> Vec2 {
    const Vec2 d = p - anchor;
    dist = d.norm();
    if (dist == 0.0) {
      if (strict) throw Error(ErrorCode::SingularPoint, "TDoA Jacobian is undefined at an anchor");
      return Vec2::Zero();
    }
    return d / dist;
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    double dk = 0.0;
    double dl = 0.0;
    const Vec2 uk = unit(prob.pair_anchor[i].first, dk);
    const Vec2 ul = unit(prob.pair_anchor[i].second, dl);
    out.r(i) = prob.range_diff[i] - (dk - dl);
    out.J.row(i) = -(uk - ul).transpose();
  }
  return out;
}

double cross(const Vec2& a, const Vec2& b) { return a(0) * b(1) - a(1) * b(0); }

bool collinear(const std::vector<Vec2>& pts) {
  if (pts.size() < 3) return true;
  double scale = 0.0;
  for (const auto& p : pts) scale = std::max(scale, (p - pts[0]).squaredNorm());
  if (scale == 0.0) return true;
  // Farthest point from the first defines the line.
  std::size_t far = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if ((pts[i] - pts[0]).squaredNorm() == scale) far = i;
  }
  const Vec2 axis = pts[far] - pts[0];
  for (const auto& p : pts) {
    if (std::abs(cross(axis, p - pts[0])) > 1e-9 * scale) return false;
  }
  return true;
}

Vec2 reflect(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 axis = (b - a).normalized();
  const Vec2 rel = p - a;
  const Vec2 along = rel.dot(axis) * axis;
  return a + 2.0 * along - rel;
}

detail::OptimResult run_method(SolveMethod method, const detail::ResidualFn& fn, const Vec2& x0, const Rect& bounds) {
  const detail::OptimOptions opts;
  switch (method) {
    case SolveMethod::DerivativeFree:
      return detail::powell(fn, x0, bounds, opts);
    case SolveMethod::QuasiNewton:
      return detail::projected_bfgs(fn, x0, bounds, opts);
    case SolveMethod::LeastSquares:
      break;
  }
  return detail::trust_region_lsq(fn, x0, bounds, opts);
}

std::vector<Vec2> starting_points(const SolveRequest& request, const Problem& prob, const detail::ResidualFn& fn) {
  const Rect& b = request.bounds;
  std::vector<Vec2> starts;
  if (request.prior) starts.push_back(to_vec(b.clamp(*request.prior)));
  Vec2 centroid = Vec2::Zero();
  for (const auto& p : prob.distinct) centroid += p;
  centroid /= static_cast<double>(prob.distinct.size());
  starts.push_back(to_vec(b.clamp(to_pos(centroid))));
  starts.push_back(to_vec(b.center()));
  if (!prob.tdoa && prob.distinct.size() >= 3 && !collinear(prob.distinct)) {
    // Linearized least squares over all ranges against the first one.
    const auto n = static_cast<Eigen::Index>(prob.range.size());
    Eigen::MatrixX2d A(n - 1, 2);
    Eigen::VectorXd rhs(n - 1);
    const Vec2& p0 = prob.range_anchor[0];
    for (Eigen::Index i = 1; i < n; ++i) {
      const Vec2& pi = prob.range_anchor[i];
      A.row(i - 1) = 2.0 * (pi - p0).transpose();
      rhs(i - 1) = prob.range[0] * prob.range[0] - prob.range[i] * prob.range[i] + pi.squaredNorm() - p0.squaredNorm();
    }
    const Vec2 lin = A.colPivHouseholderQr().solve(rhs);
    if (lin.allFinite()) starts.push_back(to_vec(b.clamp(to_pos(lin))));
  }
  // Best node of a coarse grid guards against distant local minima.
  Vec2 best = starts.front();
  double best_cost = detail::sum_sq(fn(best));
  for (int i = 0; i < kGridStarts; ++i) {
    for (int j = 0; j < kGridStarts; ++j) {
      const Vec2 g(b.min_x + (i + 0.5) * (b.max_x - b.min_x) / kGridStarts,
                   b.min_y + (j + 0.5) * (b.max_y - b.min_y) / kGridStarts);
      const double c = detail::sum_sq(fn(g));
      if (c < best_cost) {
        best_cost = c;
        best = g;
      }
    }
  }
  starts.push_back(best);
  return starts;
}

SolveResult solve(const SolveRequest& request, const Problem& prob, SolveMethod method) {
  const auto t0 = std::chrono::steady_clock::now();
  const detail::ResidualFn fn = [&prob](const Vec2& x) { return evaluate(prob, x, false); };

  detail::OptimResult best;
  bool have = false;
  for (const auto& start : starting_points(request, prob, fn)) {
    auto run = run_method(method, fn, start, request.bounds);
    if (!have || run.cost < best.cost || (run.cost == best.cost && run.converged && !best.converged)) {
      best = run;
      have = true;
    }
  }
  if (!best.converged) {
    throw Error(ErrorCode::DidNotConverge, "iteration cap reached with cost " + std::to_string(best.cost));
  }

  SolveResult result;
  result.position = to_pos(best.x);
  result.cost = best.cost;
  result.residual_norm = std::sqrt(best.cost);
  result.iterations = best.iterations;
  result.converged = true;

  // Anchors on one line cannot tell a point from its reflection.
  if (!prob.tdoa && collinear(prob.distinct)) {
    const Vec2 a = prob.distinct[0];
    Vec2 b = prob.distinct.size() > 1 ? prob.distinct[1] : a;
    for (const auto& p : prob.distinct) {
      if ((p - a).squaredNorm() > (b - a).squaredNorm()) b = p;
    }
    if (b != a) {
      const Vec2 mirror = reflect(best.x, a, b);
      const double mirror_cost = detail::sum_sq(fn(mirror));
      const bool distinct = (mirror - best.x).norm() > 1e-6;
      const bool comparable = mirror_cost <= best.cost * (1.0 + 1e-6) + 1e-12;
      if (distinct && comparable && request.bounds.contains(to_pos(mirror), 1e-9)) {
        if (request.prior) {
          const Vec2 prior = to_vec(*request.prior);
          if ((mirror - prior).norm() < (best.x - prior).norm()) {
            result.position = to_pos(mirror);
            result.cost = mirror_cost;
            result.residual_norm = std::sqrt(mirror_cost);
          }
        } else {
          result.ambiguous = true;
          result.converged = false;
        }
      }
    }
  }
  result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

void check_bounds(const Rect& bounds) {
  if (!bounds.valid()) throw Error(ErrorCode::InvalidArgument, "solver bounds are empty");
}

}  // namespace

std::string_view to_string(SolveMethod method) {
  switch (method) {
    case SolveMethod::DerivativeFree:
      return "derivative_free";
    case SolveMethod::QuasiNewton:
      return "quasi_newton";
    case SolveMethod::LeastSquares:
      return "least_squares";
  }
  return "unknown";
}

std::optional<SolveMethod> parse_solve_method(std::string_view name) {
  for (auto m : {SolveMethod::DerivativeFree, SolveMethod::QuasiNewton, SolveMethod::LeastSquares}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

ClosedFormResult trilaterate_closed_form(const std::array<Position, 3>& anchors, const std::array<double, 3>& ranges,
                                         double tolerance) {
  const Vec2 p0 = to_vec(anchors[0]);
  const Vec2 p1 = to_vec(anchors[1]);
  const Vec2 p2 = to_vec(anchors[2]);
  Eigen::Matrix2d A;
  A.row(0) = 2.0 * (p1 - p0).transpose();
  A.row(1) = 2.0 * (p2 - p0).transpose();
  const double scale = std::max({(p1 - p0).squaredNorm(), (p2 - p0).squaredNorm(), (p2 - p1).squaredNorm()});
  const double det = A.determinant();
  if (scale == 0.0 || std::abs(det) <= 1e-9 * 4.0 * scale) {
    throw Error(ErrorCode::CollinearAnchors, "closed-form trilateration needs non-collinear anchors");
  }
  const double r0 = ranges[0] * ranges[0];
  Vec2 rhs(r0 - ranges[1] * ranges[1] + p1.squaredNorm() - p0.squaredNorm(),
           r0 - ranges[2] * ranges[2] + p2.squaredNorm() - p0.squaredNorm());
  const Vec2 x = A.inverse() * rhs;
  ClosedFormResult out;
  out.position = to_pos(x);
  for (int k = 0; k < 3; ++k) {
    out.max_range_error = std::max(out.max_range_error, std::abs(distance(out.position, anchors[k]) - ranges[k]));
  }
  out.inconsistent = out.max_range_error > tolerance;
  return out;
}

SolveResult solve_twr(const SolveRequest& request, SolveMethod method) {
  check_bounds(request.bounds);
  if (!std::holds_alternative<std::vector<RangeMeasurement>>(request.measurements)) {
    throw Error(ErrorCode::InvalidArgument, "solve_twr needs range measurements");
  }
  const Problem prob = prepare(request);
  if (prob.distinct.size() < 2) throw Error(ErrorCode::InvalidArgument, "TWR needs ranges to at least two anchors");
  return solve(request, prob, method);
}

SolveResult solve_tdoa(const SolveRequest& request, SolveMethod method) {
  check_bounds(request.bounds);
  if (!std::holds_alternative<std::vector<TdoaMeasurement>>(request.measurements)) {
    throw Error(ErrorCode::InvalidArgument, "solve_tdoa needs TDoA measurements");
  }
  const Problem prob = prepare(request);
  if (prob.distinct.size() < 3) {
    throw Error(ErrorCode::DegenerateGeometry, "TDoA needs at least three anchors in the measured pairs");
  }
  if (collinear(prob.distinct)) throw Error(ErrorCode::DegenerateGeometry, "TDoA anchors are collinear");
  return solve(request, prob, method);
}

ResidualJacobian residuals_and_jacobian(const SolveRequest& request, Position p) {
  const Problem prob = prepare(request);
  auto res = evaluate(prob, to_vec(p), true);
  return {std::move(res.r), std::move(res.J)};
}

double solve_cost(const SolveRequest& request, Position p) {
  const Problem prob = prepare(request);
  return evaluate(prob, to_vec(p), false).r.squaredNorm();
}

}  // namespace uwbloc
