#pragma once

#include <functional>

#include <Eigen/Core>

#include "uwbloc/core.hpp"

namespace uwbloc::detail {

using Vec2 = Eigen::Vector2d;

struct Residuals {
  Eigen::VectorXd r;
  Eigen::MatrixX2d J;
};

// Evaluates residuals and their Jacobian at a point.
using ResidualFn = std::function<Residuals(const Vec2&)>;

struct OptimOptions {
  int max_iterations = 200;
  double step_tol = 1e-10;  // m
  double cost_tol = 1e-12;  // cost units (m^2 or m^4 depending on the residual)
};

struct OptimResult {
  Vec2 x = Vec2::Zero();
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

inline double sum_sq(const Residuals& res) { return res.r.squaredNorm(); }

// All three minimize sum(r^2) over the box `bounds`.
OptimResult trust_region_lsq(const ResidualFn& fn, Vec2 x0, const Rect& bounds, const OptimOptions& opts);
OptimResult projected_bfgs(const ResidualFn& fn, Vec2 x0, const Rect& bounds, const OptimOptions& opts);
OptimResult powell(const ResidualFn& fn, Vec2 x0, const Rect& bounds, const OptimOptions& opts);

}  // namespace uwbloc::detail
