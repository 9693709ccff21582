#pragma once

#include <array>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "uwbloc/core.hpp"
#include "uwbloc/tdoa.hpp"
#include "uwbloc/twr.hpp"

namespace uwbloc {

enum class SolveMethod { DerivativeFree, QuasiNewton, LeastSquares };

std::string_view to_string(SolveMethod method);
std::optional<SolveMethod> parse_solve_method(std::string_view name);

using Measurements = std::variant<std::vector<RangeMeasurement>, std::vector<TdoaMeasurement>>;

struct SolveRequest {
  SystemLayout layout;
  Measurements measurements;
  std::optional<Position> prior;  // last localized point, used as a warm start
  Rect bounds;
};

struct SolveResult {
  Position position;
  double residual_norm = 0.0;  // |r|: m^2 for ranges, m for TDoA
  double cost = 0.0;           // |r|^2
  int iterations = 0;
  double wall_time = 0.0;  // s
  bool converged = false;
  bool ambiguous = false;  // two mirror minima and nothing to pick between them
};

struct ClosedFormResult {
  Position position;
  double max_range_error = 0.0;  // m
  bool inconsistent = false;
};

// Intersection of three circles from the linear system obtained by
// differencing the circle equations. Throws CollinearAnchors.
ClosedFormResult trilaterate_closed_form(const std::array<Position, 3>& anchors, const std::array<double, 3>& ranges,
                                         double tolerance = 1e-6);

// Minimizes sum_k (r_k^2 - |p_k - p|^2)^2 inside the request bounds.
SolveResult solve_twr(const SolveRequest& request, SolveMethod method = SolveMethod::LeastSquares);

// Minimizes sum (c dt_kl - (|p - p_k| - |p - p_l|))^2 inside the request bounds.
// Throws DegenerateGeometry for collinear or too few anchors.
SolveResult solve_tdoa(const SolveRequest& request, SolveMethod method = SolveMethod::LeastSquares);

struct ResidualJacobian {
  Eigen::VectorXd r;
  Eigen::MatrixX2d J;
};

// Residuals of whichever measurement kind the request carries, with the
// analytic Jacobian. Throws SingularPoint on an anchor for TDoA.
ResidualJacobian residuals_and_jacobian(const SolveRequest& request, Position p);

double solve_cost(const SolveRequest& request, Position p);

}  // namespace uwbloc
