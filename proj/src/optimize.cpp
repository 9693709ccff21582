#include "optimize.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace uwbloc::detail {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec2 clamp(const Vec2& x, const Rect& b) {
  return {std::clamp(x(0), b.min_x, b.max_x), std::clamp(x(1), b.min_y, b.max_y)};
}

// Components pinned at a bound with the gradient pushing outward.
std::array<bool, 2> active_set(const Vec2& x, const Vec2& grad, const Rect& b) {
  const std::array<double, 2> lo{b.min_x, b.min_y};
  const std::array<double, 2> hi{b.max_x, b.max_y};
  std::array<bool, 2> active{};
  for (int i = 0; i < 2; ++i) {
    active[i] = (x(i) <= lo[i] && grad(i) > 0.0) || (x(i) >= hi[i] && grad(i) < 0.0);
  }
  return active;
}

Vec2 mask(Vec2 v, const std::array<bool, 2>& active) {
  for (int i = 0; i < 2; ++i) {
    if (active[i]) v(i) = 0.0;
  }
  return v;
}

double cost_at(const ResidualFn& fn, const Vec2& x) { return fn(x).r.squaredNorm(); }

// Brent's bracketed 1-D minimizer on [a, b].
double brent_minimize(const std::function<double(double)>& f, double a, double b, double tol, int max_iter,
                      double* f_min) {
  constexpr double kGolden = 0.3819660112501051;
  double x = a + kGolden * (b - a);
  double w = x;
  double v = x;
  double fx = f(x);
  double fw = fx;
  double fv = fx;
  double d = 0.0;
  double e = 0.0;
  for (int iter = 0; iter < max_iter; ++iter) {
    const double m = 0.5 * (a + b);
    const double tol1 = tol + 1e-10 * std::abs(x);
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - m) <= tol2 - 0.5 * (b - a)) break;
    bool golden = true;
    if (std::abs(e) > tol1) {
      double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const double e_prev = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * q * e_prev) && p > q * (a - x) && p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = (x < m) ? tol1 : -tol1;
        golden = false;
      }
    }
    if (golden) {
      e = (x < m) ? b - x : a - x;
      d = kGolden * e;
    }
    const double u = std::abs(d) >= tol1 ? x + d : x + (d > 0.0 ? tol1 : -tol1);
    const double fu = f(u);
    if (fu <= fx) {
      if (u < x) b = x; else a = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  *f_min = fx;
  return x;
}

// Feasible parameter range of x + t * d inside the box.
std::pair<double, double> feasible_interval(const Vec2& x, const Vec2& d, const Rect& b) {
  double lo = -kInf;
  double hi = kInf;
  const std::array<double, 2> bmin{b.min_x, b.min_y};
  const std::array<double, 2> bmax{b.max_x, b.max_y};
  for (int i = 0; i < 2; ++i) {
    if (d(i) == 0.0) continue;
    double t0 = (bmin[i] - x(i)) / d(i);
    double t1 = (bmax[i] - x(i)) / d(i);
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
  }
  return {lo, hi};
}

// Coarse scan of the feasible segment followed by Brent refinement around the best sample.
double line_minimize(const ResidualFn& fn, Vec2& x, const Vec2& d, const Rect& b, double tol, double* f_out) {
  auto [lo, hi] = feasible_interval(x, d, b);
  const double extent = std::hypot(b.max_x - b.min_x, b.max_y - b.min_y);
  lo = std::max(lo, -extent);
  hi = std::min(hi, extent);
  const auto phi = [&](double t) { return cost_at(fn, clamp(x + t * d, b)); };
  constexpr int kSamples = 24;
  double best_t = 0.0;
  double best_f = phi(0.0);
  const double h = (hi - lo) / kSamples;
  for (int i = 0; i <= kSamples; ++i) {
    const double t = lo + i * h;
    const double f = phi(t);
    if (f < best_f) {
      best_f = f;
      best_t = t;
    }
  }
  const double a = std::max(lo, best_t - h);
  const double c = std::min(hi, best_t + h);
  double f_min = best_f;
  double t = best_t;
  if (c > a) {
    t = brent_minimize(phi, a, c, tol, 200, &f_min);
    if (f_min > best_f) {
      t = best_t;
      f_min = best_f;
    }
  }
  x = clamp(x + t * d, b);
  *f_out = f_min;
  return t;
}

}  // namespace

OptimResult trust_region_lsq(const ResidualFn& fn, Vec2 x0, const Rect& bounds, const OptimOptions& opts) {
  OptimResult out;
  Vec2 x = clamp(x0, bounds);
  Residuals res = fn(x);
  double cost = sum_sq(res);
  double lambda = -1.0;
  double nu = 2.0;
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    if (cost == 0.0) {
      out.converged = true;
      break;
    }
    const Vec2 g = res.J.transpose() * res.r;
    const Eigen::Matrix2d A = res.J.transpose() * res.J;
    const auto active = active_set(x, g, bounds);
    if (lambda < 0.0) lambda = 1e-3 * std::max({A(0, 0), A(1, 1), 1e-12});

    Eigen::Matrix2d M = A;
    for (int i = 0; i < 2; ++i) M(i, i) += lambda * std::max(A(i, i), 1e-12);
    Vec2 rhs = -g;
    for (int i = 0; i < 2; ++i) {
      if (active[i]) {
        M.row(i).setZero();
        M.col(i).setZero();
        M(i, i) = 1.0;
        rhs(i) = 0.0;
      }
    }
    const Vec2 step = M.ldlt().solve(rhs);
    const Vec2 x_new = clamp(x + step, bounds);
    const Vec2 s = x_new - x;
    if (!(s.norm() >= opts.step_tol)) {
      out.converged = true;
      break;
    }
    Residuals res_new = fn(x_new);
    const double cost_new = sum_sq(res_new);
    const double predicted = -(2.0 * g.dot(s) + s.dot(A * s));
    const double actual = cost - cost_new;
    const double rho = predicted > 0.0 ? actual / predicted : (actual > 0.0 ? 1.0 : -1.0);
    if (rho > 1e-4) {
      x = x_new;
      res = std::move(res_new);
      cost = cost_new;
      lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
      nu = 2.0;
    } else {
      lambda *= nu;
      nu *= 2.0;
      if (!std::isfinite(lambda) || lambda > 1e30) {
        out.converged = true;  // no descent direction left
        break;
      }
    }
  }
  out.x = x;
  out.cost = cost;
  out.iterations = it;
  return out;
}

OptimResult projected_bfgs(const ResidualFn& fn, Vec2 x0, const Rect& bounds, const OptimOptions& opts) {
  OptimResult out;
  Vec2 x = clamp(x0, bounds);
  Residuals res = fn(x);
  double f = sum_sq(res);
  Vec2 grad = 2.0 * res.J.transpose() * res.r;
  Eigen::Matrix2d Hinv = Eigen::Matrix2d::Identity() / std::max(grad.norm(), 1e-12);
  bool fresh = true;
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    const auto active = active_set(x, grad, bounds);
    const Vec2 g_free = mask(grad, active);
    if (g_free.norm() == 0.0) {
      out.converged = true;
      break;
    }
    Vec2 d = mask(-(Hinv * g_free), active);
    if (d.dot(grad) >= 0.0) {
      Hinv = Eigen::Matrix2d::Identity() / std::max(grad.norm(), 1e-12);
      fresh = true;
      d = -g_free / std::max(grad.norm(), 1e-12);
    }
    double alpha = 1.0;
    Vec2 x_new = x;
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = clamp(x + alpha * d, bounds);
      f_new = cost_at(fn, x_new);
      if (f_new <= f + 1e-4 * grad.dot(x_new - x)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    const Vec2 s = x_new - x;
    if (!accepted || s.norm() < opts.step_tol) {
      if (accepted) {
        x = x_new;
        f = f_new;
      }
      out.converged = true;
      break;
    }
    Residuals res_new = fn(x_new);
    const Vec2 grad_new = 2.0 * res_new.J.transpose() * res_new.r;
    const Vec2 y = grad_new - grad;
    const double sy = s.dot(y);
    if (sy > 1e-300) {
      if (fresh) {
        Hinv = Eigen::Matrix2d::Identity() * (sy / y.squaredNorm());
        fresh = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::Matrix2d I = Eigen::Matrix2d::Identity();
      Hinv = (I - rho * s * y.transpose()) * Hinv * (I - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    x = x_new;
    f = f_new;
    grad = grad_new;
  }
  out.x = x;
  out.cost = f;
  out.iterations = it;
  return out;
}

OptimResult powell(const ResidualFn& fn, Vec2 x0, const Rect& bounds, const OptimOptions& opts) {
  OptimResult out;
  Vec2 x = clamp(x0, bounds);
  double f = cost_at(fn, x);
  std::array<Vec2, 2> dirs{Vec2(1.0, 0.0), Vec2(0.0, 1.0)};
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    const Vec2 x_start = x;
    const double f_start = f;
    int biggest = 0;
    double biggest_drop = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double f_before = f;
      line_minimize(fn, x, dirs[i], bounds, opts.step_tol, &f);
      if (f_before - f > biggest_drop) {
        biggest_drop = f_before - f;
        biggest = i;
      }
    }
    const Vec2 moved = x - x_start;
    if (moved.norm() < opts.step_tol || 2.0 * (f_start - f) <= opts.cost_tol * 1e-4 * (std::abs(f_start) + std::abs(f)) + 1e-30) {
      out.converged = true;
      break;
    }
    // Replace the direction of largest decrease by the overall displacement.
    const Vec2 new_dir = moved.normalized();
    line_minimize(fn, x, new_dir, bounds, opts.step_tol, &f);
    dirs[biggest] = dirs[1 - biggest];
    dirs[1 - biggest] = new_dir;
    if (std::abs(dirs[0].x() * dirs[1].y() - dirs[0].y() * dirs[1].x()) < 1e-8) {
      dirs = {Vec2(1.0, 0.0), Vec2(0.0, 1.0)};
    }
  }
  out.x = x;
  out.cost = f;
  out.iterations = it;
  return out;
}

}  // namespace uwbloc::detail
