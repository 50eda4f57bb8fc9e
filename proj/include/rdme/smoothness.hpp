#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "rdme/bias_aware.hpp"
#include "rdme/core_data.hpp"
#include "rdme/errors.hpp"
#include "rdme/local_poly.hpp"
#include "rdme/qp.hpp"

namespace rdme {

namespace detail {

// Per-side global polynomial least squares; returns coefficients in x
// (lowest order first). Columns scaled by the side's |x| range.
inline std::vector<double> side_poly_fit(const RdSample& sample, Side side,
                                         const OutcomeSelector& outcome,
                                         int degree, int min_support,
                                         const char* where) {
  int pts = 0;
  double xmax = 0.0;
  for (const auto& sp : sample.support) {
    const bool in = side == Side::left ? sp.x < 0.0 : sp.x >= 0.0;
    if (in) {
      ++pts;
      xmax = std::max(xmax, std::abs(sp.x));
    }
  }
  if (pts < min_support) {
    throw IdentificationError(
        std::string(where) + ": need at least " +
        std::to_string(min_support) + " support points on the " +
        (side == Side::left ? "left" : "right") + " side, have " +
        std::to_string(pts));
  }
  const double scale = xmax > 0.0 ? xmax : 1.0;

  std::vector<double> xs, vs;
  for (const auto& o : sample.observations) {
    const bool in = side == Side::left ? o.x < 0.0 : o.x >= 0.0;
    if (!in) continue;
    xs.push_back(o.x);
    vs.push_back(outcome(o));
  }
  const int n = static_cast<int>(xs.size());
  Eigen::MatrixXd X(n, degree + 1);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) {
    double pw = 1.0;
    const double u = xs[i] / scale;
    for (int j = 0; j <= degree; ++j) {
      X(i, j) = pw;
      pw *= u;
    }
    v(i) = vs[i];
  }
  const Eigen::VectorXd beta = X.householderQr().solve(v);
  std::vector<double> coef(degree + 1);
  double s = 1.0;
  for (int j = 0; j <= degree; ++j) {
    coef[j] = beta(j) / s;
    s *= scale;
  }
  return coef;
}

// Max of |a + b x + c x^2| over [lo, hi]: endpoints plus interior vertex.
inline double max_abs_quadratic(double a, double b, double c, double lo,
                                double hi) {
  auto val = [&](double x) { return std::abs(a + b * x + c * x * x); };
  double m = std::max(val(lo), val(hi));
  if (c != 0.0) {
    const double vx = -b / (2.0 * c);
    if (vx > lo && vx < hi) m = std::max(m, val(vx));
  }
  return m;
}

inline std::pair<double, double> side_range(const RdSample& sample,
                                            Side side) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& sp : sample.support) {
    const bool in = side == Side::left ? sp.x < 0.0 : sp.x >= 0.0;
    if (in) {
      lo = std::min(lo, sp.x);
      hi = std::max(hi, sp.x);
    }
  }
  return {lo, hi};
}

}  // namespace detail

// Rule of thumb based on global quartic fits: the largest absolute second
// derivative of the fitted quartic over each side's observed range.
inline SmoothnessClass rot_ak(const RdSample& sample,
                              const OutcomeSelector& outcome) {
  double M = 0.0;
  for (Side side : {Side::left, Side::right}) {
    const auto c =
        detail::side_poly_fit(sample, side, outcome, 4, 5, "rot_ak");
    const auto [lo, hi] = detail::side_range(sample, side);
    // g''(x) = 2 c2 + 6 c3 x + 12 c4 x^2
    M = std::max(M, detail::max_abs_quadratic(2.0 * c[2], 6.0 * c[3],
                                              12.0 * c[4], lo, hi));
  }
  return SmoothnessClass{M};
}

// Rule of thumb based on global quadratic fits, inflated by `factor`.
inline SmoothnessClass rot_iw(const RdSample& sample,
                              const OutcomeSelector& outcome,
                              double factor = 2.0) {
  if (!(factor > 0.0)) {
    throw InvalidParameterError("rot_iw: factor must be > 0");
  }
  double curv = 0.0;
  for (Side side : {Side::left, Side::right}) {
    const auto c =
        detail::side_poly_fit(sample, side, outcome, 2, 3, "rot_iw");
    curv = std::max(curv, std::abs(2.0 * c[2]));
  }
  return SmoothnessClass{factor * curv};
}

// Smoothness constant in rescaled-to-[-1,1] units.
inline double rescaled_constant(const SmoothnessClass& cls,
                                const ScaleInfo& scale) {
  return cls.M * scale.scale;
}

// ---------------------------------------------------------------------------
// Extremal constrained-spline fit: quadratic spline per side, SSR
// minimized subject to |g''| <= M on every piece and g'' = sign * M on the
// piece(s) adjacent to the cutoff.
// ---------------------------------------------------------------------------

enum class CurvatureSign { plus, minus, best };

struct SplineOptions {
  // Apply the |g''| = M equality on the cutoff-adjacent piece of each side.
  bool constrain_left = true;
  bool constrain_right = true;
  // Knots at quantiles of |x| instead of equally spaced.
  bool quantile_knots = false;
};

// One side of the spline in the distance coordinate u = |x| >= 0:
// g(u) = intercept + slope * u + sum_j curvature_j * psi_j(u), where
// psi_j integrates the indicator of piece j twice. Curvature in x equals
// curvature in u on both sides.
struct SideSpline {
  double intercept = 0.0;
  double slope = 0.0;                // with respect to u = |x|
  std::vector<double> knots;         // interior knots in u, ascending
  std::vector<double> curvature;     // per piece, knots.size() + 1 entries
  double u_max = 0.0;                // observed range end

  int piece_of(double u) const {
    int j = 0;
    while (j < static_cast<int>(knots.size()) && u >= knots[j]) ++j;
    return j;
  }

  double value(double u) const {
    double g = intercept + slope * u;
    double k_lo = 0.0;
    for (std::size_t j = 0; j < curvature.size(); ++j) {
      const double k_hi =
          j < knots.size() ? knots[j] : std::numeric_limits<double>::infinity();
      if (u > k_lo) {
        const double r = std::min(u, k_hi) - k_lo;
        // integral of (u - s) over s in [k_lo, min(u, k_hi)]
        g += curvature[j] * (r * (u - k_lo) - 0.5 * r * r);
      }
      k_lo = k_hi;
      if (u <= k_lo) break;
    }
    return g;
  }

  double second_derivative(double u) const { return curvature[piece_of(u)]; }
};

struct ActiveConstraint {
  Side side;
  int piece = 0;
  int direction = 0;  // +1 upper bound (g'' = +M), -1 lower (g'' = -M)
};

struct SplineFit {
  std::vector<double> knots_left;   // original x coordinates, ascending
  std::vector<double> knots_right;
  SideSpline left, right;
  double ssr = 0.0;
  double M = 0.0;
  double kkt_residual = 0.0;
  std::vector<ActiveConstraint> active_constraints;
  CurvatureSign sign_used = CurvatureSign::plus;

  double value(double x) const {
    return x >= 0.0 ? right.value(x) : left.value(-x);
  }
  double second_derivative(double x) const {
    return x >= 0.0 ? right.second_derivative(x)
                    : left.second_derivative(-x);
  }
};

namespace detail {

inline std::vector<double> spline_knots(const std::vector<double>& us,
                                        int knots_per_side,
                                        bool quantile) {
  const double u_max = us.back();
  std::vector<double> knots;
  knots.reserve(knots_per_side);
  if (quantile) {
    for (int j = 1; j <= knots_per_side; ++j) {
      const double q = static_cast<double>(j) / (knots_per_side + 1);
      const double pos = q * (us.size() - 1);
      const std::size_t i0 = static_cast<std::size_t>(pos);
      const double w = pos - static_cast<double>(i0);
      const double k = i0 + 1 < us.size()
                           ? (1.0 - w) * us[i0] + w * us[i0 + 1]
                           : us[i0];
      knots.push_back(k);
    }
  } else {
    for (int j = 1; j <= knots_per_side; ++j) {
      knots.push_back(u_max * j / (knots_per_side + 1));
    }
  }
  // Collapse duplicates (possible with quantile placement on ties).
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  return knots;
}

inline double psi_basis(double u, double k_lo, double k_hi) {
  if (u <= k_lo) return 0.0;
  const double r = std::min(u, k_hi) - k_lo;
  return r * (u - k_lo) - 0.5 * r * r;
}

}  // namespace detail

// Solves one sign configuration of the extremal spline QP.
inline SplineFit extremal_spline_fit_signed(const RdSample& sample,
                                            const OutcomeSelector& outcome,
                                            const SmoothnessClass& cls,
                                            int knots_per_side, int sign,
                                            const SplineOptions& opts = {}) {
  validate(cls, "extremal_spline_fit");
  if (knots_per_side < 1) {
    throw InvalidParameterError(
        "extremal_spline_fit: knots_per_side must be >= 1");
  }
  if (sign != 1 && sign != -1) {
    throw InvalidParameterError("extremal_spline_fit: sign must be +-1");
  }

  // Split observations into sides; work in u = |x|.
  std::vector<double> ul, vl, ur, vr;
  for (const auto& o : sample.observations) {
    if (o.x < 0.0) {
      ul.push_back(-o.x);
      vl.push_back(outcome(o));
    } else {
      ur.push_back(o.x);
      vr.push_back(outcome(o));
    }
  }
  if (ul.empty() || ur.empty()) {
    throw IdentificationError(
        "extremal_spline_fit: need observations on both sides");
  }
  std::sort(ul.begin(), ul.end());
  std::sort(ur.begin(), ur.end());
  const auto knots_l =
      detail::spline_knots(ul, knots_per_side, opts.quantile_knots);
  const auto knots_r =
      detail::spline_knots(ur, knots_per_side, opts.quantile_knots);
  const int pl = static_cast<int>(knots_l.size()) + 1;
  const int pr = static_cast<int>(knots_r.size()) + 1;

  // Parameter layout: [a_L, b_L, theta_L(0..pl-1), a_R, b_R, theta_R(..)].
  const int off_r = 2 + pl;
  const int p = off_r + 2 + pr;
  const int n = static_cast<int>(sample.observations.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, p);
  Eigen::VectorXd yv(n);
  int row = 0;
  for (const auto& o : sample.observations) {
    const bool left = o.x < 0.0;
    const double u = std::abs(o.x);
    const auto& knots = left ? knots_l : knots_r;
    const int base = left ? 0 : off_r;
    const int np = left ? pl : pr;
    A(row, base) = 1.0;
    A(row, base + 1) = u;
    double k_lo = 0.0;
    for (int j = 0; j < np; ++j) {
      const double k_hi = j < static_cast<int>(knots.size())
                              ? knots[j]
                              : std::numeric_limits<double>::infinity();
      A(row, base + 2 + j) = detail::psi_basis(u, k_lo, k_hi);
      k_lo = k_hi;
    }
    yv(row) = outcome(o);
    ++row;
  }

  const double inf = std::numeric_limits<double>::infinity();
  Eigen::VectorXd lower = Eigen::VectorXd::Constant(p, -inf);
  Eigen::VectorXd upper = Eigen::VectorXd::Constant(p, inf);
  for (int j = 0; j < pl; ++j) {
    lower(2 + j) = -cls.M;
    upper(2 + j) = cls.M;
  }
  for (int j = 0; j < pr; ++j) {
    lower(off_r + 2 + j) = -cls.M;
    upper(off_r + 2 + j) = cls.M;
  }
  if (opts.constrain_left) lower(2) = upper(2) = sign * cls.M;
  if (opts.constrain_right) lower(off_r + 2) = upper(off_r + 2) = sign * cls.M;

  const QpSolution sol = bounded_least_squares(A, yv, lower, upper);

  SplineFit fitted;
  fitted.M = cls.M;
  fitted.ssr = sol.ssr;
  fitted.kkt_residual = sol.kkt_residual;
  fitted.sign_used = sign > 0 ? CurvatureSign::plus : CurvatureSign::minus;
  fitted.left.intercept = sol.x(0);
  fitted.left.slope = sol.x(1);
  fitted.left.knots = knots_l;
  fitted.left.u_max = ul.back();
  for (int j = 0; j < pl; ++j) fitted.left.curvature.push_back(sol.x(2 + j));
  fitted.right.intercept = sol.x(off_r);
  fitted.right.slope = sol.x(off_r + 1);
  fitted.right.knots = knots_r;
  fitted.right.u_max = ur.back();
  for (int j = 0; j < pr; ++j) {
    fitted.right.curvature.push_back(sol.x(off_r + 2 + j));
  }
  for (double k : knots_r) fitted.knots_right.push_back(k);
  for (auto it = knots_l.rbegin(); it != knots_l.rend(); ++it) {
    fitted.knots_left.push_back(-*it);
  }
  for (int j : sol.active_lower) {
    const bool left = j < off_r;
    const int piece = left ? j - 2 : j - off_r - 2;
    if (piece >= 0) {
      fitted.active_constraints.push_back(
          {left ? Side::left : Side::right, piece, -1});
    }
  }
  for (int j : sol.active_upper) {
    const bool left = j < off_r;
    const int piece = left ? j - 2 : j - off_r - 2;
    if (piece >= 0) {
      fitted.active_constraints.push_back(
          {left ? Side::left : Side::right, piece, +1});
    }
  }
  return fitted;
}

// sign = best solves both equality signs and keeps the lower-SSR fit.
inline SplineFit extremal_spline_fit(const RdSample& sample,
                                     const OutcomeSelector& outcome,
                                     const SmoothnessClass& cls,
                                     int knots_per_side,
                                     CurvatureSign sign = CurvatureSign::best,
                                     const SplineOptions& opts = {}) {
  if (sign == CurvatureSign::plus) {
    return extremal_spline_fit_signed(sample, outcome, cls, knots_per_side,
                                      +1, opts);
  }
  if (sign == CurvatureSign::minus) {
    return extremal_spline_fit_signed(sample, outcome, cls, knots_per_side,
                                      -1, opts);
  }
  SplineFit a = extremal_spline_fit_signed(sample, outcome, cls,
                                           knots_per_side, +1, opts);
  SplineFit b = extremal_spline_fit_signed(sample, outcome, cls,
                                           knots_per_side, -1, opts);
  return a.ssr <= b.ssr ? a : b;
}

}  // namespace rdme
