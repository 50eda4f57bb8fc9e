#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "rdme/errors.hpp"

namespace rdme {

inline constexpr double kSqrt2 = 1.4142135623730951;

// Standard normal density.
inline double norm_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014327;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

// Standard normal CDF via erfc; absolute error below 1e-15 over the
// whole real line, well inside the 1e-12 contract.
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

// Inverse of norm_cdf. Bisection brings the bracket down to ~1e-2, a few
// safeguarded Newton steps finish to ~1e-12 (quantile scale).
inline double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw InvalidParameterError("norm_quantile: p must lie in (0,1)");
  }
  double lo = -40.0, hi = 40.0;
  while (hi - lo > 1e-2) {
    const double mid = 0.5 * (lo + hi);
    (norm_cdf(mid) < p ? lo : hi) = mid;
  }
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 60; ++it) {
    const double f = norm_cdf(x) - p;
    (f < 0.0 ? lo : hi) = x;
    const double d = norm_pdf(x);
    double step = d > 0.0 ? f / d : 0.0;
    double next = x - step;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) < 1e-13 * std::max(1.0, std::abs(x))) return next;
    x = next;
  }
  return x;
}

namespace detail {

inline double simpson_panel(const std::function<double(double)>& f, double a,
                            double fa, double b, double fb, double m,
                            double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive_simpson_rec(const std::function<double(double)>& f,
                                   double a, double fa, double b, double fb,
                                   double m, double fm, double whole,
                                   double tol, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson_panel(f, a, fa, m, fm, lm, flm);
  const double right = simpson_panel(f, m, fm, b, fb, rm, frm);
  const double delta = left + right - whole;
  if (depth <= 0) {
    // Kinks in the integrand bottom out here; the Richardson term still
    // sharpens the estimate.
    return left + right + delta / 15.0;
  }
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson_rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol,
                              depth - 1) +
         adaptive_simpson_rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol,
                              depth - 1);
}

}  // namespace detail

// Adaptive Simpson quadrature of f over [a, b].
inline double adaptive_simpson(const std::function<double(double)>& f,
                               double a, double b, double tol = 1e-10,
                               int max_depth = 48) {
  if (!(b >= a)) throw InvalidParameterError("adaptive_simpson: b < a");
  if (a == b) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  const double whole = detail::simpson_panel(f, a, fa, b, fb, m, fm);
  return detail::adaptive_simpson_rec(f, a, fa, b, fb, m, fm, whole, tol,
                                      max_depth);
}

// Order-independent pairwise summation; used wherever summary statistics
// must not depend on accumulation order.
inline double pairwise_sum(const std::vector<double>& v, std::size_t lo,
                           std::size_t hi) {
  const std::size_t n = hi - lo;
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += v[i];
    return s;
  }
  const std::size_t mid = lo + n / 2;
  return pairwise_sum(v, lo, mid) + pairwise_sum(v, mid, hi);
}

inline double pairwise_sum(const std::vector<double>& v) {
  return pairwise_sum(v, 0, v.size());
}

inline double pairwise_mean(const std::vector<double>& v) {
  return v.empty() ? std::numeric_limits<double>::quiet_NaN()
                   : pairwise_sum(v) / static_cast<double>(v.size());
}

}  // namespace rdme
