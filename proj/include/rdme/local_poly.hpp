#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rdme/core_data.hpp"
#include "rdme/errors.hpp"
#include "rdme/math.hpp"

namespace rdme {

inline constexpr int kMaxPolyOrder = 4;

// Which outcome a local fit regresses on the basis.
struct OutcomeSelector {
  enum class Kind { y, t, y_minus_tau_t };
  Kind kind = Kind::y;
  double tau0 = 0.0;

  static OutcomeSelector outcome_y() { return {Kind::y, 0.0}; }
  static OutcomeSelector outcome_t() { return {Kind::t, 0.0}; }
  static OutcomeSelector shifted(double tau0) {
    return {Kind::y_minus_tau_t, tau0};
  }

  double operator()(const Observation& o) const {
    switch (kind) {
      case Kind::y:
        return o.y;
      case Kind::t:
        return o.t;
      case Kind::y_minus_tau_t:
      default:
        return o.y - tau0 * o.t;
    }
  }
};

// Interacted polynomial basis
// (1{x>=0}, 1{x>=0}x, ..., 1{x>=0}x^q, 1, x, ..., x^q).
inline std::vector<double> basis(double x, int q) {
  if (q < 0) throw InvalidParameterError("basis: q must be >= 0");
  std::vector<double> m(2 * (q + 1), 0.0);
  const bool right = x >= 0.0;
  double p = 1.0;
  for (int j = 0; j <= q; ++j) {
    if (right) m[j] = p;
    m[q + 1 + j] = p;
    p *= x;
  }
  return m;
}

// A linear-in-outcomes estimate: the jump coefficient together with the
// weight vector that produces it. Weights and residuals align with the
// in-window observations, i.e. sample.observations[window_offset + i].
struct LinearEstimate {
  double estimate = 0.0;
  std::vector<double> weights;
  std::vector<double> residuals;
  double se_ehw = 0.0;
  int n_eff = 0;
  double h = 0.0;
  int q = 1;
  std::size_t window_offset = 0;
  double small_sample_factor = 1.0;  // applied to se_ehw; 1 by default
};

namespace detail {

struct Window {
  std::size_t lo = 0, hi = 0;  // [lo, hi) in sample order
};

inline Window window_for(const RdSample& sample, double h) {
  const auto& obs = sample.observations;
  auto cmp = [](const Observation& o, double v) { return o.x < v; };
  const auto lo = std::lower_bound(obs.begin(), obs.end(), -h, cmp);
  auto hi = lo;
  while (hi != obs.end() && hi->x <= h) ++hi;
  return {static_cast<std::size_t>(lo - obs.begin()),
          static_cast<std::size_t>(hi - obs.begin())};
}

}  // namespace detail

// Local polynomial regression with uniform kernel on {|x| <= h}: the
// selected outcome is regressed on the interacted basis and the estimate
// is the coefficient on 1{x >= 0}. The design is solved by Householder QR
// (columns scaled by h for conditioning); the weight representation
// estimate = sum_i w_i * outcome_i is exact by construction.
inline LinearEstimate fit(const RdSample& sample,
                          const OutcomeSelector& outcome, double h, int q,
                          bool small_sample_adjust = false) {
  if (!(h > 0.0)) throw InvalidParameterError("fit: h must be > 0");
  if (q < 0 || q > kMaxPolyOrder) {
    throw InvalidParameterError("fit: q must be between 0 and " +
                                std::to_string(kMaxPolyOrder));
  }
  const int left_pts = support_count(sample, Side::left, h);
  const int right_pts = support_count(sample, Side::right, h);
  if (left_pts < q + 1 || right_pts < q + 1) {
    const bool left_bad = left_pts < q + 1;
    throw IdentificationError(
        "fit: need at least " + std::to_string(q + 1) +
        " support points on the " + (left_bad ? "left" : "right") +
        " side within h=" + std::to_string(h) + ", have " +
        std::to_string(left_bad ? left_pts : right_pts));
  }

  const auto win = detail::window_for(sample, h);
  const int n = static_cast<int>(win.hi - win.lo);
  const int p = 2 * (q + 1);

  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) {
    const auto& o = sample.observations[win.lo + i];
    const double u = o.x / h;
    const bool right = o.x >= 0.0;
    double pw = 1.0;
    for (int j = 0; j <= q; ++j) {
      X(i, j) = right ? pw : 0.0;
      X(i, q + 1 + j) = pw;
      pw *= u;
    }
    v(i) = outcome(o);
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < p) {
    throw IdentificationError("fit: design matrix is rank deficient");
  }
  const Eigen::VectorXd beta = qr.solve(v);

  // Weight vector w with estimate = w'v: solve (X'X) a = e1 through the
  // triangular factor, then w = X a. Column scaling leaves w unchanged
  // because the jump column has scale one.
  const Eigen::MatrixXd R =
      qr.matrixR().topLeftCorner(p, p).template triangularView<Eigen::Upper>();
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(p);
  e1(0) = 1.0;
  const Eigen::VectorXd c = qr.colsPermutation().transpose() * e1;
  const Eigen::VectorXd z =
      R.transpose().triangularView<Eigen::Lower>().solve(c);
  const Eigen::VectorXd a0 = R.triangularView<Eigen::Upper>().solve(z);
  const Eigen::VectorXd a = qr.colsPermutation() * a0;
  const Eigen::VectorXd w = X * a;

  LinearEstimate est;
  est.h = h;
  est.q = q;
  est.n_eff = n;
  est.window_offset = win.lo;
  est.weights.assign(w.data(), w.data() + n);
  const Eigen::VectorXd resid = v - X * beta;
  est.residuals.assign(resid.data(), resid.data() + n);

  std::vector<double> prod(n), meat(n);
  for (int i = 0; i < n; ++i) {
    prod[i] = est.weights[i] * v(i);
    meat[i] = est.weights[i] * est.weights[i] * est.residuals[i] *
              est.residuals[i];
  }
  est.estimate = pairwise_sum(prod);
  double var = pairwise_sum(meat);
  if (small_sample_adjust && n > p) {
    est.small_sample_factor = static_cast<double>(n) / (n - p);
    var *= est.small_sample_factor;
  }
  est.se_ehw = std::sqrt(std::max(0.0, var));
  return est;
}

// EHW covariance of two jump estimates sharing one design window.
struct JointCov {
  double var_y = 0.0;
  double cov_yt = 0.0;
  double var_t = 0.0;
};

inline JointCov ehw_joint_cov(const LinearEstimate& fit_y,
                              const LinearEstimate& fit_t) {
  if (fit_y.window_offset != fit_t.window_offset ||
      fit_y.n_eff != fit_t.n_eff || fit_y.h != fit_t.h ||
      fit_y.q != fit_t.q) {
    throw PairingError("ehw_joint_cov: fits use different windows");
  }
  const int n = fit_y.n_eff;
  for (int i = 0; i < n; ++i) {
    if (std::abs(fit_y.weights[i] - fit_t.weights[i]) >
        1e-12 * (1.0 + std::abs(fit_y.weights[i]))) {
      throw PairingError("ehw_joint_cov: weight vectors differ");
    }
  }
  std::vector<double> myy(n), myt(n), mtt(n);
  for (int i = 0; i < n; ++i) {
    const double w2 = fit_y.weights[i] * fit_y.weights[i];
    myy[i] = w2 * fit_y.residuals[i] * fit_y.residuals[i];
    myt[i] = w2 * fit_y.residuals[i] * fit_t.residuals[i];
    mtt[i] = w2 * fit_t.residuals[i] * fit_t.residuals[i];
  }
  JointCov cov;
  cov.var_y = pairwise_sum(myy) * fit_y.small_sample_factor;
  cov.cov_yt = pairwise_sum(myt) *
               std::sqrt(fit_y.small_sample_factor * fit_t.small_sample_factor);
  cov.var_t = pairwise_sum(mtt) * fit_t.small_sample_factor;
  return cov;
}

}  // namespace rdme
