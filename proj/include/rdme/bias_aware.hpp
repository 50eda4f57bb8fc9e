#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "rdme/core_data.hpp"
#include "rdme/errors.hpp"
#include "rdme/local_poly.hpp"
#include "rdme/math.hpp"

namespace rdme {

// Bound M on the second derivative of the conditional mean on either side
// of the cutoff (the smoothness class parameter).
struct SmoothnessClass {
  double M = 0.0;
};

inline void validate(const SmoothnessClass& cls, const char* where) {
  if (!(cls.M >= 0.0) || !std::isfinite(cls.M)) {
    throw InvalidParameterError(std::string(where) +
                                ": smoothness bound must be finite and >= 0");
  }
}

// Supremum of the conditional bias of a local linear jump estimate over
// the class with |g''| <= M: attained at Mx^2(1{x<0} - 1{x>=0})/2, so it
// equals |sum_i w_i * that function(x_i)|.
inline double worst_case_bias(const LinearEstimate& est,
                              const RdSample& sample,
                              const SmoothnessClass& cls) {
  validate(cls, "worst_case_bias");
  if (est.q != 1) {
    throw UnsupportedConfigError(
        "worst_case_bias: bias formula requires a local linear fit (q=1)");
  }
  std::vector<double> terms(est.n_eff);
  for (int i = 0; i < est.n_eff; ++i) {
    const double x = sample.observations[est.window_offset + i].x;
    const double extremal = 0.5 * cls.M * x * x * (x < 0.0 ? 1.0 : -1.0);
    terms[i] = est.weights[i] * extremal;
  }
  return std::abs(pairwise_sum(terms));
}

// 1-alpha quantile of |N(t,1)|: the c solving
// Phi(c - t) - Phi(-c - t) = 1 - alpha. Safeguarded Newton inside the
// bracket [z_{1-alpha/2}, z_{1-alpha/2} + t]; absolute tolerance 1e-8.
inline double folded_normal_cv(double t, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw InvalidParameterError("folded_normal_cv: alpha must be in (0,1)");
  }
  if (!std::isfinite(t)) {
    throw InvalidParameterError("folded_normal_cv: t must be finite");
  }
  t = std::abs(t);
  const double target = 1.0 - alpha;
  const double z = norm_quantile(1.0 - alpha / 2.0);
  double lo = z, hi = z + t;
  if (hi - lo < 1e-14) return z;
  auto F = [&](double c) { return norm_cdf(c - t) - norm_cdf(-c - t); };
  double c = 0.5 * (lo + hi);
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double f = F(c) - target;
    (f < 0.0 ? lo : hi) = c;
    const double d = norm_pdf(c - t) + norm_pdf(c + t);
    double next = d > 0.0 ? c - f / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    c = next;
  }
  return c;
}

// Bias-aware confidence interval: estimate +- cv(B/se) * se. When the
// variance estimate degenerates to zero (noiseless fixtures), the interval
// falls back to estimate +- B and degenerate_variance is set; the
// folded-normal ratio is undefined in that case and cv is reported as NaN.
struct BiasAwareCI {
  double estimate = 0.0;
  double se = 0.0;
  double bias_bound = 0.0;
  double cv = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double h = 0.0;
  double M = 0.0;
  bool degenerate_variance = false;
};

inline BiasAwareCI bias_aware_ci(const LinearEstimate& est,
                                 const RdSample& sample,
                                 const SmoothnessClass& cls, double alpha) {
  BiasAwareCI ci;
  ci.estimate = est.estimate;
  ci.se = est.se_ehw;
  ci.bias_bound = worst_case_bias(est, sample, cls);
  ci.h = est.h;
  ci.M = cls.M;
  if (ci.se > 0.0) {
    ci.cv = folded_normal_cv(ci.bias_bound / ci.se, alpha);
    ci.lower = ci.estimate - ci.cv * ci.se;
    ci.upper = ci.estimate + ci.cv * ci.se;
  } else {
    ci.degenerate_variance = true;
    ci.cv = std::numeric_limits<double>::quiet_NaN();
    ci.lower = ci.estimate - ci.bias_bound;
    ci.upper = ci.estimate + ci.bias_bound;
  }
  return ci;
}

enum class BandwidthCriterion { worst_case_mse, ci_length };

// Candidate bandwidths: the distinct |x| support values plus midpoints
// between consecutive ones. The estimator only changes when the window
// crosses a support point, so this grid is exhaustive.
inline std::vector<double> bandwidth_candidates(const RdSample& sample) {
  std::vector<double> vals;
  vals.reserve(sample.support.size());
  for (const auto& sp : sample.support) {
    const double a = std::abs(sp.x);
    if (a > 0.0) vals.push_back(a);
  }
  std::sort(vals.begin(), vals.end());
  vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
  std::vector<double> cand;
  cand.reserve(2 * vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    cand.push_back(vals[i]);
    if (i + 1 < vals.size()) cand.push_back(0.5 * (vals[i] + vals[i + 1]));
  }
  std::sort(cand.begin(), cand.end());
  return cand;
}

namespace detail {

inline double bandwidth_objective(const LinearEstimate& est,
                                  const RdSample& sample,
                                  const SmoothnessClass& cls, double alpha,
                                  BandwidthCriterion criterion) {
  const double bias = worst_case_bias(est, sample, cls);
  const double se = est.se_ehw;
  if (criterion == BandwidthCriterion::worst_case_mse) {
    return bias * bias + se * se;
  }
  if (se > 0.0) return 2.0 * folded_normal_cv(bias / se, alpha) * se;
  return 2.0 * bias;  // limit of the CI length as se -> 0
}

}  // namespace detail

// Picks the candidate h minimizing the worst-case MSE B^2 + se^2 or the
// CI length 2 cv(B/se) se; exact ties go to the larger bandwidth.
inline double optimize_bandwidth(const RdSample& sample,
                                 const SmoothnessClass& cls, double alpha,
                                 BandwidthCriterion criterion,
                                 const OutcomeSelector& outcome) {
  validate(cls, "optimize_bandwidth");
  double best_h = 0.0;
  double best_obj = std::numeric_limits<double>::infinity();
  bool any = false;
  for (double h : bandwidth_candidates(sample)) {
    LinearEstimate est;
    try {
      est = fit(sample, outcome, h, 1);
    } catch (const IdentificationError&) {
      continue;
    }
    const double obj =
        detail::bandwidth_objective(est, sample, cls, alpha, criterion);
    if (!any || obj <= best_obj) {
      best_obj = obj;
      best_h = h;
      any = true;
    }
  }
  if (!any) {
    throw IdentificationError(
        "optimize_bandwidth: no candidate bandwidth passes the support "
        "check");
  }
  return best_h;
}

}  // namespace rdme
