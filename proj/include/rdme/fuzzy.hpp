#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "rdme/bias_aware.hpp"
#include "rdme/core_data.hpp"
#include "rdme/errors.hpp"
#include "rdme/local_poly.hpp"

namespace rdme {

// Ratio of the reduced-form to the first-stage jump, with a delta-method
// standard error from the joint EHW covariance.
struct FuzzyEstimate {
  double ratio = 0.0;
  double se_delta = 0.0;
  LinearEstimate fit_y;
  LinearEstimate fit_t;
};

inline FuzzyEstimate fuzzy_estimate(const RdSample& sample, double h, int q) {
  FuzzyEstimate fe;
  fe.fit_y = fit(sample, OutcomeSelector::outcome_y(), h, q);
  fe.fit_t = fit(sample, OutcomeSelector::outcome_t(), h, q);
  const double ty = fe.fit_y.estimate;
  const double tt = fe.fit_t.estimate;
  if (tt == 0.0) {
    throw WeakFirstStageError(
        "fuzzy_estimate: first-stage jump is zero, ratio undefined");
  }
  fe.ratio = ty / tt;
  const JointCov cov = ehw_joint_cov(fe.fit_y, fe.fit_t);
  const double var = cov.var_y / (tt * tt) -
                     2.0 * ty * cov.cov_yt / (tt * tt * tt) +
                     ty * ty * cov.var_t / (tt * tt * tt * tt);
  fe.se_delta = std::sqrt(std::max(0.0, var));
  return fe;
}

// Bandwidth policy for the test-inversion confidence set: either a fixed
// window, or re-optimizing the bandwidth (CI-length criterion) for each
// hypothesized tau0 with the combined smoothness bound.
struct HPolicy {
  enum class Kind { fixed, reoptimize };
  Kind kind = Kind::reoptimize;
  double h = 0.0;

  static HPolicy fixed(double h) { return {Kind::fixed, h}; }
  static HPolicy reoptimize() { return {Kind::reoptimize, 0.0}; }
};

// Tests tau_F = tau0 by fitting the shifted outcome y - tau0 * t and
// checking whether 0 lies in its bias-aware CI with bound My + |tau0| Mt.
inline bool ar_test(const RdSample& sample, double tau0,
                    const SmoothnessClass& My, const SmoothnessClass& Mt,
                    double alpha, const HPolicy& policy) {
  validate(My, "ar_test");
  validate(Mt, "ar_test");
  const SmoothnessClass combined{My.M + std::abs(tau0) * Mt.M};
  const OutcomeSelector outcome = OutcomeSelector::shifted(tau0);
  const double h =
      policy.kind == HPolicy::Kind::fixed
          ? policy.h
          : optimize_bandwidth(sample, combined, alpha,
                               BandwidthCriterion::ci_length, outcome);
  const LinearEstimate est = fit(sample, outcome, h, 1);
  const BiasAwareCI ci = bias_aware_ci(est, sample, combined, alpha);
  return ci.lower <= 0.0 && 0.0 <= ci.upper;
}

enum class UnboundedFlag { none, left, right, both };

// Grid-inversion confidence set: disjoint closed intervals, open-ended on
// a side where acceptance persisted to the scan boundary.
struct ArConfidenceSet {
  std::vector<std::pair<double, double>> intervals;
  UnboundedFlag unbounded = UnboundedFlag::none;
  double grid_resolution = 0.0;
  double alpha = 0.0;

  bool contains(double tau) const {
    for (const auto& iv : intervals) {
      if (iv.first <= tau && tau <= iv.second) return true;
    }
    return false;
  }
  bool empty() const { return intervals.empty(); }
};

// Grid geometry: scan center (defaults to the plug-in ratio), spacing
// (default se_delta/10) and half-width (default 50 * se_delta).
struct ArGridConfig {
  std::optional<double> center;
  std::optional<double> step;
  std::optional<double> half_width;
};

inline ArConfidenceSet ar_confidence_set(const RdSample& sample,
                                         const SmoothnessClass& My,
                                         const SmoothnessClass& Mt,
                                         double alpha, const HPolicy& policy,
                                         const ArGridConfig& grid = {}) {
  double center, step, half_width;
  if (grid.center && grid.step && grid.half_width) {
    center = *grid.center;
    step = *grid.step;
    half_width = *grid.half_width;
  } else {
    const double h_plug =
        policy.kind == HPolicy::Kind::fixed
            ? policy.h
            : optimize_bandwidth(sample, My, alpha,
                                 BandwidthCriterion::ci_length,
                                 OutcomeSelector::outcome_y());
    const FuzzyEstimate plug = fuzzy_estimate(sample, h_plug, 1);
    center = grid.center.value_or(plug.ratio);
    step = grid.step.value_or(plug.se_delta > 0.0
                                  ? plug.se_delta / 10.0
                                  : (std::abs(plug.ratio) + 1.0) / 1000.0);
    half_width = grid.half_width.value_or(plug.se_delta > 0.0
                                              ? 50.0 * plug.se_delta
                                              : 500.0 * step);
  }
  if (!(step > 0.0)) {
    throw InvalidParameterError("ar_confidence_set: grid step must be > 0");
  }

  const int K = static_cast<int>(std::ceil(half_width / step));
  std::vector<bool> accepted(2 * K + 1, false);
  for (int k = -K; k <= K; ++k) {
    const double tau0 = center + k * step;
    bool ok = false;
    try {
      ok = ar_test(sample, tau0, My, Mt, alpha, policy);
    } catch (const IdentificationError&) {
      ok = false;
    }
    accepted[k + K] = ok;
  }

  ArConfidenceSet set;
  set.grid_resolution = step;
  set.alpha = alpha;
  const double inf = std::numeric_limits<double>::infinity();
  int i = 0;
  const int n = 2 * K + 1;
  bool open_left = false, open_right = false;
  while (i < n) {
    if (!accepted[i]) {
      ++i;
      continue;
    }
    int j = i;
    while (j + 1 < n && accepted[j + 1]) ++j;
    double lo = center + (i - K) * step - 0.5 * step;
    double hi = center + (j - K) * step + 0.5 * step;
    if (i == 0) {
      lo = -inf;
      open_left = true;
    }
    if (j == n - 1) {
      hi = inf;
      open_right = true;
    }
    set.intervals.emplace_back(lo, hi);
    i = j + 1;
  }
  if (open_left && open_right) {
    set.unbounded = UnboundedFlag::both;
  } else if (open_left) {
    set.unbounded = UnboundedFlag::left;
  } else if (open_right) {
    set.unbounded = UnboundedFlag::right;
  }
  return set;
}

}  // namespace rdme
