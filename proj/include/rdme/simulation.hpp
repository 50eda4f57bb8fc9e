#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "rdme/bias_aware.hpp"
#include "rdme/core_data.hpp"
#include "rdme/errors.hpp"
#include "rdme/fuzzy.hpp"
#include "rdme/local_poly.hpp"
#include "rdme/math.hpp"
#include "rdme/rng.hpp"

namespace rdme {

// Polynomial c0 + c1 x + c2 x^2 + ... (lowest order first).
struct Poly {
  std::vector<double> coef;

  double operator()(double x) const {
    double v = 0.0;
    for (auto it = coef.rbegin(); it != coef.rend(); ++it) v = v * x + *it;
    return v;
  }
  bool empty() const { return coef.empty(); }
};

// Function of the latent running variable with separate branches left and
// right of zero.
struct PiecewiseFn {
  Poly left, right;

  double operator()(double x) const { return x < 0.0 ? left(x) : right(x); }

  static PiecewiseFn same(Poly p) { return {p, p}; }
};

// Measurement-error models; all induce an error with bounded support so
// doughnut trimming can restore correct classification.
struct ErrorModel {
  enum class Kind { round_down, berkson_uniform, classical_bounded };
  Kind kind = Kind::round_down;
  double granularity = 1.0;  // round_down: x = granularity * floor(x*/g)
  double width = 0.0;        // berkson_uniform: e ~ U[-width/2, width/2]
  double sd = 0.0;           // classical_bounded: e ~ N(0, sd^2)
  double truncation = 0.0;   //   truncated to [-truncation, truncation]

  static ErrorModel rounding(double g) {
    ErrorModel m;
    m.kind = Kind::round_down;
    m.granularity = g;
    return m;
  }
  static ErrorModel berkson(double width) {
    ErrorModel m;
    m.kind = Kind::berkson_uniform;
    m.width = width;
    return m;
  }
  static ErrorModel classical(double sd, double truncation) {
    ErrorModel m;
    m.kind = Kind::classical_bounded;
    m.sd = sd;
    m.truncation = truncation;
    return m;
  }

  double support_halfwidth() const {
    switch (kind) {
      case Kind::round_down:
        return granularity;
      case Kind::berkson_uniform:
        return 0.5 * width;
      case Kind::classical_bounded:
      default:
        return truncation;
    }
  }
};

// Bounded-support distribution for the latent running variable (for the
// Berkson model, of the observed one).
struct XStarDist {
  enum class Kind { uniform, poly_density };
  Kind kind = Kind::uniform;
  double lo = -1.0, hi = 1.0;
  Poly density;  // unnormalized, poly_density only; must be >= 0 on [lo,hi]

  static XStarDist uniform_on(double lo, double hi) {
    XStarDist d;
    d.lo = lo;
    d.hi = hi;
    return d;
  }

  // Unnormalized density value.
  double weight(double x) const {
    if (x < lo || x > hi) return 0.0;
    return kind == Kind::uniform ? 1.0 : std::max(0.0, density(x));
  }

  double sample(CounterRng& rng) const {
    if (kind == Kind::uniform) return rng.uniform(lo, hi);
    // Inverse-CDF by bisection on the integrated polynomial density.
    const double total = adaptive_simpson(
        [&](double u) { return weight(u); }, lo, hi, 1e-12);
    const double target = rng.next_double() * total;
    double a = lo, b = hi;
    for (int it = 0; it < 60; ++it) {
      const double m = 0.5 * (a + b);
      const double mass = adaptive_simpson(
          [&](double u) { return weight(u); }, lo, m, 1e-12);
      (mass < target ? a : b) = m;
    }
    return 0.5 * (a + b);
  }
};

struct Dgp {
  DesignKind design = DesignKind::sharp;
  PiecewiseFn g0_star;  // E[Y(0) | X* = x]
  PiecewiseFn g1_star;  // E[Y(1) | X* = x]
  Poly compliance;      // P(complier | X* = x), fuzzy designs only
  ErrorModel error = ErrorModel::berkson(0.0);
  double noise_sd = 0.0;
  XStarDist x_star = XStarDist::uniform_on(-1.0, 1.0);

  double tau_star_at(double x) const { return g1_star(x) - g0_star(x); }
  double compliance_at(double x) const {
    return std::clamp(compliance(x), 0.0, 1.0);
  }
};

struct GenRow {
  double y = 0.0;
  double t = 0.0;
  double x = 0.0;
  double x_star = 0.0;
  double e = 0.0;
};

struct GeneratedSample {
  std::vector<GenRow> rows;
};

namespace detail {

inline double draw_truncated_normal(CounterRng& rng, double sd, double trunc) {
  if (sd <= 0.0 || trunc <= 0.0) return 0.0;
  const double lo_p = norm_cdf(-trunc / sd);
  const double hi_p = norm_cdf(trunc / sd);
  const double u = lo_p + rng.next_double() * (hi_p - lo_p);
  return sd * norm_quantile(std::min(std::max(u, 1e-16), 1.0 - 1e-16));
}

}  // namespace detail

// Draws n rows; row i uses the substream (seed, substream * 2^32 + i), so
// replications with distinct substream values are independent and any
// (seed, substream, n) triple reproduces bit-for-bit.
inline GeneratedSample generate(const Dgp& dgp, int n, std::uint64_t seed,
                                std::uint64_t substream = 0) {
  if (n < 1) throw InvalidParameterError("generate: n must be >= 1");
  if (dgp.design == DesignKind::fuzzy && dgp.compliance.empty()) {
    throw ConfigError("generate: fuzzy design needs a compliance function");
  }
  if (dgp.noise_sd < 0.0) throw ConfigError("generate: noise_sd < 0");
  GeneratedSample out;
  out.rows.resize(n);
  for (int i = 0; i < n; ++i) {
    CounterRng rng(seed, (substream << 32) + static_cast<std::uint64_t>(i));
    GenRow& r = out.rows[i];
    switch (dgp.error.kind) {
      case ErrorModel::Kind::round_down: {
        r.x_star = dgp.x_star.sample(rng);
        r.x = round_down(r.x_star, dgp.error.granularity);
        r.e = r.x_star - r.x;
        break;
      }
      case ErrorModel::Kind::berkson_uniform: {
        r.x = dgp.x_star.sample(rng);
        r.e = dgp.error.width > 0.0
                  ? rng.uniform(-0.5 * dgp.error.width, 0.5 * dgp.error.width)
                  : 0.0;
        r.x_star = r.x + r.e;
        break;
      }
      case ErrorModel::Kind::classical_bounded: {
        r.x_star = dgp.x_star.sample(rng);
        r.e = detail::draw_truncated_normal(rng, dgp.error.sd,
                                            dgp.error.truncation);
        r.x = r.x_star - r.e;
        break;
      }
    }
    const bool z = r.x_star >= 0.0;
    if (dgp.design == DesignKind::sharp) {
      r.t = z ? 1.0 : 0.0;
    } else {
      // One-sided compliance: T(0) = 0, T(1) ~ Bernoulli(P(C | X*)).
      r.t = z && rng.bernoulli(dgp.compliance_at(r.x_star)) ? 1.0 : 0.0;
    }
    const double mean = r.t == 1.0 ? dgp.g1_star(r.x_star)
                                   : dgp.g0_star(r.x_star);
    r.y = mean + (dgp.noise_sd > 0.0 ? dgp.noise_sd * rng.normal() : 0.0);
  }
  return out;
}

inline RdSample to_rd_sample(const GeneratedSample& gen, DesignKind design) {
  std::vector<Observation> obs;
  obs.reserve(gen.rows.size());
  for (const auto& r : gen.rows) obs.push_back({r.y, r.t, r.x});
  return make_sample(std::move(obs), design);
}

// ---------------------------------------------------------------------------
// Exact estimands.
// ---------------------------------------------------------------------------

struct Estimand {
  double tau = 0.0;       // conditional on the observed running variable = 0
  double tau_star = 0.0;  // conditional on the latent running variable = 0
  // Weights required normalization by the running-variable density.
  bool numerically_normalized = false;
};

namespace detail {

struct ErrorLaw {
  double lo = 0.0, hi = 0.0;
  std::function<double(double)> weight;  // unnormalized density of e | X=0
  bool normalized_numerically = false;
};

inline ErrorLaw error_law_at_cutoff(const Dgp& dgp) {
  ErrorLaw law;
  switch (dgp.error.kind) {
    case ErrorModel::Kind::round_down: {
      // X = 0 means X* = e in [0, granularity); weights follow the
      // latent density over the cell.
      law.lo = 0.0;
      law.hi = dgp.error.granularity;
      law.weight = [d = dgp.x_star](double e) { return d.weight(e); };
      law.normalized_numerically =
          dgp.x_star.kind != XStarDist::Kind::uniform;
      break;
    }
    case ErrorModel::Kind::berkson_uniform: {
      law.lo = -0.5 * dgp.error.width;
      law.hi = 0.5 * dgp.error.width;
      law.weight = [](double) { return 1.0; };
      break;
    }
    case ErrorModel::Kind::classical_bounded: {
      if (dgp.error.sd <= 0.0 || dgp.error.truncation <= 0.0) {
        law.lo = law.hi = 0.0;  // degenerate: e = 0
        law.weight = [](double) { return 1.0; };
        break;
      }
      law.lo = -dgp.error.truncation;
      law.hi = dgp.error.truncation;
      const double sd = dgp.error.sd;
      law.weight = [d = dgp.x_star, sd](double e) {
        return norm_pdf(e / sd) * d.weight(e);
      };
      law.normalized_numerically = true;
      break;
    }
  }
  return law;
}

// Integral of f(e) w(e) over the law's support, split at 0 because the
// integrand may have a kink there.
inline double integrate_weighted(const ErrorLaw& law,
                                 const std::function<double(double)>& f) {
  auto g = [&](double e) { return f(e) * law.weight(e); };
  if (law.lo >= 0.0 || law.hi <= 0.0) {
    return adaptive_simpson(g, law.lo, law.hi, 1e-11);
  }
  return adaptive_simpson(g, law.lo, 0.0, 1e-11) +
         adaptive_simpson(g, 0.0, law.hi, 1e-11);
}

}  // namespace detail

// E[Y(1) - Y(0) | X = 0] for sharp designs: the error-law-weighted average
// of tau*(e) over the conditional error distribution at the cutoff. The
// built-in error models all admit quadrature; degenerate error (width or
// support zero) reduces to tau*(0).
inline Estimand true_tau(const Dgp& dgp) {
  Estimand est;
  est.tau_star = dgp.tau_star_at(0.0);
  const auto law = detail::error_law_at_cutoff(dgp);
  if (law.hi <= law.lo) {
    est.tau = est.tau_star;
    return est;
  }
  const double mass =
      detail::integrate_weighted(law, [](double) { return 1.0; });
  if (!(mass > 0.0)) {
    throw NumericError("true_tau: conditional error law has zero mass");
  }
  const double num = detail::integrate_weighted(
      law, [&](double e) { return dgp.tau_star_at(e); });
  est.tau = num / mass;
  est.numerically_normalized = law.normalized_numerically;
  return est;
}

struct FuzzyEstimand {
  double tau_f = 0.0;       // complier ATE at observed running variable = 0
  double tau_f_star = 0.0;  // complier ATE at latent running variable = 0
  bool numerically_normalized = false;
};

// Compliance-weighted version for fuzzy designs. Potential outcomes are
// generated independently of compliance given X*, so the complier ATE at
// X* = e equals tau*(e).
inline FuzzyEstimand true_tau_fuzzy(const Dgp& dgp) {
  if (dgp.compliance.empty()) {
    throw ConfigError("true_tau_fuzzy: dgp has no compliance function");
  }
  FuzzyEstimand est;
  est.tau_f_star = dgp.tau_star_at(0.0);
  const auto law = detail::error_law_at_cutoff(dgp);
  if (law.hi <= law.lo) {
    if (dgp.compliance_at(0.0) <= 0.0) {
      throw IdentificationError(
          "true_tau_fuzzy: zero compliance mass at the cutoff, the "
          "assignment indicator is irrelevant");
    }
    est.tau_f = est.tau_f_star;
    return est;
  }
  const double cmass = detail::integrate_weighted(
      law, [&](double e) { return dgp.compliance_at(e); });
  if (!(cmass > 1e-14)) {
    throw IdentificationError(
        "true_tau_fuzzy: zero compliance mass at the cutoff, the "
        "assignment indicator is irrelevant");
  }
  const double num = detail::integrate_weighted(law, [&](double e) {
    return dgp.tau_star_at(e) * dgp.compliance_at(e);
  });
  est.tau_f = num / cmass;
  est.numerically_normalized = law.normalized_numerically;
  return est;
}

// ---------------------------------------------------------------------------
// Coverage experiments.
// ---------------------------------------------------------------------------

struct SimMethod {
  enum class Kind { bias_aware, ols } kind = Kind::bias_aware;
  bool auto_h = true;
  BandwidthCriterion criterion = BandwidthCriterion::worst_case_mse;
  double h = 0.0;     // used when auto_h is false
  double M = 0.0;     // smoothness bound for bias-aware inference
  double M_t = 0.0;   // first-stage bound, fuzzy designs
  double alpha = 0.05;
  int n = 500;
  double doughnut_s = 0.0;
};

struct RepRow {
  int rep = 0;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool covered = false;
  bool failed = false;
};

struct CoverageResult {
  double coverage = 0.0;    // share of successful reps covering the truth
  double avg_length = 0.0;
  double avg_bias = 0.0;
  int failures = 0;
  int reps = 0;
  double true_tau = 0.0;
  double true_tau_star = 0.0;
  std::vector<RepRow> rows;
};

// Runs reps independent draws of the DGP, applies the method, and checks
// CI coverage of the exact estimand. Replication r uses substream r + 1,
// so results are invariant to execution order.
inline CoverageResult coverage_experiment(const Dgp& dgp,
                                          const SimMethod& method, int reps,
                                          std::uint64_t seed) {
  if (reps < 100) {
    throw InvalidParameterError("coverage_experiment: reps must be >= 100");
  }
  CoverageResult out;
  out.reps = reps;
  double truth = 0.0;
  if (dgp.design == DesignKind::sharp) {
    const Estimand est = true_tau(dgp);
    truth = est.tau;
    out.true_tau = est.tau;
    out.true_tau_star = est.tau_star;
  } else {
    const FuzzyEstimand est = true_tau_fuzzy(dgp);
    truth = est.tau_f;
    out.true_tau = est.tau_f;
    out.true_tau_star = est.tau_f_star;
  }

  const double z = norm_quantile(1.0 - method.alpha / 2.0);
  std::vector<double> lengths, biases, covered;
  out.rows.reserve(reps);
  for (int r = 0; r < reps; ++r) {
    RepRow row;
    row.rep = r;
    try {
      const GeneratedSample gen =
          generate(dgp, method.n, seed, static_cast<std::uint64_t>(r) + 1);
      RdSample sample = to_rd_sample(gen, dgp.design);
      if (method.doughnut_s > 0.0) {
        sample = doughnut_trim(sample, method.doughnut_s).sample;
      }
      if (dgp.design == DesignKind::sharp) {
        const SmoothnessClass cls{method.M};
        const double h =
            method.auto_h
                ? optimize_bandwidth(sample, cls, method.alpha,
                                     method.criterion,
                                     OutcomeSelector::outcome_y())
                : method.h;
        const LinearEstimate fit_y =
            fit(sample, OutcomeSelector::outcome_y(), h, 1);
        row.estimate = fit_y.estimate;
        if (method.kind == SimMethod::Kind::bias_aware) {
          const BiasAwareCI ci =
              bias_aware_ci(fit_y, sample, cls, method.alpha);
          row.lower = ci.lower;
          row.upper = ci.upper;
        } else {
          row.lower = fit_y.estimate - z * fit_y.se_ehw;
          row.upper = fit_y.estimate + z * fit_y.se_ehw;
        }
      } else {
        const SmoothnessClass My{method.M}, Mt{method.M_t};
        const HPolicy policy = method.auto_h
                                   ? HPolicy::reoptimize()
                                   : HPolicy::fixed(method.h);
        const double h_plug =
            method.auto_h
                ? optimize_bandwidth(sample, My, method.alpha,
                                     BandwidthCriterion::ci_length,
                                     OutcomeSelector::outcome_y())
                : method.h;
        const FuzzyEstimate fe = fuzzy_estimate(sample, h_plug, 1);
        row.estimate = fe.ratio;
        if (method.kind == SimMethod::Kind::bias_aware) {
          const ArConfidenceSet set =
              ar_confidence_set(sample, My, Mt, method.alpha, policy);
          row.covered = set.contains(truth);
          double lo = std::numeric_limits<double>::infinity();
          double hi = -lo;
          for (const auto& iv : set.intervals) {
            lo = std::min(lo, iv.first);
            hi = std::max(hi, iv.second);
          }
          row.lower = lo;
          row.upper = hi;
          biases.push_back(row.estimate - truth);
          lengths.push_back(hi - lo);
          covered.push_back(row.covered ? 1.0 : 0.0);
          out.rows.push_back(row);
          continue;
        }
        row.lower = fe.ratio - z * fe.se_delta;
        row.upper = fe.ratio + z * fe.se_delta;
      }
      row.covered = row.lower <= truth && truth <= row.upper;
      biases.push_back(row.estimate - truth);
      lengths.push_back(row.upper - row.lower);
      covered.push_back(row.covered ? 1.0 : 0.0);
    } catch (const Error&) {
      row.failed = true;
      ++out.failures;
    }
    out.rows.push_back(row);
  }
  out.coverage = covered.empty() ? 0.0 : pairwise_mean(covered);
  out.avg_length = lengths.empty() ? 0.0 : pairwise_mean(lengths);
  out.avg_bias = biases.empty() ? 0.0 : pairwise_mean(biases);
  return out;
}

// ---------------------------------------------------------------------------
// Smoothing-lemma check: the conditional mean g(x) = E[h(X + e) | X = x]
// computed by quadrature, with the largest second central difference as a
// curvature estimate.
// ---------------------------------------------------------------------------

struct SmoothingCheckSpec {
  enum class HKind { abs_value, poly } h_kind = HKind::abs_value;
  Poly h_poly;
  // Base density of e given X = x: uniform on [lo, hi], optionally shifted
  // by `shift` when x >= shift_threshold (a non-smooth-in-x error law, the
  // failure mode for which no smoothing bound exists).
  double density_lo = -1.0;
  double density_hi = 1.0;
  bool shifted = false;
  double shift_threshold = 0.0;
  double shift = 0.0;
  double x_lo = -0.5;
  double x_hi = 0.5;
};

struct SmoothingCheckResult {
  double bound = 0.0;  // sup over grid of |second central difference|/step^2
  int grid_points = 0;
};

inline SmoothingCheckResult smoothing_check(const SmoothingCheckSpec& spec,
                                            double grid_step) {
  if (!(grid_step > 0.0)) {
    throw InvalidParameterError("smoothing_check: grid_step must be > 0");
  }
  if (!(spec.density_hi > spec.density_lo)) {
    throw InvalidParameterError("smoothing_check: empty density support");
  }
  auto h = [&](double u) {
    return spec.h_kind == SmoothingCheckSpec::HKind::abs_value
               ? std::abs(u)
               : spec.h_poly(u);
  };
  auto g = [&](double x) {
    double lo = spec.density_lo, hi = spec.density_hi;
    if (spec.shifted && x >= spec.shift_threshold) {
      lo += spec.shift;
      hi += spec.shift;
    }
    const double inv_w = 1.0 / (hi - lo);
    auto integrand = [&](double e) { return h(x + e) * inv_w; };
    // Split at the kink of |x + e|.
    const double kink = -x;
    if (spec.h_kind == SmoothingCheckSpec::HKind::abs_value && kink > lo &&
        kink < hi) {
      return adaptive_simpson(integrand, lo, kink, 1e-11) +
             adaptive_simpson(integrand, kink, hi, 1e-11);
    }
    return adaptive_simpson(integrand, lo, hi, 1e-11);
  };

  const int m =
      static_cast<int>(std::floor((spec.x_hi - spec.x_lo) / grid_step));
  if (m < 2) {
    throw InvalidParameterError(
        "smoothing_check: grid has fewer than 3 points");
  }
  std::vector<double> gv(m + 1);
  for (int i = 0; i <= m; ++i) gv[i] = g(spec.x_lo + i * grid_step);
  SmoothingCheckResult res;
  res.grid_points = m + 1;
  for (int i = 1; i < m; ++i) {
    const double dd =
        (gv[i + 1] - 2.0 * gv[i] + gv[i - 1]) / (grid_step * grid_step);
    res.bound = std::max(res.bound, std::abs(dd));
  }
  return res;
}

}  // namespace rdme
