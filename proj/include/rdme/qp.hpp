#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "rdme/errors.hpp"

namespace rdme {

// min ||y - A x||^2 subject to lower <= x <= upper, solved by a dense
// primal active-set method. An index with lower == upper is a fixed
// equality. Subproblems solve the free-variable normal equations with a
// Cholesky (LDLT) factorization plus one refinement step; columns are
// scaled to unit norm first, which keeps that accurate at the sizes this
// library produces (tens of variables).
struct QpOptions {
  int max_iterations = 1000;
  double feas_tol = 1e-10;
};

struct QpSolution {
  Eigen::VectorXd x;
  double ssr = 0.0;
  // Relative stationarity residual over free variables plus any bound
  // violation; complementary slackness holds by construction.
  double kkt_residual = 0.0;
  std::vector<int> active_lower;
  std::vector<int> active_upper;
  int iterations = 0;
};

inline QpSolution bounded_least_squares(const Eigen::MatrixXd& A,
                                        const Eigen::VectorXd& y,
                                        const Eigen::VectorXd& lower,
                                        const Eigen::VectorXd& upper,
                                        const QpOptions& opts = {}) {
  const int p = static_cast<int>(A.cols());
  if (lower.size() != p || upper.size() != p) {
    throw InvalidParameterError("bounded_least_squares: bound size mismatch");
  }
  for (int j = 0; j < p; ++j) {
    if (lower(j) > upper(j)) {
      throw InvalidParameterError(
          "bounded_least_squares: lower > upper at index " +
          std::to_string(j));
    }
  }

  // Column scaling: work in xs = d .* x.
  Eigen::VectorXd d(p);
  Eigen::MatrixXd As = A;
  for (int j = 0; j < p; ++j) {
    const double nrm = A.col(j).norm();
    d(j) = nrm > 0.0 ? nrm : 1.0;
    As.col(j) /= d(j);
  }
  Eigen::VectorXd lo(p), up(p);
  for (int j = 0; j < p; ++j) {
    lo(j) = lower(j) * d(j);
    up(j) = upper(j) * d(j);
  }

  const Eigen::MatrixXd G = As.transpose() * As;
  const Eigen::VectorXd b = As.transpose() * y;
  const double grad_scale = std::max(1.0, 2.0 * b.lpNorm<Eigen::Infinity>());

  // Status per variable: 0 free, -1 at lower, +1 at upper, 2 equality.
  std::vector<int> status(p, 0);
  Eigen::VectorXd x(p);
  for (int j = 0; j < p; ++j) {
    if (lo(j) == up(j)) {
      status[j] = 2;
      x(j) = lo(j);
    } else if (0.0 >= lo(j) && 0.0 <= up(j)) {
      x(j) = 0.0;
    } else {
      const bool at_lo = std::abs(lo(j)) <= std::abs(up(j));
      x(j) = at_lo ? lo(j) : up(j);
      status[j] = at_lo ? -1 : +1;
    }
  }

  auto solve_working = [&](const std::vector<int>& st) -> Eigen::VectorXd {
    std::vector<int> free_idx;
    for (int j = 0; j < p; ++j) {
      if (st[j] == 0) free_idx.push_back(j);
    }
    Eigen::VectorXd sol(p);
    for (int j = 0; j < p; ++j) {
      if (st[j] == 2) {
        sol(j) = lo(j);
      } else if (st[j] == -1) {
        sol(j) = lo(j);
      } else if (st[j] == +1) {
        sol(j) = up(j);
      } else {
        sol(j) = 0.0;
      }
    }
    const int f = static_cast<int>(free_idx.size());
    if (f == 0) return sol;
    Eigen::MatrixXd Gff(f, f);
    Eigen::VectorXd rhs(f);
    for (int a = 0; a < f; ++a) {
      for (int c = 0; c < f; ++c) Gff(a, c) = G(free_idx[a], free_idx[c]);
      double r = b(free_idx[a]);
      for (int j = 0; j < p; ++j) {
        if (st[j] != 0) r -= G(free_idx[a], j) * sol(j);
      }
      rhs(a) = r;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(Gff);
    Eigen::VectorXd xf = ldlt.solve(rhs);
    xf += ldlt.solve(rhs - Gff * xf);  // one refinement step
    for (int a = 0; a < f; ++a) sol(free_idx[a]) = xf(a);
    return sol;
  };

  int iter = 0;
  const double release_tol = 1e-9 * grad_scale;
  while (true) {
    if (++iter > opts.max_iterations) {
      throw SolverError("bounded_least_squares: no convergence after " +
                        std::to_string(opts.max_iterations) + " iterations");
    }
    const Eigen::VectorXd cand = solve_working(status);

    // Feasibility of the free variables.
    double alpha = 1.0;
    int blocking = -1, block_dir = 0;
    for (int j = 0; j < p; ++j) {
      if (status[j] != 0) continue;
      const double step = cand(j) - x(j);
      if (step > 0.0 && cand(j) > up(j) + opts.feas_tol) {
        const double a = (up(j) - x(j)) / step;
        if (a < alpha) {
          alpha = a;
          blocking = j;
          block_dir = +1;
        }
      } else if (step < 0.0 && cand(j) < lo(j) - opts.feas_tol) {
        const double a = (lo(j) - x(j)) / step;
        if (a < alpha) {
          alpha = a;
          blocking = j;
          block_dir = -1;
        }
      }
    }

    if (blocking >= 0) {
      for (int j = 0; j < p; ++j) {
        if (status[j] == 0) x(j) += alpha * (cand(j) - x(j));
      }
      status[blocking] = block_dir;
      x(blocking) = block_dir > 0 ? up(blocking) : lo(blocking);
      continue;
    }

    x = cand;
    // Multiplier check on active (non-equality) bounds.
    const Eigen::VectorXd grad = 2.0 * (G * x - b);
    int worst = -1;
    double worst_mu = -release_tol;
    for (int j = 0; j < p; ++j) {
      if (status[j] == -1) {
        const double mu = grad(j);  // must be >= 0 at a lower bound
        if (mu < worst_mu) {
          worst_mu = mu;
          worst = j;
        }
      } else if (status[j] == +1) {
        const double mu = -grad(j);  // must be >= 0 at an upper bound
        if (mu < worst_mu) {
          worst_mu = mu;
          worst = j;
        }
      }
    }
    if (worst < 0) break;
    status[worst] = 0;
  }

  QpSolution sol;
  sol.iterations = iter;
  sol.x = x.cwiseQuotient(d);
  const Eigen::VectorXd resid = y - As * x;
  sol.ssr = resid.squaredNorm();
  const Eigen::VectorXd grad = 2.0 * (G * x - b);
  double stat = 0.0, viol = 0.0;
  for (int j = 0; j < p; ++j) {
    if (status[j] == 0) {
      stat = std::max(stat, std::abs(grad(j)));
    } else if (status[j] == -1) {
      sol.active_lower.push_back(j);
    } else if (status[j] == +1) {
      sol.active_upper.push_back(j);
    }
    viol = std::max(viol, std::max(lo(j) - x(j), x(j) - up(j)));
  }
  sol.kkt_residual = stat / grad_scale + std::max(0.0, viol);
  return sol;
}

}  // namespace rdme
