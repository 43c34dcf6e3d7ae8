#pragma once

#include <Eigen/Dense>
#include <vector>

#include "kernel.hpp"

namespace confbal {

using Eigen::VectorXi;

/// Penalized kernel-imbalance minimization: find w minimizing
///   mmd2(treated vs full) + mmd2(control vs full) + (lambda/2) |w|^2
/// subject to the per-group sum constraints sum_{i in S_a} w_i = n_a and,
/// when nonneg is set, w >= 0.
struct BalancingProblem {
  GramMatrix gram;
  VectorXi A;
  double lambda = 0.0;
  bool nonneg = true;

  void validate() const;
};

struct SolveOptions {
  int max_iter = 50000;
  double tol = 1e-10;  // relative objective decrease
  double initial_step = 1.0;
};

struct WeightSolution {
  VectorXd w;
  double objective = 0.0;
  double constraint_residual = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;             // objective per iteration (0 = start)
  std::vector<double> trace_constraint;  // max group-sum residual per iteration
};

/// Squared maximum mean discrepancy between the w-weighted group `a` and the
/// full sample, expanded as a quadratic in w:
///   -2/(n_a n) sum_{i in S_a, j} w_i K_ij
///   + 1/n_a^2  sum_{i,j in S_a} w_i w_j K_ij
///   + 1/n^2    sum_{i,j} K_ij.
double mmd_squared(const GramMatrix& gram, const VectorXd& w, int a,
                   const VectorXi& A);

double objective_value(const BalancingProblem& problem, const VectorXd& w);

/// Euclidean projection of v onto {u >= 0, sum u = total} by sort and
/// threshold, with a final rescale so the sum is exact.
VectorXd project_group_simplex(const VectorXd& v, double total);

/// Projected gradient descent from the feasible start w = 1. Each iteration
/// projects the two group sub-vectors onto their constraint sets and picks
/// the step by backtracking line search; stops when the relative objective
/// decrease drops below opts.tol or at opts.max_iter (converged = false).
WeightSolution solve_weights(const BalancingProblem& problem,
                             const SolveOptions& opts = {},
                             bool record_trace = false);

/// Direct solve of the equality-constrained problem (nonneg off) via the
/// dense (n+2) x (n+2) KKT system; requires lambda > 0. Test oracle for
/// solve_weights.
VectorXd kkt_solve_equality(const BalancingProblem& problem);

/// Grid {1, 1e-1, ..., 1e-6}/n scored by the Gaussian-kernel imbalance of the
/// solution (a kernel not involved in fitting); returns the winning lambda.
double select_lambda_by_gaussian_imbalance(const GramMatrix& gram,
                                           const VectorXi& A,
                                           const MatrixXd& X_eval, bool nonneg,
                                           const SolveOptions& opts = {});

}  // namespace confbal
