#include "weights.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>

namespace confbal {

void BalancingProblem::validate() const {
  const int n = gram.n();
  if (A.size() != n)
    raise(ErrorCode::InvalidArgument, "gram dimension and A length disagree");
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    raise(ErrorCode::InvalidArgument, "lambda must be finite and >= 0");
  int n1 = 0;
  for (int i = 0; i < n; ++i) {
    if (A[i] != 0 && A[i] != 1)
      raise(ErrorCode::InvalidArgument, "treatment labels must be 0/1");
    n1 += A[i];
  }
  if (n1 == 0 || n1 == n)
    raise(ErrorCode::InvalidArgument, "both groups must be nonempty");
}

double mmd_squared(const GramMatrix& gram, const VectorXd& w, int a,
                   const VectorXi& A) {
  const int n = gram.n();
  if (w.size() != n || A.size() != n)
    raise(ErrorCode::InvalidArgument, "dimension mismatch in mmd_squared");
  if (!w.allFinite())
    raise(ErrorCode::InvalidArgument, "non-finite weight");
  double n_a = 0;
  for (int i = 0; i < n; ++i) n_a += (A[i] == a);
  if (n_a == 0) raise(ErrorCode::InvalidArgument, "group is empty");

  double cross = 0.0;   // sum_{i in S_a, j} w_i K_ij
  double within = 0.0;  // sum_{i,j in S_a} w_i w_j K_ij
  double total = 0.0;   // sum_{i,j} K_ij
  for (int i = 0; i < n; ++i) {
    double row_all = 0.0;
    double row_group = 0.0;
    for (int j = 0; j < n; ++j) {
      const double k = gram.values(i, j);
      row_all += k;
      if (A[j] == a) row_group += w[j] * k;
    }
    total += row_all;
    if (A[i] == a) {
      cross += w[i] * row_all;
      within += w[i] * row_group;
    }
  }
  return -2.0 / (n_a * n) * cross + within / (n_a * n_a) + total / (n * n);
}

double objective_value(const BalancingProblem& problem, const VectorXd& w) {
  return mmd_squared(problem.gram, w, 1, problem.A) +
         mmd_squared(problem.gram, w, 0, problem.A) +
         0.5 * problem.lambda * w.squaredNorm();
}

VectorXd project_group_simplex(const VectorXd& v, double total) {
  if (!(total > 0.0))
    raise(ErrorCode::InvalidArgument, "projection total must be positive");
  const int n = static_cast<int>(v.size());
  std::vector<double> sorted(v.data(), v.data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double running = 0.0;
  double theta = (v.sum() - total) / n;
  for (int k = 0; k < n; ++k) {
    running += sorted[k];
    const double candidate = (running - total) / (k + 1);
    if (sorted[k] - candidate > 0.0) theta = candidate;
    else break;
  }
  VectorXd out = (v.array() - theta).max(0.0);
  const double sum = out.sum();
  if (sum > 0.0) out *= total / sum;  // absorb rounding
  return out;
}

namespace {

/// Quadratic form of the objective with the constant and linear pieces
/// precomputed: f(w) = sum_a [ w_a' K_aa w_a / n_a^2 - (2/(n_a n)) r_a' w_a ]
/// + 2 sum(K)/n^2 + (lambda/2) |w|^2, where r is the Gram row-sum vector.
struct QuadraticForm {
  std::vector<int> idx[2];   // rows of each group
  MatrixXd block[2];         // K restricted to each group
  VectorXd rowsum[2];        // full-sample row sums restricted to each group
  double group_size[2] = {0, 0};
  double constant = 0.0;
  double lambda = 0.0;
  int n = 0;

  explicit QuadraticForm(const BalancingProblem& problem) {
    n = problem.gram.n();
    lambda = problem.lambda;
    for (int i = 0; i < n; ++i) idx[problem.A[i]].push_back(i);
    const VectorXd full_rowsum = problem.gram.values.rowwise().sum();
    constant = 2.0 * full_rowsum.sum() / (static_cast<double>(n) * n);
    for (int a = 0; a < 2; ++a) {
      const auto& rows = idx[a];
      const int na = static_cast<int>(rows.size());
      group_size[a] = na;
      block[a].resize(na, na);
      rowsum[a].resize(na);
      for (int u = 0; u < na; ++u) {
        rowsum[a][u] = full_rowsum[rows[u]];
        for (int v = 0; v < na; ++v)
          block[a](u, v) = problem.gram.values(rows[u], rows[v]);
      }
    }
  }

  VectorXd gather(const VectorXd& w, int a) const {
    const auto& rows = idx[a];
    VectorXd out(rows.size());
    for (size_t u = 0; u < rows.size(); ++u) out[u] = w[rows[u]];
    return out;
  }

  void scatter(const VectorXd& part, int a, VectorXd* w) const {
    const auto& rows = idx[a];
    for (size_t u = 0; u < rows.size(); ++u) (*w)[rows[u]] = part[u];
  }

  /// Objective and gradient in group coordinates. `kw[a]` receives
  /// block[a] * w_a so callers can reuse the product.
  double eval(const VectorXd w_grp[2], VectorXd kw[2], VectorXd grad[2]) const {
    double f = constant;
    for (int a = 0; a < 2; ++a) {
      const double na = group_size[a];
      kw[a].noalias() = block[a] * w_grp[a];
      f += w_grp[a].dot(kw[a]) / (na * na) -
           2.0 / (na * n) * rowsum[a].dot(w_grp[a]) +
           0.5 * lambda * w_grp[a].squaredNorm();
      grad[a] = 2.0 / (na * na) * kw[a] - (2.0 / (na * n)) * rowsum[a] +
                lambda * w_grp[a];
    }
    return f;
  }

  double value_only(const VectorXd w_grp[2]) const {
    double f = constant;
    for (int a = 0; a < 2; ++a) {
      const double na = group_size[a];
      f += w_grp[a].dot(block[a] * w_grp[a]) / (na * na) -
           2.0 / (na * n) * rowsum[a].dot(w_grp[a]) +
           0.5 * lambda * w_grp[a].squaredNorm();
    }
    return f;
  }
};

VectorXd project_group(const VectorXd& v, double total, bool nonneg) {
  if (nonneg) return project_group_simplex(v, total);
  // Euclidean projection onto the affine constraint sum = total.
  return v.array() + (total - v.sum()) / v.size();
}

}  // namespace

WeightSolution solve_weights(const BalancingProblem& problem,
                             const SolveOptions& opts, bool record_trace) {
  problem.validate();
  const QuadraticForm form(problem);

  VectorXd w_grp[2], kw[2], grad[2];
  for (int a = 0; a < 2; ++a)
    w_grp[a] = VectorXd::Ones(form.idx[a].size());  // feasible start

  double f = form.eval(w_grp, kw, grad);
  WeightSolution solution;
  auto group_residual = [&] {
    double r = 0.0;
    for (int a = 0; a < 2; ++a)
      r = std::max(r, std::fabs(w_grp[a].sum() - form.group_size[a]));
    return r;
  };
  if (record_trace) {
    solution.trace.push_back(f);
    solution.trace_constraint.push_back(group_residual());
  }

  double step = opts.initial_step;
  int iter = 0;
  bool converged = false;
  VectorXd cand[2], diff[2], k_cand[2];
  while (iter < opts.max_iter) {
    ++iter;
    // Backtracking on the majorization condition
    //   f(w+) <= f(w) + grad'(w+ - w) + |w+ - w|^2 / (2 step).
    // For this quadratic the condition reduces to step * d'Hd <= |d|^2, and
    // the achieved decrease has the closed form -(grad'd + d'Hd/2); both are
    // computed from increments, which keeps late iterations meaningful long
    // after f itself stops resolving in double precision.
    bool moved = false;
    double decrease = 0.0;
    // The projection is invariant to a per-group constant shift of its
    // argument, so the step can use the group-centered gradient. That keeps
    // intermediates O(|w|) even when the raw gradient is dominated by the
    // constraint-normal (multiplier) component.
    VectorXd g_step[2];
    for (int a = 0; a < 2; ++a)
      g_step[a] = grad[a].array() - grad[a].mean();
    for (int attempt = 0; attempt < 60; ++attempt) {
      double d_norm_sq = 0.0;
      double dhd = 0.0;
      double gd = 0.0;
      for (int a = 0; a < 2; ++a) {
        cand[a] = project_group(w_grp[a] - step * g_step[a],
                                form.group_size[a], problem.nonneg);
        diff[a] = cand[a] - w_grp[a];
        d_norm_sq += diff[a].squaredNorm();
        gd += g_step[a].dot(diff[a]);
      }
      if (d_norm_sq == 0.0) break;  // projected fixed point
      for (int a = 0; a < 2; ++a) {
        k_cand[a].noalias() = form.block[a] * cand[a];
        const double na = form.group_size[a];
        dhd += 2.0 / (na * na) * diff[a].dot(k_cand[a] - kw[a]) +
               form.lambda * diff[a].squaredNorm();
      }
      if (step * dhd <= d_norm_sq) {
        decrease = -(gd + 0.5 * dhd);
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved || decrease <= 0.0) {
      // Fixed point or floating-point floor: the iterate is as resolved as
      // double precision allows. Only a max_iter exit reports false.
      converged = true;
      break;
    }

    assert(decrease > 0.0);
    for (int a = 0; a < 2; ++a) {
      w_grp[a] = cand[a];
      kw[a] = k_cand[a];
    }
    f -= decrease;
    // Periodic full refresh absorbs incremental drift in f and kw.
    if (iter % 1024 == 0) f = form.eval(w_grp, kw, grad);
    else
      for (int a = 0; a < 2; ++a) {
        const double na = form.group_size[a];
        grad[a] = 2.0 / (na * na) * kw[a] -
                  (2.0 / (na * form.n)) * form.rowsum[a] +
                  form.lambda * w_grp[a];
      }
    if (record_trace) {
      solution.trace.push_back(f);
      solution.trace_constraint.push_back(group_residual());
    }
    step *= 1.3;  // cheap adaptation; backtracking undoes overshoots

    if (decrease <= opts.tol * std::max(std::fabs(f), 1e-30)) {
      converged = true;
      break;
    }
  }

  solution.iterations = iter;
  solution.converged = converged;
  solution.objective = f;

  solution.w.resize(form.n);
  for (int a = 0; a < 2; ++a) form.scatter(w_grp[a], a, &solution.w);
  double residual = 0.0;
  for (int a = 0; a < 2; ++a)
    residual = std::max(residual,
                        std::fabs(w_grp[a].sum() - form.group_size[a]));
  solution.constraint_residual = residual;

  // Unit-step projected gradient norm; zero at a KKT point.
  double kkt_sq = 0.0;
  for (int a = 0; a < 2; ++a) {
    const VectorXd moved =
        project_group(w_grp[a] - grad[a], form.group_size[a], problem.nonneg);
    kkt_sq += (moved - w_grp[a]).squaredNorm();
  }
  solution.kkt_residual = std::sqrt(kkt_sq);
  return solution;
}

VectorXd kkt_solve_equality(const BalancingProblem& problem) {
  problem.validate();
  if (problem.nonneg)
    raise(ErrorCode::InvalidArgument,
          "kkt_solve_equality applies to the equality-only problem");
  const int n = problem.gram.n();

  // Hessian H and linear part g of f(w) = 0.5 w'Hw + g'w + const.
  MatrixXd H = MatrixXd::Zero(n, n);
  VectorXd g(n);
  double n_a[2] = {0, 0};
  for (int i = 0; i < n; ++i) n_a[problem.A[i]] += 1;
  const VectorXd rowsum = problem.gram.values.rowwise().sum();
  for (int i = 0; i < n; ++i) {
    const double na = n_a[problem.A[i]];
    g[i] = -2.0 / (na * n) * rowsum[i];
    for (int j = 0; j < n; ++j)
      if (problem.A[i] == problem.A[j])
        H(i, j) = 2.0 / (na * na) * problem.gram.values(i, j);
    H(i, i) += problem.lambda;
  }

  MatrixXd kkt = MatrixXd::Zero(n + 2, n + 2);
  kkt.topLeftCorner(n, n) = H;
  VectorXd rhs(n + 2);
  rhs.head(n) = -g;
  for (int i = 0; i < n; ++i) {
    const int row = problem.A[i] == 1 ? n : n + 1;
    kkt(row, i) = 1.0;
    kkt(i, row) = 1.0;
  }
  rhs[n] = n_a[1];
  rhs[n + 1] = n_a[0];

  Eigen::FullPivLU<MatrixXd> lu(kkt);
  if (!lu.isInvertible())
    raise(ErrorCode::SingularSystem, "KKT system is singular (lambda = 0?)");
  const VectorXd solution = lu.solve(rhs);
  return solution.head(n);
}

double select_lambda_by_gaussian_imbalance(const GramMatrix& gram,
                                           const VectorXi& A,
                                           const MatrixXd& X_eval, bool nonneg,
                                           const SolveOptions& opts) {
  const int n = gram.n();
  const GramMatrix yardstick = gaussian_gram(X_eval, median_heuristic(X_eval));
  double best_lambda = 1.0 / n;
  double best_score = std::numeric_limits<double>::infinity();
  for (int e = 0; e <= 6; ++e) {
    const double lambda = std::pow(10.0, -e) / n;
    BalancingProblem problem{gram, A, lambda, nonneg};
    const WeightSolution sol = solve_weights(problem, opts);
    const double score = mmd_squared(yardstick, sol.w, 1, A) +
                         mmd_squared(yardstick, sol.w, 0, A);
    if (score < best_score) {
      best_score = score;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

}  // namespace confbal
