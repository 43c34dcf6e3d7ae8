#include "estimators.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include "rng.hpp"

namespace confbal {

const char* method_name(Method method) {
  switch (method) {
    case Method::RfKernelMmd: return "rf-kernel-mmd";
    case Method::GaussianKernelMmd: return "gaussian-mmd";
    case Method::LogisticIpw: return "logistic-ipw";
    case Method::RfIpw: return "rf-ipw";
  }
  return "unknown";
}

Method method_from_name(const std::string& name) {
  if (name == "rf-kernel-mmd") return Method::RfKernelMmd;
  if (name == "gaussian-mmd") return Method::GaussianKernelMmd;
  if (name == "logistic-ipw") return Method::LogisticIpw;
  if (name == "rf-ipw") return Method::RfIpw;
  raise(ErrorCode::InvalidArgument, "unknown method '" + name + "'");
}

double weighted_ate(const Dataset& d, const VectorXd& w) {
  if (w.size() != d.n())
    raise(ErrorCode::InvalidArgument, "weight length does not match dataset");
  if (!w.allFinite())
    raise(ErrorCode::InvalidArgument, "non-finite weight");
  double sum_w[2] = {0.0, 0.0};
  double sum_wy[2] = {0.0, 0.0};
  for (int i = 0; i < d.n(); ++i) {
    sum_w[d.A[i]] += w[i];
    sum_wy[d.A[i]] += w[i] * d.Y[i];
  }
  if (!(sum_w[1] > 0.0) || !(sum_w[0] > 0.0))
    raise(ErrorCode::DegenerateWeights, "group weight sum is not positive");
  return sum_wy[1] / sum_w[1] - sum_wy[0] / sum_w[0];
}

LogisticFit fit_logistic_propensity(const Dataset& d) {
  d.validate();
  const int n = d.n();
  const int p = d.p();
  MatrixXd design(n, p + 1);
  design.col(0).setOnes();
  design.rightCols(p) = d.X;
  const VectorXd a = d.A.cast<double>();

  LogisticFit fit;
  VectorXd beta = VectorXd::Zero(p + 1);
  bool converged = false;
  int iter = 0;
  for (; iter < 100; ++iter) {
    const VectorXd eta = design * beta;
    VectorXd mu(n), wgt(n);
    for (int i = 0; i < n; ++i) {
      const double m = 1.0 / (1.0 + std::exp(-eta[i]));
      mu[i] = std::clamp(m, 1e-12, 1.0 - 1e-12);
      wgt[i] = mu[i] * (1.0 - mu[i]);
    }
    MatrixXd hessian = design.transpose() * wgt.asDiagonal() * design;
    hessian.diagonal().array() += 1e-6;  // fixed ridge, handles separation
    const VectorXd score = design.transpose() * (a - mu);
    const VectorXd delta = hessian.ldlt().solve(score);
    beta += delta;
    if (delta.cwiseAbs().maxCoeff() < 1e-8) {
      converged = true;
      ++iter;
      break;
    }
  }

  fit.converged = converged;
  fit.iterations = iter;
  fit.coefficients = beta;
  const VectorXd eta = design * beta;
  fit.pi.resize(n);
  for (int i = 0; i < n; ++i) {
    const double m = 1.0 / (1.0 + std::exp(-eta[i]));
    fit.pi[i] = std::clamp(m, 1e-12, 1.0 - 1e-12);
  }
  return fit;
}

VectorXd fit_rf_propensity(const Dataset& d, const ForestParams& params) {
  d.validate();
  const int n = d.n();
  MatrixXd response = d.A.cast<double>();
  const Forest forest = grow_forest(d.X, response, params);

  std::vector<std::vector<double>> leaf_means(forest.num_trees());
  std::vector<std::vector<char>> in_bag(forest.num_trees(),
                                        std::vector<char>(n, 0));
  const VectorXd a = d.A.cast<double>();
  for (int t = 0; t < forest.num_trees(); ++t) {
    leaf_means[t] = tree_leaf_means(forest.trees[t], d.X, a);
    for (int row : forest.trees[t].subsample) in_bag[t][row] = 1;
  }

  VectorXd pi(n);
  const double marginal = static_cast<double>(d.group_count(1)) / n;
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    int used = 0;
    for (int t = 0; t < forest.num_trees(); ++t) {
      if (in_bag[t][i]) continue;
      const double mean =
          leaf_means[t][forest.trees[t].leaf_of(d.X.row(i))];
      if (std::isnan(mean)) continue;  // leaf empty of subsample rows
      sum += mean;
      ++used;
    }
    double value = used > 0 ? sum / used : marginal;
    pi[i] = std::clamp(value, 0.01, 0.99);
  }
  return pi;
}

VectorXd ipw_weights(const VectorXd& pi_hat, const VectorXi& A) {
  const int n = static_cast<int>(pi_hat.size());
  if (A.size() != n)
    raise(ErrorCode::InvalidArgument, "pi and A lengths disagree");
  for (int i = 0; i < n; ++i)
    if (!(pi_hat[i] > 0.0 && pi_hat[i] < 1.0))
      raise(ErrorCode::InvalidArgument, "propensities must lie in (0, 1)");

  VectorXd w(n);
  double sum[2] = {0.0, 0.0};
  double count[2] = {0.0, 0.0};
  for (int i = 0; i < n; ++i) {
    w[i] = A[i] == 1 ? 1.0 / pi_hat[i] : 1.0 / (1.0 - pi_hat[i]);
    sum[A[i]] += w[i];
    count[A[i]] += 1.0;
  }
  for (int i = 0; i < n; ++i) w[i] *= count[A[i]] / sum[A[i]];
  return w;
}

RfKernelParts rf_kernel_parts(const Dataset& d, const EstimateConfig& config) {
  RfKernelParts parts;
  parts.split =
      split_sample(d, config.fit_fraction, derive_seed(config.seed, 1));
  const Dataset fit = d.subset(parts.split.fit_indices);
  parts.eval = d.subset(parts.split.eval_indices);

  if (!config.forest_load.empty()) {
    parts.forest = load_forest(config.forest_load);
    if (parts.forest.p != d.p())
      raise(ErrorCode::InvalidArgument,
            "loaded forest dimension does not match dataset");
  } else {
    const StandardizedPair responses = standardize_pair(fit.Y, fit.A);
    MatrixXd response_matrix(fit.n(), 2);
    response_matrix.col(0) = responses.y_tilde;
    response_matrix.col(1) = responses.a_tilde;
    ForestParams params = config.forest;
    params.seed = derive_seed(config.seed, 2);
    parts.forest = grow_forest(fit.X, response_matrix, params);
  }
  if (!config.forest_save.empty())
    save_forest(parts.forest, config.forest_save);
  parts.gram = rf_gram(parts.forest, parts.eval.X);
  return parts;
}

namespace {

AteEstimate estimate_balancing_rf(const Dataset& d,
                                  const EstimateConfig& config) {
  const RfKernelParts parts = rf_kernel_parts(d, config);

  BalancingProblem problem;
  problem.gram = parts.gram;
  problem.A = parts.eval.A;
  problem.nonneg = config.nonneg;
  problem.lambda =
      config.lambda >= 0.0 ? config.lambda : 1.0 / parts.eval.n();
  if (config.lambda_grid)
    problem.lambda = select_lambda_by_gaussian_imbalance(
        parts.gram, parts.eval.A, parts.eval.X, config.nonneg, config.solve);

  AteEstimate out;
  out.method = Method::RfKernelMmd;
  out.lambda_used = problem.lambda;
  if (config.gram_stability)
    out.gram_stability = rf_gram_stability(parts.forest, parts.eval.X);
  out.solution = solve_weights(problem, config.solve, config.record_trace);
  out.weights = VectorXd::Zero(d.n());
  for (size_t k = 0; k < parts.split.eval_indices.size(); ++k)
    out.weights[parts.split.eval_indices[k]] =
        out.solution.w[static_cast<int>(k)];
  out.tau_hat = weighted_ate(d, out.weights);
  return out;
}

AteEstimate estimate_balancing_gaussian(const Dataset& d,
                                        const EstimateConfig& config) {
  const double bandwidth = config.bandwidth > 0.0
                               ? config.bandwidth
                               : median_heuristic(d.X, config.seed);
  const GramMatrix gram = gaussian_gram(d.X, bandwidth);

  BalancingProblem problem;
  problem.gram = gram;
  problem.A = d.A;
  problem.nonneg = config.nonneg;
  problem.lambda = config.lambda >= 0.0 ? config.lambda : 1.0 / d.n();
  if (config.lambda_grid)
    problem.lambda = select_lambda_by_gaussian_imbalance(
        gram, d.A, d.X, config.nonneg, config.solve);

  AteEstimate out;
  out.method = Method::GaussianKernelMmd;
  out.lambda_used = problem.lambda;
  out.solution = solve_weights(problem, config.solve, config.record_trace);
  out.weights = out.solution.w;
  out.tau_hat = weighted_ate(d, out.weights);
  return out;
}

}  // namespace

namespace {

AteEstimate dispatch_method(const Dataset& d, Method method,
                            const EstimateConfig& config) {
  switch (method) {
    case Method::RfKernelMmd:
      return estimate_balancing_rf(d, config);
    case Method::GaussianKernelMmd:
      return estimate_balancing_gaussian(d, config);
    case Method::LogisticIpw: {
      const LogisticFit fit = fit_logistic_propensity(d);
      AteEstimate out;
      out.method = Method::LogisticIpw;
      out.propensity_converged = fit.converged;
      out.weights = ipw_weights(fit.pi, d.A);
      out.tau_hat = weighted_ate(d, out.weights);
      return out;
    }
    case Method::RfIpw: {
      ForestParams params = config.forest;
      params.seed = derive_seed(config.seed, 3);
      const VectorXd pi = fit_rf_propensity(d, params);
      AteEstimate out;
      out.method = Method::RfIpw;
      out.weights = ipw_weights(pi, d.A);
      out.tau_hat = weighted_ate(d, out.weights);
      return out;
    }
  }
  raise(ErrorCode::InvalidArgument, "unknown method");
}

}  // namespace

AteEstimate estimate_ate(const Dataset& d, Method method,
                         const EstimateConfig& config) {
  d.validate();
  AteEstimate out = dispatch_method(d, method, config);
  if (config.with_balance) out.balance = balance_report(d, out.weights);
  return out;
}

}  // namespace confbal
