#include <cmath>
#include <random>

#include "doctest.h"
#include "estimators.hpp"
#include "rng.hpp"
#include "simulation.hpp"

using namespace confbal;

namespace {

Dataset randomized_dataset(int n, int p, double tau, uint64_t seed) {
  Rng rng(seed);
  MatrixXd X(n, p);
  VectorXi A(n);
  VectorXd Y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) X(i, j) = rng.gaussian();
    A[i] = rng.bernoulli(0.5) ? 1 : 0;
    Y[i] = X(i, 0) + tau * A[i] + rng.gaussian();
  }
  return Dataset::make(X, A, Y);
}

}  // namespace

TEST_CASE("weighted_ate reduces to the difference of group means at w = 1") {
  const Dataset d = randomized_dataset(50, 2, 1.0, 3);
  double sums[2] = {0, 0}, counts[2] = {0, 0};
  for (int i = 0; i < d.n(); ++i) {
    sums[d.A[i]] += d.Y[i];
    counts[d.A[i]] += 1;
  }
  CHECK(weighted_ate(d, VectorXd::Ones(50)) ==
        doctest::Approx(sums[1] / counts[1] - sums[0] / counts[0])
            .epsilon(1e-12));
}

TEST_CASE("weighted_ate is zero for a constant outcome") {
  MatrixXd X = MatrixXd::Random(8, 1);
  VectorXi A(8);
  VectorXd Y = VectorXd::Constant(8, 3.25);
  for (int i = 0; i < 8; ++i) A[i] = i % 2;
  const Dataset d = Dataset::make(X, A, Y);
  Rng rng(5);
  VectorXd w(8);
  for (int i = 0; i < 8; ++i) w[i] = 0.25 + rng.uniform();
  CHECK(weighted_ate(d, w) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("weighted_ate matches the four-unit hand computation") {
  MatrixXd X = MatrixXd::Zero(4, 1);
  X << 1, 2, 3, 4;
  VectorXi A(4);
  A << 1, 1, 0, 0;
  VectorXd Y(4);
  Y << 2, 4, 1, 3;
  VectorXd w(4);
  w << 1, 3, 2, 2;
  const Dataset d = Dataset::make(X, A, Y);
  CHECK(weighted_ate(d, w) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("weighted_ate is invariant to per-group weight rescaling") {
  const Dataset d = randomized_dataset(60, 3, 0.5, 11);
  Rng rng(13);
  VectorXd w(60);
  for (int i = 0; i < 60; ++i) w[i] = 0.1 + rng.uniform();
  VectorXd scaled = w;
  for (int i = 0; i < 60; ++i) scaled[i] *= d.A[i] == 1 ? 4.5 : 0.02;
  CHECK(weighted_ate(d, scaled) ==
        doctest::Approx(weighted_ate(d, w)).epsilon(1e-12));
}

TEST_CASE("weighted_ate rejects a zero group weight sum") {
  const Dataset d = randomized_dataset(10, 1, 0.0, 17);
  VectorXd w = VectorXd::Zero(10);
  for (int i = 0; i < 10; ++i)
    if (d.A[i] == 0) w[i] = 1.0;
  try {
    weighted_ate(d, w);
    FAIL("expected DegenerateWeights");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateWeights);
  }
}

TEST_CASE("logistic propensities are flat when treatment ignores covariates") {
  Rng rng(19);
  const int n = 2000;
  MatrixXd X(n, 1);
  VectorXi A(n);
  VectorXd Y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.gaussian();
    A[i] = rng.bernoulli(0.4) ? 1 : 0;
    Y[i] = rng.gaussian();
  }
  const Dataset d = Dataset::make(X, A, Y);
  const LogisticFit fit = fit_logistic_propensity(d);
  CHECK(fit.converged);
  const double marginal = static_cast<double>(d.group_count(1)) / n;
  for (int i = 0; i < n; ++i)
    CHECK(std::fabs(fit.pi[i] - marginal) < 0.05);
}

TEST_CASE("logistic recovers the intercept-only MLE on symmetric data") {
  // Every x value appears with the same treatment mix, so A and X are
  // exactly independent in-sample: slope 0, intercept logit(n1/n).
  const int n = 40;
  MatrixXd X(n, 1);
  VectorXi A(n);
  VectorXd Y = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = (i % 8 < 4) ? -1.0 : 1.0;
    A[i] = (i % 4 == 0) ? 1 : 0;  // quarter treated at each x value
    Y[i] = i * 0.1;
  }
  const Dataset d = Dataset::make(X, A, Y);
  const LogisticFit fit = fit_logistic_propensity(d);
  CHECK(fit.converged);
  const double n1 = d.group_count(1);
  CHECK(fit.coefficients[0] ==
        doctest::Approx(std::log(n1 / (n - n1))).epsilon(1e-4));
  CHECK(std::fabs(fit.coefficients[1]) < 1e-4);
}

TEST_CASE("logistic flags complete separation but stays finite") {
  const int n = 30;
  MatrixXd X(n, 1);
  VectorXi A(n);
  VectorXd Y = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = i < 15 ? -1.0 - 0.01 * i : 1.0 + 0.01 * i;
    A[i] = i < 15 ? 0 : 1;
  }
  const Dataset d = Dataset::make(X, A, Y);
  const LogisticFit fit = fit_logistic_propensity(d);
  CHECK(!fit.converged);
  CHECK(fit.pi.allFinite());
  for (int i = 0; i < n; ++i) {
    CHECK(fit.pi[i] > 0.0);
    CHECK(fit.pi[i] < 1.0);
  }
}

TEST_CASE("rf propensities separate a thresholded assignment") {
  Rng rng(23);
  const int n = 600;
  MatrixXd X(n, 2);
  VectorXi A(n);
  VectorXd Y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.uniform();
    X(i, 1) = rng.gaussian();
    A[i] = X(i, 0) > 0.5 ? 1 : 0;
    Y[i] = rng.gaussian();
  }
  const Dataset d = Dataset::make(X, A, Y);
  ForestParams params;
  params.num_trees = 200;
  params.min_node = 2;
  params.seed = 7;
  const VectorXd pi = fit_rf_propensity(d, params);
  CHECK(pi.minCoeff() >= 0.01);
  CHECK(pi.maxCoeff() <= 0.99);
  double deep = 0.0, shallow = 0.0;
  int n_deep = 0, n_shallow = 0;
  for (int i = 0; i < n; ++i) {
    if (X(i, 0) > 0.8) {
      deep += pi[i];
      ++n_deep;
    } else if (X(i, 0) < 0.2) {
      shallow += pi[i];
      ++n_shallow;
    }
  }
  CHECK(deep / n_deep > 0.9);
  CHECK(shallow / n_shallow < 0.1);
}

TEST_CASE("rf propensities concentrate near the marginal rate under a null") {
  Rng rng(29);
  const int n = 2000;
  MatrixXd X(n, 3);
  VectorXi A(n);
  VectorXd Y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) X(i, j) = rng.gaussian();
    A[i] = rng.bernoulli(0.45) ? 1 : 0;
    Y[i] = rng.gaussian();
  }
  const Dataset d = Dataset::make(X, A, Y);
  ForestParams params;
  params.num_trees = 300;
  params.min_node = 25;  // larger leaves tame per-tree noise on a null signal
  params.seed = 3;
  const VectorXd pi = fit_rf_propensity(d, params);
  const double marginal = static_cast<double>(d.group_count(1)) / n;
  double mean_abs = 0.0;
  for (int i = 0; i < n; ++i) mean_abs += std::fabs(pi[i] - marginal);
  CHECK(mean_abs / n < 0.1);
}

TEST_CASE("ipw_weights normalizes group sums to the group sizes") {
  VectorXd pi(2);
  pi << 0.5, 0.25;
  VectorXi A(2);
  A << 1, 1;
  const VectorXd w = ipw_weights(pi, A);
  CHECK(w[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(4.0 / 3.0).epsilon(1e-12));

  // Constant propensity = uniform weights after normalization.
  VectorXd flat = VectorXd::Constant(6, 0.4);
  VectorXi labels(6);
  labels << 1, 1, 0, 0, 0, 1;
  const VectorXd uniform = ipw_weights(flat, labels);
  CHECK((uniform.array() - 1.0).abs().maxCoeff() < 1e-12);

  Rng rng(31);
  VectorXd random_pi(40);
  VectorXi random_a(40);
  for (int i = 0; i < 40; ++i) {
    random_pi[i] = 0.05 + 0.9 * rng.uniform();
    random_a[i] = i % 3 == 0;
  }
  const VectorXd normalized = ipw_weights(random_pi, random_a);
  double sums[2] = {0, 0}, counts[2] = {0, 0};
  for (int i = 0; i < 40; ++i) {
    sums[random_a[i]] += normalized[i];
    counts[random_a[i]] += 1;
  }
  CHECK(sums[0] == doctest::Approx(counts[0]).epsilon(1e-12));
  CHECK(sums[1] == doctest::Approx(counts[1]).epsilon(1e-12));
}

TEST_CASE("true-propensity IPW bias shrinks with sample size") {
  // With the exact pi of a confounded data model the weighted estimator is
  // consistent; the average absolute error over replicates must fall as n
  // grows.
  std::vector<double> mean_abs_error;
  for (int n : {500, 2000, 8000}) {
    double total = 0.0;
    const int reps = 50;
    for (int r = 0; r < reps; ++r) {
      Rng rng(derive_seed(1234, n * 100 + r));
      MatrixXd X(n, 2);
      VectorXi A(n);
      VectorXd Y(n);
      VectorXd pi(n);
      for (int i = 0; i < n; ++i) {
        X(i, 0) = rng.gaussian();
        X(i, 1) = rng.gaussian();
        pi[i] = 1.0 / (1.0 + std::exp(-(0.7 * X(i, 0) - 0.4 * X(i, 1))));
        A[i] = rng.bernoulli(pi[i]) ? 1 : 0;
        Y[i] = 2.0 * X(i, 0) + X(i, 1) + rng.gaussian();  // tau = 0
      }
      const Dataset d = Dataset::make(X, A, Y);
      total += std::fabs(weighted_ate(d, ipw_weights(pi, d.A)));
    }
    mean_abs_error.push_back(total / reps);
  }
  CHECK(mean_abs_error[1] < mean_abs_error[0]);
  CHECK(mean_abs_error[2] < mean_abs_error[1]);
}

TEST_CASE("estimate_ate is deterministic given data, method and seed") {
  const Dataset d = randomized_dataset(140, 3, 1.0, 41);
  EstimateConfig config;
  config.forest.num_trees = 60;
  config.seed = 9;
  for (Method method : {Method::RfKernelMmd, Method::GaussianKernelMmd,
                        Method::LogisticIpw, Method::RfIpw}) {
    const AteEstimate one = estimate_ate(d, method, config);
    const AteEstimate two = estimate_ate(d, method, config);
    CHECK(one.tau_hat == two.tau_hat);
    CHECK((one.weights - two.weights).cwiseAbs().maxCoeff() == 0.0);
    CHECK(one.weights.size() == d.n());
    CHECK(one.weights.allFinite());
    CHECK(std::isfinite(one.tau_hat));
  }
}

TEST_CASE("rf-kernel-mmd weights live on the eval half and sum per group") {
  const Dataset d = randomized_dataset(160, 3, 1.0, 43);
  EstimateConfig config;
  config.forest.num_trees = 80;
  config.seed = 10;
  const AteEstimate estimate = estimate_ate(d, Method::RfKernelMmd, config);
  int zero_count = 0;
  for (int i = 0; i < d.n(); ++i)
    if (estimate.weights[i] == 0.0) ++zero_count;
  CHECK(zero_count == 80);  // fit half gets zero weight
  CHECK(estimate.solution.constraint_residual < 1e-6);
  CHECK(estimate.weights.minCoeff() >= -1e-10);
}

TEST_CASE("estimate_ate attaches a balance summary on request") {
  const Dataset d = randomized_dataset(120, 3, 0.5, 47);
  EstimateConfig config;
  config.seed = 4;
  config.with_balance = true;
  const AteEstimate est = estimate_ate(d, Method::LogisticIpw, config);
  REQUIRE(est.balance.has_value());
  CHECK(est.balance->rows.size() == 3);
  const BalanceReport direct = balance_report(d, est.weights);
  for (size_t i = 0; i < direct.rows.size(); ++i) {
    CHECK(est.balance->rows[i].name == direct.rows[i].name);
    CHECK(est.balance->rows[i].reduction == direct.rows[i].reduction);
  }
  EstimateConfig plain;
  plain.seed = 4;
  CHECK(!estimate_ate(d, Method::LogisticIpw, plain).balance.has_value());
}

TEST_CASE("all methods recover the effect of a randomized design") {
  // Randomized treatment, constant effect: every method is consistent.
  const double tau = 1.5;
  const int reps = 10;
  for (Method method : {Method::RfKernelMmd, Method::GaussianKernelMmd,
                        Method::LogisticIpw, Method::RfIpw}) {
    double total_error = 0.0;
    for (int r = 0; r < reps; ++r) {
      const Dataset d = randomized_dataset(500, 2, tau, 500 + r);
      EstimateConfig config;
      config.forest.num_trees = 120;
      config.seed = 100 + r;
      total_error += estimate_ate(d, method, config).tau_hat - tau;
    }
    CHECK(std::fabs(total_error / reps) < 0.15);
  }
}
