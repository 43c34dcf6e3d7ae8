#pragma once

#include <string>
#include <vector>

#include "dataset.hpp"
#include "estimators.hpp"

namespace confbal {

enum class DgpModel { Toy, Model1, Model2, Model3 };

const char* dgp_model_name(DgpModel model);
DgpModel dgp_model_from_name(const std::string& name);

struct DgpSpec {
  DgpModel model = DgpModel::Model1;
  int n = 500;
  int p = 50;
  double rho = 0.25;  // Toy defaults to -0.25; see default_rho
  uint64_t seed = 0;
};

double default_rho(DgpModel model);
int min_active_dimension(DgpModel model);

struct SimulatedSample {
  Dataset dataset;
  VectorXd true_pi;
  VectorXd true_mu1;
  VectorXd true_mu0;
  double true_tau = 0.0;
};

/// Rows i.i.d. N(0, Sigma) with Sigma_jk = rho^|j-k| via the AR(1) recursion
/// X_j = rho X_{j-1} + sqrt(1 - rho^2) Z_j.
MatrixXd sample_ar1_gaussian(int n, int p, double rho, uint64_t seed);

/// Draws covariates, treatment and outcome for the requested model. Model 1
/// clamps its propensity to [0.01, 0.99]; its true effect is the Monte Carlo
/// constant from model1_true_tau. Throws DimensionTooSmall when p is below
/// the model's active dimension.
SimulatedSample generate(const DgpSpec& spec);

/// High-precision Monte Carlo value of Model 1's average treatment effect
/// (1e7 draws, fixed internal seed, cached per rho).
double model1_true_tau(double rho);

struct ReplicateResult {
  int replicate = 0;
  Method method = Method::RfKernelMmd;
  double error = 0.0;  // tau_hat - tau
  double tau_hat = 0.0;
  bool ok = true;
  std::string failure;
  // Filled when the experiment is run with balance_rows set: weighted
  // averages of the true outcome function next to its population mean.
  double pop_mean = 0.0;
  double treatment_mean = 0.0;
  double control_mean = 0.0;
};

struct MethodSummary {
  Method method = Method::RfKernelMmd;
  int completed = 0;
  double mean_bias = 0.0;
  double sd = 0.0;
  double q1 = 0.0, median = 0.0, q3 = 0.0;
};

struct SimulationReport {
  DgpSpec spec;
  std::vector<ReplicateResult> rows;
  std::vector<MethodSummary> summaries;
};

/// Runs `reps` independent replicates; replicate r regenerates data with seed
/// base_seed + r and evaluates every method. Per-method failures are flagged
/// rows, not aborts. Deterministic for a fixed base seed regardless of the
/// parallelism used. With balance_rows set, each row also carries the
/// population / weighted-treatment / weighted-control means of the true
/// outcome function.
SimulationReport run_experiment(const DgpSpec& spec,
                                const std::vector<Method>& methods, int reps,
                                uint64_t base_seed,
                                const EstimateConfig& config,
                                bool balance_rows = false);

struct BalanceTableRow {
  std::string process;
  double pop_mean = 0.0;
  double treatment_mean = 0.0;
  double control_mean = 0.0;
};

/// Weighted averages of the true mean-outcome function mu_1 in each arm next
/// to its population average over the sample.
BalanceTableRow balance_table_row(const SimulatedSample& sample,
                                  const VectorXd& weights,
                                  const std::string& label);

}  // namespace confbal
