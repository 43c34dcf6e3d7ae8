#pragma once

#include <optional>
#include <string>

#include "balance.hpp"
#include "dataset.hpp"
#include "forest.hpp"
#include "weights.hpp"

namespace confbal {

enum class Method { RfKernelMmd, GaussianKernelMmd, LogisticIpw, RfIpw };

const char* method_name(Method method);
Method method_from_name(const std::string& name);

struct EstimateConfig {
  ForestParams forest;
  double fit_fraction = 0.5;
  double lambda = -1.0;     // < 0 = 1/n of the weighting sample
  bool lambda_grid = false; // pick lambda from {1,...,1e-6}/n instead
  bool nonneg = true;
  double bandwidth = 0.0;   // <= 0 = median heuristic
  SolveOptions solve;
  uint64_t seed = 0;
  std::string forest_load;  // reuse a saved forest instead of fitting
  std::string forest_save;  // persist the fitted forest
  bool record_trace = false;
  bool gram_stability = false;
  bool with_balance = false;  // attach a covariate balance summary
};

struct AteEstimate {
  double tau_hat = 0.0;
  Method method = Method::RfKernelMmd;
  VectorXd weights;  // length n; rows not used by the method carry weight 0
  double lambda_used = 0.0;
  WeightSolution solution;  // balancing methods only
  bool propensity_converged = true;
  double gram_stability = 0.0;          // filled when requested
  std::optional<BalanceReport> balance; // filled when requested
};

/// Hajek-weighted difference of group outcome means. Throws
/// DegenerateWeights when a group's weight sum is not positive.
double weighted_ate(const Dataset& d, const VectorXd& w);

struct LogisticFit {
  VectorXd pi;
  VectorXd coefficients;  // intercept first
  bool converged = true;
  int iterations = 0;
};

/// Logistic regression of A on [1, X] by iteratively reweighted least
/// squares with a fixed 1e-6 ridge on the Hessian; stops when the largest
/// coefficient change drops below 1e-8 or after 100 iterations.
LogisticFit fit_logistic_propensity(const Dataset& d);

/// Regression-forest propensities with out-of-bag prediction (units are
/// predicted only by trees whose subsample excluded them) clipped to
/// [0.01, 0.99].
VectorXd fit_rf_propensity(const Dataset& d, const ForestParams& params);

/// w_i = A_i / pi_i + (1 - A_i) / (1 - pi_i), rescaled within each group so
/// the group sums equal the group sizes.
VectorXd ipw_weights(const VectorXd& pi_hat, const VectorXi& A);

/// Full pipeline for one method. RfKernelMmd splits the sample, standardizes
/// the responses on the fit half, grows the forest there, and solves for
/// weights on the held-out half (fit rows get weight 0); GaussianKernelMmd
/// balances the full sample with a data-independent kernel; the IPW methods
/// weight by fitted propensities.
AteEstimate estimate_ate(const Dataset& d, Method method,
                         const EstimateConfig& config);

/// Deterministic split -> forest -> Gram prefix of the RfKernelMmd pipeline,
/// shared with inspection paths (Gram export, caching).
struct RfKernelParts {
  SampleSplit split;
  Forest forest;
  GramMatrix gram;
  Dataset eval;
};
RfKernelParts rf_kernel_parts(const Dataset& d, const EstimateConfig& config);

}  // namespace confbal
