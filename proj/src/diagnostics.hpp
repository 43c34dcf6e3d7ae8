#pragma once

#include <functional>
#include <string>
#include <vector>

#include "balance.hpp"
#include "dataset.hpp"
#include "estimators.hpp"

namespace confbal {

struct AssociationRow {
  std::string name;
  std::string kind;  // "continuous" or "discrete"
  double stat_treatment = 0.0;  // |t| or sqrt(chi2); NaN when undefined
  double stat_outcome = 0.0;
  double p_treatment = 1.0;
  double p_outcome = 1.0;
};

struct AssociationReport {
  std::vector<AssociationRow> rows;
};

/// Per-covariate association with treatment and with outcome. Covariates
/// with at most discrete_threshold distinct values get a chi-squared
/// independence test (statistic reported as sqrt(chi2)); the rest get a
/// Welch t-test. The outcome axis requires a two-valued outcome; otherwise
/// that column is NaN. Undefined tests produce NaN cells, never a failure.
AssociationReport association_stats(const Dataset& d,
                                    int discrete_threshold = 10);

struct BootstrapResult {
  double se = 0.0;
  std::vector<double> estimates;
};

/// Nonparametric bootstrap of the full pipeline: B row resamples with
/// replacement (redrawn, at most 100 times each, until both groups appear),
/// the complete estimator rerun on each, and the sample sd of the B
/// estimates. `resample_override` substitutes fixed index sets for testing.
BootstrapResult bootstrap_se(
    const Dataset& d, Method method, int B, uint64_t base_seed,
    const EstimateConfig& config,
    const std::vector<std::vector<int>>* resample_override = nullptr);

/// Spearman rank correlation (average ranks on ties).
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace confbal
