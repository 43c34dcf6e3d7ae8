#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "errors.hpp"

namespace confbal {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

/// Observed sample: covariate matrix X (n x p), binary treatment A and
/// outcome Y. Column names are kept so reports and CSV round-trips can refer
/// to covariates by name; they default to x1..xp / y / a.
struct Dataset {
  MatrixXd X;
  VectorXi A;
  VectorXd Y;
  std::vector<std::string> covariate_names;
  std::string outcome_name = "y";
  std::string treatment_name = "a";

  int n() const { return static_cast<int>(X.rows()); }
  int p() const { return static_cast<int>(X.cols()); }

  int group_count(int a) const;
  std::vector<int> group_indices(int a) const;

  /// Throws InvariantError unless n >= 2, p >= 1, A is 0/1, everything is
  /// finite and both treatment groups are nonempty.
  void validate() const;

  /// Row subset (with repetition allowed, e.g. bootstrap resamples).
  Dataset subset(const std::vector<int>& rows) const;

  static Dataset make(MatrixXd x, VectorXi a, VectorXd y,
                      std::vector<std::string> names = {});
};

struct Standardized {
  VectorXd values;
  double center = 0.0;
  double scale = 1.0;
};

/// Centers and rescales v to sample mean 0 and sample variance 1 (n-1
/// denominator). Throws ZeroVariance when all entries are equal.
Standardized standardize(const VectorXd& v);

/// Standardized bivariate response used to grow the forest, together with the
/// affine maps that produced it.
struct StandardizedPair {
  VectorXd y_tilde;
  VectorXd a_tilde;
  double y_center = 0.0, y_scale = 1.0;
  double a_center = 0.0, a_scale = 1.0;
};

StandardizedPair standardize_pair(const VectorXd& y, const VectorXi& a);

struct SampleSplit {
  std::vector<int> fit_indices;
  std::vector<int> eval_indices;
  uint64_t seed = 0;
};

/// Random partition of rows into a kernel-fitting set and a weight-estimation
/// set. The fit set has round(n * fit_fraction) rows. Draws are retried (at
/// most 100 times) until both sides contain both treatment groups; throws
/// DegenerateSplit when no admissible split is found.
SampleSplit split_sample(const Dataset& d, double fit_fraction, uint64_t seed);

}  // namespace confbal
