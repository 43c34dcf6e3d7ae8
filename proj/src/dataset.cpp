#include "dataset.hpp"

#include <cmath>

#include "rng.hpp"

namespace confbal {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::InvariantError: return "InvariantError";
    case ErrorCode::DegenerateSplit: return "DegenerateSplit";
    case ErrorCode::EmptyChild: return "EmptyChild";
    case ErrorCode::InvalidBandwidth: return "InvalidBandwidth";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::DegenerateWeights: return "DegenerateWeights";
    case ErrorCode::ResampleDegenerate: return "ResampleDegenerate";
    case ErrorCode::ZeroPooledSd: return "ZeroPooledSd";
    case ErrorCode::DimensionTooSmall: return "DimensionTooSmall";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

int Dataset::group_count(int a) const {
  int count = 0;
  for (int i = 0; i < A.size(); ++i) count += (A[i] == a);
  return count;
}

std::vector<int> Dataset::group_indices(int a) const {
  std::vector<int> idx;
  idx.reserve(A.size());
  for (int i = 0; i < A.size(); ++i)
    if (A[i] == a) idx.push_back(i);
  return idx;
}

void Dataset::validate() const {
  const int nn = n();
  if (nn < 2) raise(ErrorCode::InvariantError, "dataset needs at least 2 rows");
  if (p() < 1) raise(ErrorCode::InvariantError, "dataset needs at least 1 covariate");
  if (A.size() != nn || Y.size() != nn)
    raise(ErrorCode::InvariantError, "X, A, Y row counts disagree");
  if (!X.allFinite() || !Y.allFinite())
    raise(ErrorCode::InvariantError, "non-finite value in X or Y");
  for (int i = 0; i < nn; ++i)
    if (A[i] != 0 && A[i] != 1)
      raise(ErrorCode::InvariantError,
            "treatment must be 0 or 1, got " + std::to_string(A[i]) +
                " at row " + std::to_string(i + 1));
  if (group_count(1) < 1 || group_count(0) < 1)
    raise(ErrorCode::InvariantError, "both treatment groups must be nonempty");
  if (!covariate_names.empty() &&
      covariate_names.size() != static_cast<size_t>(p()))
    raise(ErrorCode::InvariantError, "covariate name count mismatch");
}

Dataset Dataset::subset(const std::vector<int>& rows) const {
  Dataset out;
  const int m = static_cast<int>(rows.size());
  out.X.resize(m, p());
  out.A.resize(m);
  out.Y.resize(m);
  for (int i = 0; i < m; ++i) {
    out.X.row(i) = X.row(rows[i]);
    out.A[i] = A[rows[i]];
    out.Y[i] = Y[rows[i]];
  }
  out.covariate_names = covariate_names;
  out.outcome_name = outcome_name;
  out.treatment_name = treatment_name;
  return out;
}

Dataset Dataset::make(MatrixXd x, VectorXi a, VectorXd y,
                      std::vector<std::string> names) {
  Dataset d;
  d.X = std::move(x);
  d.A = std::move(a);
  d.Y = std::move(y);
  if (names.empty()) {
    for (int j = 0; j < d.p(); ++j)
      names.push_back("x" + std::to_string(j + 1));
  }
  d.covariate_names = std::move(names);
  d.validate();
  return d;
}

Standardized standardize(const VectorXd& v) {
  const int n = static_cast<int>(v.size());
  if (n < 2) raise(ErrorCode::InvalidArgument, "standardize needs length >= 2");
  const double center = v.mean();
  const double ss = (v.array() - center).square().sum();
  const double var = ss / (n - 1);
  if (var <= 0.0)
    raise(ErrorCode::ZeroVariance, "cannot standardize a constant vector");
  Standardized out;
  out.center = center;
  out.scale = std::sqrt(var);
  out.values = (v.array() - center) / out.scale;
  return out;
}

StandardizedPair standardize_pair(const VectorXd& y, const VectorXi& a) {
  const Standardized sy = standardize(y);
  const Standardized sa = standardize(a.cast<double>());
  StandardizedPair out;
  out.y_tilde = sy.values;
  out.a_tilde = sa.values;
  out.y_center = sy.center;
  out.y_scale = sy.scale;
  out.a_center = sa.center;
  out.a_scale = sa.scale;
  return out;
}

namespace {

bool has_both_groups(const Dataset& d, const std::vector<int>& rows) {
  bool treated = false, control = false;
  for (int r : rows) {
    if (d.A[r] == 1) treated = true;
    else control = true;
    if (treated && control) return true;
  }
  return false;
}

}  // namespace

SampleSplit split_sample(const Dataset& d, double fit_fraction, uint64_t seed) {
  d.validate();
  if (!(fit_fraction > 0.0 && fit_fraction < 1.0))
    raise(ErrorCode::InvalidArgument, "fit_fraction must lie in (0, 1)");
  const int n = d.n();
  const int n_fit = static_cast<int>(std::lround(n * fit_fraction));
  const int n_eval = n - n_fit;
  if (n_fit < 2 || n_eval < 2)
    raise(ErrorCode::DegenerateSplit,
          "split leaves fewer than 2 rows on one side");

  Rng rng(derive_seed(seed, 0));
  // Bounded retries; the forest needs treatment variation on the fit side
  // and the weights need both arms on the eval side.
  for (int attempt = 0; attempt < 100; ++attempt) {
    SampleSplit split;
    split.seed = seed;
    split.fit_indices = rng.sample_without_replacement(n, n_fit);
    std::vector<char> in_fit(n, 0);
    for (int r : split.fit_indices) in_fit[r] = 1;
    split.eval_indices.reserve(n_eval);
    for (int i = 0; i < n; ++i)
      if (!in_fit[i]) split.eval_indices.push_back(i);
    if (has_both_groups(d, split.eval_indices) &&
        has_both_groups(d, split.fit_indices))
      return split;
  }
  raise(ErrorCode::DegenerateSplit,
        "no admissible split with both groups on both sides in 100 draws");
}

}  // namespace confbal
