#include "balance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace confbal {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

double smd(const VectorXd& x_col, const VectorXi& A, const VectorXd* weights) {
  const int n = static_cast<int>(x_col.size());
  if (A.size() != n)
    raise(ErrorCode::InvalidArgument, "column and A lengths disagree");
  double sum[2] = {0, 0}, count[2] = {0, 0};
  double wsum[2] = {0, 0}, wx[2] = {0, 0};
  for (int i = 0; i < n; ++i) {
    const int a = A[i];
    sum[a] += x_col[i];
    count[a] += 1;
    const double w = weights ? (*weights)[i] : 1.0;
    wsum[a] += w;
    wx[a] += w * x_col[i];
  }
  double mean[2], weighted_mean[2];
  for (int a = 0; a < 2; ++a) {
    if (count[a] < 1)
      raise(ErrorCode::InvalidArgument, "both groups must be nonempty");
    if (!(wsum[a] > 0.0))
      raise(ErrorCode::DegenerateWeights, "group weight sum is not positive");
    mean[a] = sum[a] / count[a];
    weighted_mean[a] = wx[a] / wsum[a];
  }
  double ss[2] = {0, 0};
  for (int i = 0; i < n; ++i) {
    const int a = A[i];
    ss[a] += (x_col[i] - mean[a]) * (x_col[i] - mean[a]);
  }
  double var[2];
  for (int a = 0; a < 2; ++a)
    var[a] = count[a] > 1 ? ss[a] / (count[a] - 1) : 0.0;
  const double pooled = std::sqrt(0.5 * (var[1] + var[0]));
  if (!(pooled > 0.0))
    raise(ErrorCode::ZeroPooledSd, "both group variances are zero");
  return std::fabs(weighted_mean[1] - weighted_mean[0]) / pooled;
}

BalanceReport balance_report(const Dataset& d, const VectorXd& weights) {
  if (weights.size() != d.n())
    raise(ErrorCode::InvalidArgument, "weight length does not match dataset");
  BalanceReport report;
  for (int j = 0; j < d.p(); ++j) {
    BalanceRow row;
    row.name = d.covariate_names[j];
    try {
      row.smd_before = smd(d.X.col(j), d.A, nullptr);
      row.smd_after = smd(d.X.col(j), d.A, &weights);
      row.reduction = row.smd_before - row.smd_after;
    } catch (const Error&) {
      row.smd_before = row.smd_after = row.reduction = kNaN;
    }
    report.rows.push_back(std::move(row));
  }
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const BalanceRow& a, const BalanceRow& b) {
                     if (std::isnan(a.reduction)) return false;
                     if (std::isnan(b.reduction)) return true;
                     return a.reduction > b.reduction;
                   });
  return report;
}

std::vector<LovePlotRow> love_plot_rows(const BalanceReport& report) {
  std::vector<LovePlotRow> rows;
  for (const auto& r : report.rows) {
    rows.push_back({r.name, "before", r.smd_before});
    rows.push_back({r.name, "after", r.smd_after});
  }
  return rows;
}

}  // namespace confbal
