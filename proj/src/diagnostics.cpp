#include "diagnostics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rng.hpp"
#include "stats.hpp"

namespace confbal {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Welch two-sample t: |t| and its two-sided p. NaN stat when undefined.
std::pair<double, double> welch_t(const VectorXd& x,
                                  const std::vector<int>& group) {
  double sum[2] = {0, 0}, count[2] = {0, 0};
  const int n = static_cast<int>(x.size());
  for (int i = 0; i < n; ++i) {
    sum[group[i]] += x[i];
    count[group[i]] += 1;
  }
  if (count[0] < 3 || count[1] < 3) return {kNaN, kNaN};
  const double mean0 = sum[0] / count[0], mean1 = sum[1] / count[1];
  double ss[2] = {0, 0};
  for (int i = 0; i < n; ++i) {
    const double c = group[i] == 0 ? mean0 : mean1;
    ss[group[i]] += (x[i] - c) * (x[i] - c);
  }
  const double v0 = ss[0] / (count[0] - 1), v1 = ss[1] / (count[1] - 1);
  const double se2 = v0 / count[0] + v1 / count[1];
  if (!(se2 > 0.0)) return {kNaN, kNaN};
  const double t = (mean1 - mean0) / std::sqrt(se2);
  const double df =
      se2 * se2 / (v0 * v0 / (count[0] * count[0] * (count[0] - 1)) +
                   v1 * v1 / (count[1] * count[1] * (count[1] - 1)));
  return {std::fabs(t), student_t_two_sided_p(t, df)};
}

/// Pearson chi-squared independence test of a discrete covariate against a
/// binary grouping; returns (sqrt(chi2), p). NaN when df would be 0.
std::pair<double, double> chi_squared_stat(const VectorXd& x,
                                           const std::vector<int>& group) {
  std::map<double, std::array<double, 2>> table;
  const int n = static_cast<int>(x.size());
  double col_total[2] = {0, 0};
  for (int i = 0; i < n; ++i) {
    auto& cells = table.try_emplace(x[i], std::array<double, 2>{0, 0}).first->second;
    cells[group[i]] += 1;
    col_total[group[i]] += 1;
  }
  const int rows = static_cast<int>(table.size());
  if (rows < 2 || col_total[0] == 0 || col_total[1] == 0) return {kNaN, kNaN};
  double chi2 = 0.0;
  for (const auto& [value, cells] : table) {
    const double row_total = cells[0] + cells[1];
    for (int c = 0; c < 2; ++c) {
      const double expected = row_total * col_total[c] / n;
      const double diff = cells[c] - expected;
      chi2 += diff * diff / expected;
    }
  }
  const double df = rows - 1;  // columns fixed at 2
  return {std::sqrt(chi2), chi_squared_sf(chi2, df)};
}

int distinct_count(const VectorXd& x, int cap) {
  std::set<double> seen;
  for (int i = 0; i < x.size(); ++i) {
    seen.insert(x[i]);
    if (static_cast<int>(seen.size()) > cap) break;
  }
  return static_cast<int>(seen.size());
}

}  // namespace

AssociationReport association_stats(const Dataset& d, int discrete_threshold) {
  d.validate();
  const int n = d.n();

  std::vector<int> by_treatment(n);
  for (int i = 0; i < n; ++i) by_treatment[i] = d.A[i];

  // The outcome axis needs a two-valued outcome to group on.
  std::set<double> outcome_values(d.Y.data(), d.Y.data() + n);
  const bool outcome_binary = outcome_values.size() == 2;
  std::vector<int> by_outcome(n, 0);
  if (outcome_binary) {
    const double hi = *outcome_values.rbegin();
    for (int i = 0; i < n; ++i) by_outcome[i] = d.Y[i] == hi ? 1 : 0;
  }

  AssociationReport report;
  for (int j = 0; j < d.p(); ++j) {
    AssociationRow row;
    row.name = d.covariate_names[j];
    const VectorXd col = d.X.col(j);
    const bool discrete =
        distinct_count(col, discrete_threshold) <= discrete_threshold;
    row.kind = discrete ? "discrete" : "continuous";
    auto run = [&](const std::vector<int>& group) {
      return discrete ? chi_squared_stat(col, group) : welch_t(col, group);
    };
    std::tie(row.stat_treatment, row.p_treatment) = run(by_treatment);
    if (outcome_binary)
      std::tie(row.stat_outcome, row.p_outcome) = run(by_outcome);
    else
      row.stat_outcome = row.p_outcome = kNaN;
    report.rows.push_back(std::move(row));
  }
  return report;
}

BootstrapResult bootstrap_se(
    const Dataset& d, Method method, int B, uint64_t base_seed,
    const EstimateConfig& config,
    const std::vector<std::vector<int>>* resample_override) {
  d.validate();
  if (B < 2) raise(ErrorCode::InvalidArgument, "bootstrap needs B >= 2");
  if (resample_override && static_cast<int>(resample_override->size()) != B)
    raise(ErrorCode::InvalidArgument, "override must supply B resamples");

  const int n = d.n();
  std::vector<double> estimates(B, kNaN);
  bool degenerate = false;

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (int b = 0; b < B; ++b) {
    try {
      std::vector<int> rows;
      if (resample_override) {
        rows = (*resample_override)[b];
      } else {
        Rng rng(derive_seed(base_seed, 7000 + static_cast<uint64_t>(b)));
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
          rows = rng.sample_with_replacement(n, n);
          bool treated = false, control = false;
          for (int r : rows) (d.A[r] == 1 ? treated : control) = true;
          ok = treated && control;
        }
        if (!ok) {
          degenerate = true;
          continue;
        }
      }
      const Dataset resampled = d.subset(rows);
      EstimateConfig rep_config = config;
      rep_config.seed = derive_seed(base_seed, 9000 + static_cast<uint64_t>(b));
      estimates[b] = estimate_ate(resampled, method, rep_config).tau_hat;
    } catch (const Error&) {
      // Flagged by the NaN slot; aggregation below decides whether enough
      // resamples survived.
    }
  }
  if (degenerate)
    raise(ErrorCode::ResampleDegenerate,
          "no resample with both groups in 100 draws");

  BootstrapResult out;
  std::vector<double> valid;
  for (double e : estimates)
    if (!std::isnan(e)) valid.push_back(e);
  if (valid.size() < 2)
    raise(ErrorCode::DegenerateData, "fewer than 2 bootstrap estimates succeeded");
  const double mean =
      std::accumulate(valid.begin(), valid.end(), 0.0) / valid.size();
  double ss = 0.0;
  for (double e : valid) ss += (e - mean) * (e - mean);
  out.se = std::sqrt(ss / (valid.size() - 1));
  out.estimates = std::move(estimates);
  return out;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    raise(ErrorCode::InvalidArgument, "spearman needs two equal-length vectors");
  auto ranks = [](const std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int i, int j) { return v[i] < v[j]; });
    std::vector<double> rank(n);
    int i = 0;
    while (i < n) {
      int j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * (i + j) + 1.0;
      for (int k = i; k <= j; ++k) rank[order[k]] = avg;
      i = j + 1;
    }
    return rank;
  };
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const int n = static_cast<int>(a.size());
  double mean_a = 0, mean_b = 0;
  for (int i = 0; i < n; ++i) {
    mean_a += ra[i];
    mean_b += rb[i];
  }
  mean_a /= n;
  mean_b /= n;
  double num = 0, va = 0, vb = 0;
  for (int i = 0; i < n; ++i) {
    num += (ra[i] - mean_a) * (rb[i] - mean_b);
    va += (ra[i] - mean_a) * (ra[i] - mean_a);
    vb += (rb[i] - mean_b) * (rb[i] - mean_b);
  }
  if (!(va > 0.0) || !(vb > 0.0))
    raise(ErrorCode::DegenerateData, "constant ranks in spearman");
  return num / std::sqrt(va * vb);
}

}  // namespace confbal
