#pragma once

#include <string>
#include <vector>

#include "dataset.hpp"

namespace confbal {

/// |weighted mean gap| / pooled sd. The pooled sd always uses the unweighted
/// group variances so before/after values share a yardstick. Pass no weights
/// for the unweighted (before) value. Throws ZeroPooledSd when both group
/// variances vanish.
double smd(const VectorXd& x_col, const VectorXi& A,
           const VectorXd* weights = nullptr);

struct BalanceRow {
  std::string name;
  double smd_before = 0.0;
  double smd_after = 0.0;
  double reduction = 0.0;
};

struct BalanceReport {
  std::vector<BalanceRow> rows;  // sorted by reduction, descending
};

BalanceReport balance_report(const Dataset& d, const VectorXd& weights);

/// Long-format love-plot rows: (covariate, phase in {before, after}, smd).
struct LovePlotRow {
  std::string name;
  std::string phase;
  double value = 0.0;
};
std::vector<LovePlotRow> love_plot_rows(const BalanceReport& report);

}  // namespace confbal
