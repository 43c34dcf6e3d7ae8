#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "forest.hpp"

namespace confbal {

enum class GramSource { RandomForest, Gaussian };

/// Symmetric kernel evaluations K(X_i, X_j) over a sample. RandomForest
/// grams have diagonal exactly 1 and every entry an integer multiple of 1/m.
struct GramMatrix {
  MatrixXd values;
  GramSource source = GramSource::RandomForest;
  double bandwidth = 0.0;  // Gaussian only

  int n() const { return static_cast<int>(values.rows()); }
};

/// Fraction of trees in which x1 and x2 share a leaf.
double rf_kernel(const Forest& forest, const VectorXd& x1, const VectorXd& x2);

/// Co-leaf Gram over the rows of X_eval. Built per tree by bucketing rows on
/// leaf id and counting co-occurrences, which matches the pairwise definition
/// exactly while avoiding per-pair routing.
GramMatrix rf_gram(const Forest& forest, const MatrixXd& X_eval);

/// Max-norm difference between the Gram built from the first half of the
/// trees and the full Gram; a cheap check of how settled the kernel is in the
/// tree count.
double rf_gram_stability(const Forest& forest, const MatrixXd& X_eval);

/// exp(-|x_i - x_j|^2 / (2 bandwidth^2)).
GramMatrix gaussian_gram(const MatrixXd& X, double bandwidth);

/// Median pairwise Euclidean distance; exact up to 2000 rows, seeded
/// subsample of 2000 rows beyond that. Throws DegenerateData when 0.
double median_heuristic(const MatrixXd& X, uint64_t seed = 0);

struct PsdCheck {
  bool pass = false;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};

/// Symmetric eigensolve; passes when lambda_min >= -tol * max(lambda_max, 0).
PsdCheck psd_check(const GramMatrix& gram, double tol);

void save_gram_csv(const GramMatrix& gram, const std::string& path);

/// Compact binary cache keyed by (forest hash, eval-data hash).
void save_gram_cache(const GramMatrix& gram, uint64_t forest_key,
                     uint64_t data_key, const std::string& path);
/// Returns false when the file is absent or its keys do not match.
bool load_gram_cache(const std::string& path, uint64_t forest_key,
                     uint64_t data_key, GramMatrix* out);

/// FNV-1a over the raw matrix bytes; pairs with forest_hash for cache keys.
uint64_t matrix_hash(const MatrixXd& m);

}  // namespace confbal
