#include "kernel.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "csv.hpp"
#include "rng.hpp"

namespace confbal {

double rf_kernel(const Forest& forest, const VectorXd& x1, const VectorXd& x2) {
  if (x1.size() != forest.p || x2.size() != forest.p)
    raise(ErrorCode::InvalidArgument, "point dimension does not match forest");
  if (!x1.allFinite() || !x2.allFinite())
    raise(ErrorCode::InvalidArgument, "non-finite point");
  int together = 0;
  for (const Tree& tree : forest.trees)
    together += (tree.leaf_of(x1.data()) == tree.leaf_of(x2.data()));
  return static_cast<double>(together) / forest.num_trees();
}

namespace {

/// Accumulates co-leaf counts for trees [t_begin, t_end) into `counts`
/// (upper triangle only).
void accumulate_counts(const Forest& forest, const MatrixXd& X_eval,
                       int t_begin, int t_end,
                       std::vector<uint32_t>& counts) {
  const int n = static_cast<int>(X_eval.rows());
  std::vector<int> leaf(n);
  std::vector<std::vector<int>> buckets;
  for (int t = t_begin; t < t_end; ++t) {
    const Tree& tree = forest.trees[t];
    buckets.assign(tree.leaf_count, {});
    for (int i = 0; i < n; ++i) {
      leaf[i] = tree.leaf_of(X_eval.row(i));
      buckets[leaf[i]].push_back(i);
    }
    for (const auto& bucket : buckets) {
      const int b = static_cast<int>(bucket.size());
      for (int u = 0; u < b; ++u)
        for (int v = u + 1; v < b; ++v)
          counts[static_cast<size_t>(bucket[u]) * n + bucket[v]] += 1;
    }
  }
}

GramMatrix counts_to_gram(const std::vector<uint32_t>& counts, int n, int m) {
  GramMatrix gram;
  gram.source = GramSource::RandomForest;
  gram.values.resize(n, n);
  for (int i = 0; i < n; ++i) {
    gram.values(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      const double v =
          static_cast<double>(counts[static_cast<size_t>(i) * n + j]) / m;
      gram.values(i, j) = v;
      gram.values(j, i) = v;
    }
  }
  return gram;
}

std::vector<uint32_t> coleaf_counts(const Forest& forest,
                                    const MatrixXd& X_eval, int t_begin,
                                    int t_end) {
  const int n = static_cast<int>(X_eval.rows());
  std::vector<uint32_t> counts(static_cast<size_t>(n) * n, 0);
#ifdef _OPENMP
#pragma omp parallel
  {
    std::vector<uint32_t> local(static_cast<size_t>(n) * n, 0);
#pragma omp for schedule(dynamic) nowait
    for (int t = t_begin; t < t_end; ++t)
      accumulate_counts(forest, X_eval, t, t + 1, local);
#pragma omp critical
    {
      for (size_t k = 0; k < counts.size(); ++k) counts[k] += local[k];
    }
  }
#else
  accumulate_counts(forest, X_eval, t_begin, t_end, counts);
#endif
  return counts;
}

}  // namespace

GramMatrix rf_gram(const Forest& forest, const MatrixXd& X_eval) {
  if (X_eval.cols() != forest.p)
    raise(ErrorCode::InvalidArgument, "eval dimension does not match forest");
  if (!X_eval.allFinite())
    raise(ErrorCode::InvalidArgument, "non-finite eval row");
  const int n = static_cast<int>(X_eval.rows());
  if (n < 1) raise(ErrorCode::InvalidArgument, "empty eval set");
  const std::vector<uint32_t> counts =
      coleaf_counts(forest, X_eval, 0, forest.num_trees());
  return counts_to_gram(counts, n, forest.num_trees());
}

double rf_gram_stability(const Forest& forest, const MatrixXd& X_eval) {
  const int m = forest.num_trees();
  if (m < 2) return 0.0;
  const int half = m / 2;
  std::vector<uint32_t> first = coleaf_counts(forest, X_eval, 0, half);
  std::vector<uint32_t> rest = coleaf_counts(forest, X_eval, half, m);
  double max_diff = 0.0;
  for (size_t k = 0; k < first.size(); ++k) {
    const double g_half = static_cast<double>(first[k]) / half;
    const double g_full = static_cast<double>(first[k] + rest[k]) / m;
    max_diff = std::max(max_diff, std::fabs(g_half - g_full));
  }
  return max_diff;
}

GramMatrix gaussian_gram(const MatrixXd& X, double bandwidth) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
    raise(ErrorCode::InvalidBandwidth, "bandwidth must be positive and finite");
  const int n = static_cast<int>(X.rows());
  GramMatrix gram;
  gram.source = GramSource::Gaussian;
  gram.bandwidth = bandwidth;
  gram.values.resize(n, n);
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  for (int i = 0; i < n; ++i) {
    gram.values(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      const double d2 = (X.row(i) - X.row(j)).squaredNorm();
      const double v = std::exp(-d2 * inv);
      gram.values(i, j) = v;
      gram.values(j, i) = v;
    }
  }
  return gram;
}

double median_heuristic(const MatrixXd& X, uint64_t seed) {
  const int n = static_cast<int>(X.rows());
  if (n < 2) raise(ErrorCode::InvalidArgument, "median heuristic needs n >= 2");

  std::vector<int> rows;
  if (n <= 2000) {
    rows.resize(n);
    for (int i = 0; i < n; ++i) rows[i] = i;
  } else {
    Rng rng(derive_seed(seed, 0xB4D));
    rows = rng.sample_without_replacement(n, 2000);
  }
  const int k = static_cast<int>(rows.size());
  std::vector<double> dists;
  dists.reserve(static_cast<size_t>(k) * (k - 1) / 2);
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j)
      dists.push_back((X.row(rows[i]) - X.row(rows[j])).norm());

  const size_t count = dists.size();
  const size_t mid = count / 2;
  std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
  double median = dists[mid];
  if (count % 2 == 0) {
    const double lower =
        *std::max_element(dists.begin(), dists.begin() + mid);
    median = 0.5 * (lower + median);
  }
  if (!(median > 0.0))
    raise(ErrorCode::DegenerateData, "median pairwise distance is 0");
  return median;
}

PsdCheck psd_check(const GramMatrix& gram, double tol) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(gram.values,
                                                 Eigen::EigenvaluesOnly);
  PsdCheck out;
  out.lambda_min = solver.eigenvalues().minCoeff();
  out.lambda_max = solver.eigenvalues().maxCoeff();
  out.pass = out.lambda_min >= -tol * std::max(out.lambda_max, 0.0);
  return out;
}

void save_gram_csv(const GramMatrix& gram, const std::string& path) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::IoError, "cannot write '" + path + "'");
  const int n = gram.n();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      out << format_double(gram.values(i, j)) << (j + 1 < n ? ',' : '\n');
  }
}

namespace {
constexpr char kGramMagic[8] = {'C', 'B', 'G', 'R', 'A', 'M', '0', '1'};
}

void save_gram_cache(const GramMatrix& gram, uint64_t forest_key,
                     uint64_t data_key, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::IoError, "cannot write '" + path + "'");
  out.write(kGramMagic, sizeof(kGramMagic));
  const uint64_t n = static_cast<uint64_t>(gram.n());
  const uint64_t source = gram.source == GramSource::RandomForest ? 0 : 1;
  out.write(reinterpret_cast<const char*>(&forest_key), 8);
  out.write(reinterpret_cast<const char*>(&data_key), 8);
  out.write(reinterpret_cast<const char*>(&n), 8);
  out.write(reinterpret_cast<const char*>(&source), 8);
  out.write(reinterpret_cast<const char*>(&gram.bandwidth), 8);
  out.write(reinterpret_cast<const char*>(gram.values.data()),
            static_cast<std::streamsize>(sizeof(double) * n * n));
  if (!out) raise(ErrorCode::IoError, "write failed for '" + path + "'");
}

bool load_gram_cache(const std::string& path, uint64_t forest_key,
                     uint64_t data_key, GramMatrix* out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kGramMagic, 8) != 0)
    return false;
  uint64_t fkey = 0, dkey = 0, n = 0, source = 0;
  double bandwidth = 0.0;
  in.read(reinterpret_cast<char*>(&fkey), 8);
  in.read(reinterpret_cast<char*>(&dkey), 8);
  in.read(reinterpret_cast<char*>(&n), 8);
  in.read(reinterpret_cast<char*>(&source), 8);
  in.read(reinterpret_cast<char*>(&bandwidth), 8);
  if (!in || fkey != forest_key || dkey != data_key) return false;
  out->source = source == 0 ? GramSource::RandomForest : GramSource::Gaussian;
  out->bandwidth = bandwidth;
  out->values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  in.read(reinterpret_cast<char*>(out->values.data()),
          static_cast<std::streamsize>(sizeof(double) * n * n));
  return static_cast<bool>(in);
}

uint64_t matrix_hash(const MatrixXd& m) {
  const unsigned char* bytes =
      reinterpret_cast<const unsigned char*>(m.data());
  const size_t len = sizeof(double) * static_cast<size_t>(m.size());
  uint64_t h = 14695981039346656037ULL;
  for (size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace confbal
