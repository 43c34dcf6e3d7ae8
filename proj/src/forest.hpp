#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace confbal {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class ForestMode { DataAdaptive, UniformRandomPartition };

struct ForestParams {
  int num_trees = 1000;
  int mtry = 0;  // 0 = ceil(sqrt(p))
  int min_node = 5;
  int max_depth = -1;  // < 0 = unbounded
  double subsample_fraction = 0.632;
  bool with_replacement = false;
  ForestMode mode = ForestMode::DataAdaptive;
  int uniform_depth = 6;  // k, UniformRandomPartition only
  uint64_t seed = 0;

  int resolved_mtry(int p) const;
  void validate(int p) const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int leaf_id = -1;

  bool is_leaf() const { return feature < 0; }
};

/// One fitted tree. Leaf ids are contiguous 0..leaf_count-1. `subsample`
/// lists the fit rows the tree was grown on (empty in uniform mode, where the
/// structure is data independent).
struct Tree {
  std::vector<TreeNode> nodes;
  uint64_t theta = 0;
  std::vector<int> subsample;
  int leaf_count = 0;

  /// Routes x down the tree: left when x[feature] < threshold, right
  /// otherwise. Total on all of covariate space.
  int leaf_of(const double* x) const;
  int leaf_of(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return leaf_of(x.data());
  }
};

struct Forest {
  std::vector<Tree> trees;
  ForestParams params;
  int p = 0;
  std::vector<std::pair<double, double>> feature_ranges;

  int num_trees() const { return static_cast<int>(trees.size()); }
};

/// Decrease in summed squared error of the joint response from splitting
/// `rows` on feature j at threshold x, with every term divided by the parent
/// row count. Responses is n x r (r = 1 or 2 columns). Throws EmptyChild when
/// one side is empty.
double split_loss(const std::vector<int>& rows, int feature, double threshold,
                  const MatrixXd& responses, const MatrixXd& X);

/// Grows a single tree on a without-replacement subsample of the fit rows.
/// At each node, mtry candidate features are drawn; candidate thresholds are
/// midpoints between consecutive distinct sorted values; the (feature,
/// threshold) pair maximizing the split loss wins, ties resolved toward the
/// lowest feature index and then the lowest threshold. Splitting stops when
/// the node has fewer than 2*min_node rows, the depth limit is reached, no
/// candidate leaves min_node rows on each side, or the best loss is <= 0.
Tree grow_tree(const MatrixXd& X, const MatrixXd& responses,
               const ForestParams& params, uint64_t tree_seed);

/// Data-independent tree: k levels of uniformly random (feature, threshold)
/// splits over the current node box, giving exactly 2^k leaves.
Tree grow_uniform_partition_tree(
    const std::vector<std::pair<double, double>>& feature_ranges, int k,
    uint64_t tree_seed);

/// Grows params.num_trees trees with per-tree seeds derived from params.seed,
/// so the result is identical regardless of thread count or scheduling.
Forest grow_forest(const MatrixXd& X, const MatrixXd& responses,
                   const ForestParams& params);

/// Per-leaf means of `values` over the tree's subsample rows; used for
/// regression predictions (e.g. out-of-bag propensities).
std::vector<double> tree_leaf_means(const Tree& tree, const MatrixXd& X,
                                    const VectorXd& values);

void save_forest(const Forest& forest, const std::string& path);
Forest load_forest(const std::string& path);

/// FNV-1a over the serialized forest; used to key the Gram cache.
uint64_t forest_hash(const Forest& forest);

}  // namespace confbal
