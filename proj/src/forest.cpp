#include "forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "csv.hpp"
#include "rng.hpp"

namespace confbal {

int ForestParams::resolved_mtry(int p) const {
  if (mtry > 0) return std::min(mtry, p);
  return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p))));
}

void ForestParams::validate(int p) const {
  if (num_trees < 1) raise(ErrorCode::InvalidArgument, "num_trees must be >= 1");
  if (mtry < 0 || mtry > p)
    raise(ErrorCode::InvalidArgument, "mtry must lie in [1, p] (0 = auto)");
  if (min_node < 1) raise(ErrorCode::InvalidArgument, "min_node must be >= 1");
  if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0))
    raise(ErrorCode::InvalidArgument, "subsample_fraction must lie in (0, 1]");
  if (mode == ForestMode::UniformRandomPartition && uniform_depth < 1)
    raise(ErrorCode::InvalidArgument, "uniform partition depth must be >= 1");
}

int Tree::leaf_of(const double* x) const {
  int idx = 0;
  while (!nodes[idx].is_leaf())
    idx = (x[nodes[idx].feature] < nodes[idx].threshold) ? nodes[idx].left
                                                         : nodes[idx].right;
  return nodes[idx].leaf_id;
}

namespace {

struct ResponseSums {
  double sum[2] = {0.0, 0.0};
  double sum_sq[2] = {0.0, 0.0};
  int count = 0;

  void add(const MatrixXd& responses, int row) {
    for (int r = 0; r < responses.cols(); ++r) {
      const double v = responses(row, r);
      sum[r] += v;
      sum_sq[r] += v * v;
    }
    ++count;
  }

  /// Summed squared deviation from the mean, over all response columns.
  double sse(int r_cols) const {
    if (count == 0) return 0.0;
    double total = 0.0;
    for (int r = 0; r < r_cols; ++r)
      total += sum_sq[r] - sum[r] * sum[r] / count;
    return total;
  }
};

struct BestSplit {
  double loss = 0.0;
  int feature = -1;
  double threshold = 0.0;

  bool found() const { return feature >= 0; }
};

/// Scans midpoint thresholds of one feature with prefix sums. Candidates must
/// leave at least min_node rows on each side. Returns the best strict
/// improvement over `best` (iteration order handles ties).
void scan_feature(const std::vector<int>& rows,
                  std::vector<std::pair<double, int>>& scratch, int feature,
                  const MatrixXd& X, const MatrixXd& responses,
                  const ResponseSums& parent, int min_node, BestSplit* best) {
  const int n = static_cast<int>(rows.size());
  const int r_cols = static_cast<int>(responses.cols());
  scratch.clear();
  scratch.reserve(n);
  for (int row : rows) scratch.emplace_back(X(row, feature), row);
  std::sort(scratch.begin(), scratch.end());

  const double parent_sse = parent.sse(r_cols);
  ResponseSums left;
  for (int k = 0; k < n - 1; ++k) {
    left.add(responses, scratch[k].second);
    if (scratch[k].first == scratch[k + 1].first) continue;
    const int n_left = k + 1;
    const int n_right = n - n_left;
    if (n_left < min_node || n_right < min_node) continue;
    const double threshold = 0.5 * (scratch[k].first + scratch[k + 1].first);

    double right_sse = 0.0;
    for (int r = 0; r < r_cols; ++r) {
      const double rs = parent.sum[r] - left.sum[r];
      right_sse += (parent.sum_sq[r] - left.sum_sq[r]) - rs * rs / n_right;
    }
    const double loss = (parent_sse - left.sse(r_cols) - right_sse) / n;
    // Strict improvement plus ascending iteration order implements the
    // lowest-feature-then-lowest-threshold tie break.
    if (loss > best->loss) {
      best->loss = loss;
      best->feature = feature;
      best->threshold = threshold;
    }
  }
}

struct GrowFrame {
  int node = 0;
  int begin = 0;
  int end = 0;
  int depth = 0;
};

}  // namespace

double split_loss(const std::vector<int>& rows, int feature, double threshold,
                  const MatrixXd& responses, const MatrixXd& X) {
  const int r_cols = static_cast<int>(responses.cols());
  ResponseSums parent, left, right;
  for (int row : rows) {
    parent.add(responses, row);
    if (X(row, feature) < threshold) left.add(responses, row);
    else right.add(responses, row);
  }
  if (left.count == 0 || right.count == 0)
    raise(ErrorCode::EmptyChild, "threshold leaves an empty child");
  return (parent.sse(r_cols) - left.sse(r_cols) - right.sse(r_cols)) /
         parent.count;
}

Tree grow_tree(const MatrixXd& X, const MatrixXd& responses,
               const ForestParams& params, uint64_t tree_seed) {
  const int n_fit = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (n_fit < 1) raise(ErrorCode::InvalidArgument, "empty fit data");
  if (responses.rows() != n_fit || responses.cols() < 1 || responses.cols() > 2)
    raise(ErrorCode::InvalidArgument, "responses must be n x 1 or n x 2");

  Rng rng(derive_seed(params.seed, tree_seed));
  Tree tree;
  tree.theta = tree_seed;

  const int n_sub = std::max(
      1, static_cast<int>(std::lround(params.subsample_fraction * n_fit)));
  tree.subsample = params.with_replacement
                       ? rng.sample_with_replacement(n_fit, n_sub)
                       : rng.sample_without_replacement(n_fit, n_sub);
  if (params.with_replacement)
    std::sort(tree.subsample.begin(), tree.subsample.end());

  const int mtry = params.resolved_mtry(p);
  std::vector<int> rows = tree.subsample;
  std::vector<int> node_rows;
  std::vector<std::pair<double, int>> scratch;

  tree.nodes.emplace_back();
  std::vector<GrowFrame> stack;
  stack.push_back({0, 0, static_cast<int>(rows.size()), 0});

  while (!stack.empty()) {
    const GrowFrame frame = stack.back();
    stack.pop_back();
    const int size = frame.end - frame.begin;

    bool make_leaf = size < 2 * params.min_node;
    if (params.max_depth >= 0 && frame.depth >= params.max_depth)
      make_leaf = true;

    BestSplit best;
    if (!make_leaf) {
      node_rows.assign(rows.begin() + frame.begin, rows.begin() + frame.end);
      ResponseSums parent;
      for (int row : node_rows) parent.add(responses, row);

      std::vector<int> features = rng.sample_without_replacement(p, mtry);
      for (int j : features)
        scan_feature(node_rows, scratch, j, X, responses, parent,
                     params.min_node, &best);
      if (!best.found() || !(best.loss > 0.0)) make_leaf = true;
    }

    if (make_leaf) {
      tree.nodes[frame.node].leaf_id = tree.leaf_count++;
      continue;
    }

    const auto mid = std::stable_partition(
        rows.begin() + frame.begin, rows.begin() + frame.end,
        [&](int row) { return X(row, best.feature) < best.threshold; });
    const int split_at = static_cast<int>(mid - rows.begin());

    const int left_child = static_cast<int>(tree.nodes.size());
    const int right_child = left_child + 1;
    {
      TreeNode& node = tree.nodes[frame.node];
      node.feature = best.feature;
      node.threshold = best.threshold;
      node.left = left_child;
      node.right = right_child;
    }
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    // Right child first so leaves come out in left-to-right order.
    stack.push_back({right_child, split_at, frame.end, frame.depth + 1});
    stack.push_back({left_child, frame.begin, split_at, frame.depth + 1});
  }
  return tree;
}

Tree grow_uniform_partition_tree(
    const std::vector<std::pair<double, double>>& feature_ranges, int k,
    uint64_t tree_seed) {
  const int p = static_cast<int>(feature_ranges.size());
  if (p < 1) raise(ErrorCode::InvalidArgument, "no feature ranges");
  if (k < 1) raise(ErrorCode::InvalidArgument, "depth k must be >= 1");
  for (const auto& [lo, hi] : feature_ranges)
    if (!(hi > lo))
      raise(ErrorCode::InvalidArgument, "feature range must have max > min");

  Rng rng(tree_seed);
  Tree tree;
  tree.theta = tree_seed;
  tree.nodes.emplace_back();

  struct Frame {
    int node;
    int depth;
    std::vector<std::pair<double, double>> box;
  };
  std::vector<Frame> stack;
  stack.push_back({0, 0, feature_ranges});

  while (!stack.empty()) {
    Frame frame = std::move(stack.back());
    stack.pop_back();
    if (frame.depth == k) {
      tree.nodes[frame.node].leaf_id = tree.leaf_count++;
      continue;
    }
    const int feature = rng.uniform_int(p);
    const auto [lo, hi] = frame.box[feature];
    const double threshold = rng.uniform(lo, hi);

    const int left_child = static_cast<int>(tree.nodes.size());
    const int right_child = left_child + 1;
    {
      TreeNode& node = tree.nodes[frame.node];
      node.feature = feature;
      node.threshold = threshold;
      node.left = left_child;
      node.right = right_child;
    }
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();

    Frame right_frame{right_child, frame.depth + 1, frame.box};
    right_frame.box[feature].first = threshold;
    Frame left_frame{left_child, frame.depth + 1, std::move(frame.box)};
    left_frame.box[feature].second = threshold;
    stack.push_back(std::move(right_frame));
    stack.push_back(std::move(left_frame));
  }
  return tree;
}

Forest grow_forest(const MatrixXd& X, const MatrixXd& responses,
                   const ForestParams& params) {
  const int p = static_cast<int>(X.cols());
  params.validate(p);
  if (X.rows() < 1) raise(ErrorCode::InvalidArgument, "empty fit data");

  Forest forest;
  forest.params = params;
  forest.p = p;
  forest.feature_ranges.resize(p);
  for (int j = 0; j < p; ++j)
    forest.feature_ranges[j] = {X.col(j).minCoeff(), X.col(j).maxCoeff()};

  forest.trees.resize(params.num_trees);
  if (params.mode == ForestMode::UniformRandomPartition) {
    for (auto& [lo, hi] : forest.feature_ranges)
      if (!(hi > lo)) hi = lo + 1.0;  // constant feature: unit box
  }

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (int t = 0; t < params.num_trees; ++t) {
    const uint64_t tree_seed = derive_seed(params.seed, static_cast<uint64_t>(t) + 1);
    if (params.mode == ForestMode::DataAdaptive)
      forest.trees[t] = grow_tree(X, responses, params, tree_seed);
    else
      forest.trees[t] = grow_uniform_partition_tree(
          forest.feature_ranges, params.uniform_depth, tree_seed);
  }
  return forest;
}

std::vector<double> tree_leaf_means(const Tree& tree, const MatrixXd& X,
                                    const VectorXd& values) {
  std::vector<double> sums(tree.leaf_count, 0.0);
  std::vector<int> counts(tree.leaf_count, 0);
  for (int row : tree.subsample) {
    const int leaf = tree.leaf_of(X.row(row));
    sums[leaf] += values[row];
    counts[leaf] += 1;
  }
  for (int l = 0; l < tree.leaf_count; ++l)
    sums[l] = counts[l] > 0 ? sums[l] / counts[l]
                            : std::numeric_limits<double>::quiet_NaN();
  return sums;
}

// --- serialization ---------------------------------------------------------

static const char kForestMagic[] = "CONFBAL_FOREST";
static const int kForestVersion = 1;

void save_forest(const Forest& forest, const std::string& path) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::IoError, "cannot write '" + path + "'");
  out << kForestMagic << ' ' << kForestVersion << '\n';
  const ForestParams& pr = forest.params;
  out << "params " << pr.num_trees << ' ' << pr.mtry << ' ' << pr.min_node
      << ' ' << pr.max_depth << ' ' << format_double(pr.subsample_fraction)
      << ' ' << (pr.with_replacement ? 1 : 0) << ' '
      << (pr.mode == ForestMode::DataAdaptive ? "adaptive" : "uniform") << ' '
      << pr.uniform_depth << ' ' << pr.seed << '\n';
  out << "features " << forest.p << '\n';
  for (const auto& [lo, hi] : forest.feature_ranges)
    out << format_double(lo) << ' ' << format_double(hi) << '\n';
  for (const Tree& tree : forest.trees) {
    out << "tree " << tree.theta << ' ' << tree.nodes.size() << ' '
        << tree.leaf_count << ' ' << tree.subsample.size() << '\n';
    for (const TreeNode& node : tree.nodes) {
      if (node.is_leaf())
        out << "L " << node.leaf_id << '\n';
      else
        out << "I " << node.feature << ' ' << format_double(node.threshold)
            << ' ' << node.left << ' ' << node.right << '\n';
    }
    for (size_t i = 0; i < tree.subsample.size(); ++i)
      out << tree.subsample[i] << (i + 1 < tree.subsample.size() ? ' ' : '\n');
    if (tree.subsample.empty()) out << '\n';
  }
  if (!out) raise(ErrorCode::IoError, "write failed for '" + path + "'");
}

Forest load_forest(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoError, "cannot open '" + path + "'");
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kForestMagic || version != kForestVersion)
    raise(ErrorCode::ParseError, "'" + path + "' is not a forest file");

  Forest forest;
  std::string tag, mode;
  int with_replacement = 0;
  in >> tag;
  if (tag != "params") raise(ErrorCode::ParseError, "missing params block");
  ForestParams& pr = forest.params;
  in >> pr.num_trees >> pr.mtry >> pr.min_node >> pr.max_depth >>
      pr.subsample_fraction >> with_replacement >> mode >> pr.uniform_depth >>
      pr.seed;
  pr.with_replacement = with_replacement != 0;
  pr.mode = (mode == "adaptive") ? ForestMode::DataAdaptive
                                 : ForestMode::UniformRandomPartition;
  in >> tag >> forest.p;
  if (tag != "features" || forest.p < 1)
    raise(ErrorCode::ParseError, "missing features block");
  forest.feature_ranges.resize(forest.p);
  for (auto& [lo, hi] : forest.feature_ranges) in >> lo >> hi;

  forest.trees.reserve(pr.num_trees);
  for (int t = 0; t < pr.num_trees; ++t) {
    in >> tag;
    if (tag != "tree") raise(ErrorCode::ParseError, "missing tree block");
    Tree tree;
    size_t n_nodes = 0, n_sub = 0;
    in >> tree.theta >> n_nodes >> tree.leaf_count >> n_sub;
    tree.nodes.resize(n_nodes);
    for (auto& node : tree.nodes) {
      std::string kind;
      in >> kind;
      if (kind == "L") {
        in >> node.leaf_id;
      } else if (kind == "I") {
        in >> node.feature >> node.threshold >> node.left >> node.right;
      } else {
        raise(ErrorCode::ParseError, "bad node record");
      }
    }
    tree.subsample.resize(n_sub);
    for (auto& row : tree.subsample) in >> row;
    forest.trees.push_back(std::move(tree));
  }
  if (!in) raise(ErrorCode::ParseError, "truncated forest file '" + path + "'");
  return forest;
}

uint64_t forest_hash(const Forest& forest) {
  std::ostringstream buffer;
  buffer << forest.p << '|' << forest.params.seed << '|'
         << forest.params.num_trees;
  for (const Tree& tree : forest.trees) {
    buffer << "|t" << tree.theta << ':' << tree.leaf_count;
    for (const TreeNode& node : tree.nodes) {
      if (node.is_leaf()) buffer << 'L' << node.leaf_id;
      else
        buffer << 'I' << node.feature << ',' << format_double(node.threshold)
               << ',' << node.left << ',' << node.right;
    }
  }
  const std::string text = buffer.str();
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace confbal
