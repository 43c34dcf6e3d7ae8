#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <vector>

#include "dataset.hpp"
#include "doctest.h"
#include "forest.hpp"
#include "rng.hpp"

using namespace confbal;

namespace {

std::string serialize_to_string(const Forest& forest) {
  const std::string path =
      (std::filesystem::temp_directory_path() / "confbal_forest_cmp.txt")
          .string();
  save_forest(forest, path);
  std::ifstream in(path);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

/// Two-pass SSE: means first, then squared deviations. Independent of the
/// prefix-sum path inside the library.
double two_pass_joint_sse(const std::vector<int>& rows,
                          const MatrixXd& responses) {
  double total = 0.0;
  for (int r = 0; r < responses.cols(); ++r) {
    double mean = 0.0;
    for (int row : rows) mean += responses(row, r);
    mean /= rows.size();
    for (int row : rows)
      total += (responses(row, r) - mean) * (responses(row, r) - mean);
  }
  return total;
}

ForestParams exhaustive_params(uint64_t seed) {
  ForestParams params;
  params.num_trees = 1;
  params.min_node = 1;
  params.subsample_fraction = 1.0;
  params.seed = seed;
  return params;
}

}  // namespace

TEST_CASE("split_loss reproduces the two-row hand computation") {
  MatrixXd X(2, 1);
  X << 0.0, 1.0;
  MatrixXd R(2, 2);
  R << -1.0, -1.0, 1.0, 1.0;  // (Y~, A~) rows
  const double loss = split_loss({0, 1}, 0, 0.5, R, X);
  CHECK(loss == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("split_loss is zero for constant responses") {
  MatrixXd X(4, 1);
  X << 0.0, 1.0, 2.0, 3.0;
  MatrixXd R = MatrixXd::Constant(4, 2, 0.3);
  CHECK(split_loss({0, 1, 2, 3}, 0, 1.5, R, X) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("split_loss raises EmptyChild for a one-sided threshold") {
  MatrixXd X(3, 1);
  X << 0.0, 1.0, 2.0;
  MatrixXd R = MatrixXd::Random(3, 2);
  try {
    split_loss({0, 1, 2}, 0, -5.0, R, X);
    FAIL("expected EmptyChild");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyChild);
  }
}

TEST_CASE("split_loss equals the two-pass SSE drop over node size") {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 5 + static_cast<int>(gen() % 40);
    MatrixXd X(n, 3);
    MatrixXd R(n, 2);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 3; ++j) X(i, j) = normal(gen);
      R(i, 0) = normal(gen);
      R(i, 1) = normal(gen);
    }
    std::vector<int> rows(n);
    for (int i = 0; i < n; ++i) rows[i] = i;
    const int feature = static_cast<int>(gen() % 3);
    // Random midpoint threshold with both sides nonempty.
    std::vector<double> values;
    for (int i = 0; i < n; ++i) values.push_back(X(i, feature));
    std::sort(values.begin(), values.end());
    const int cut = 1 + static_cast<int>(gen() % (n - 1));
    if (values[cut - 1] == values[cut]) continue;
    const double threshold = 0.5 * (values[cut - 1] + values[cut]);

    std::vector<int> left, right;
    for (int i = 0; i < n; ++i)
      (X(i, feature) < threshold ? left : right).push_back(i);
    const double expected = (two_pass_joint_sse(rows, R) -
                             two_pass_joint_sse(left, R) -
                             two_pass_joint_sse(right, R)) /
                            n;
    CHECK(split_loss(rows, feature, threshold, R, X) ==
          doctest::Approx(expected).epsilon(1e-9));
    CHECK(split_loss(rows, feature, threshold, R, X) >= -1e-12);
  }
}

TEST_CASE("grow_tree splits step responses at the adjacent midpoint") {
  const int n = 10;
  MatrixXd X(n, 1);
  VectorXd y_raw(n);
  VectorXi a_raw(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 0.1 * (i + 1);  // 0.1 .. 1.0
    const bool high = X(i, 0) > 0.5;
    y_raw[i] = high ? 1.0 : 0.0;
    a_raw[i] = high ? 1 : 0;
  }
  const StandardizedPair pair = standardize_pair(y_raw, a_raw);
  MatrixXd R(n, 2);
  R.col(0) = pair.y_tilde;
  R.col(1) = pair.a_tilde;

  const Tree tree = grow_tree(X, R, exhaustive_params(5), 1);
  REQUIRE(!tree.nodes[0].is_leaf());
  CHECK(tree.nodes[0].feature == 0);
  CHECK(tree.nodes[0].threshold == doctest::Approx(0.55).epsilon(1e-12));
}

TEST_CASE("grow_tree with min_node = n gives a single leaf") {
  MatrixXd X = MatrixXd::Random(12, 2);
  MatrixXd R = MatrixXd::Random(12, 2);
  ForestParams params = exhaustive_params(3);
  params.min_node = 12;
  const Tree tree = grow_tree(X, R, params, 1);
  CHECK(tree.nodes.size() == 1);
  CHECK(tree.leaf_count == 1);
  CHECK(tree.nodes[0].leaf_id == 0);
}

TEST_CASE("grow_tree picks the argmax of split_loss over all candidates") {
  std::mt19937_64 gen(23);
  std::normal_distribution<double> normal;
  const int n = 25;
  MatrixXd X(n, 2);
  MatrixXd R(n, 2);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = normal(gen);
    X(i, 1) = normal(gen);
    R(i, 0) = normal(gen);
    R(i, 1) = normal(gen);
  }
  ForestParams params = exhaustive_params(9);
  params.mtry = 2;  // consider every feature
  const Tree tree = grow_tree(X, R, params, 4);
  REQUIRE(!tree.nodes[0].is_leaf());

  // Enumerate every (feature, midpoint) by brute force.
  std::vector<int> rows(n);
  for (int i = 0; i < n; ++i) rows[i] = i;
  double best = 0.0;
  for (int j = 0; j < 2; ++j) {
    std::vector<double> values;
    for (int i = 0; i < n; ++i) values.push_back(X(i, j));
    std::sort(values.begin(), values.end());
    for (int k = 0; k + 1 < n; ++k) {
      if (values[k] == values[k + 1]) continue;
      best = std::max(best,
                      split_loss(rows, j, 0.5 * (values[k] + values[k + 1]),
                                 R, X));
    }
  }
  const double chosen =
      split_loss(rows, tree.nodes[0].feature, tree.nodes[0].threshold, R, X);
  CHECK(chosen == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("grow_tree is deterministic in its seeds") {
  MatrixXd X = MatrixXd::Random(40, 3);
  MatrixXd R = MatrixXd::Random(40, 2);
  ForestParams params;
  params.min_node = 2;
  params.seed = 77;
  const Tree t1 = grow_tree(X, R, params, 5);
  const Tree t2 = grow_tree(X, R, params, 5);
  REQUIRE(t1.nodes.size() == t2.nodes.size());
  for (size_t i = 0; i < t1.nodes.size(); ++i) {
    CHECK(t1.nodes[i].feature == t2.nodes[i].feature);
    CHECK(t1.nodes[i].threshold == t2.nodes[i].threshold);
  }
  CHECK(t1.subsample == t2.subsample);
}

TEST_CASE("affine outcome transforms leave the fitted trees bit-identical") {
  std::mt19937_64 gen(31);
  std::normal_distribution<double> normal;
  const int n = 60;
  MatrixXd X(n, 3);
  VectorXd y(n);
  VectorXi a(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) X(i, j) = normal(gen);
    y[i] = X(i, 0) + 0.5 * normal(gen);
    a[i] = (X(i, 1) + normal(gen) > 0) ? 1 : 0;
  }
  auto responses = [&](const VectorXd& outcome) {
    const StandardizedPair pair = standardize_pair(outcome, a);
    MatrixXd R(n, 2);
    R.col(0) = pair.y_tilde;
    R.col(1) = pair.a_tilde;
    return R;
  };
  ForestParams params;
  params.num_trees = 10;
  params.min_node = 3;
  params.seed = 101;
  const Forest f1 = grow_forest(X, responses(y), params);
  const VectorXd y_affine = (3.0 * y.array() + 7.0).matrix();
  const Forest f2 = grow_forest(X, responses(y_affine), params);
  CHECK(serialize_to_string(f1) == serialize_to_string(f2));
}

TEST_CASE("uniform partition trees have exactly 2^k leaves") {
  const std::vector<std::pair<double, double>> ranges = {{0.0, 1.0}};
  const Tree t1 = grow_uniform_partition_tree(ranges, 1, 12);
  CHECK(t1.leaf_count == 2);
  REQUIRE(!t1.nodes[0].is_leaf());
  CHECK(t1.nodes[0].threshold > 0.0);
  CHECK(t1.nodes[0].threshold < 1.0);

  const std::vector<std::pair<double, double>> ranges3 = {
      {0.0, 1.0}, {-2.0, 2.0}, {5.0, 6.0}};
  const Tree t3 = grow_uniform_partition_tree(ranges3, 3, 12);
  CHECK(t3.leaf_count == 8);

  const Tree again = grow_uniform_partition_tree(ranges3, 3, 12);
  CHECK(t3.nodes.size() == again.nodes.size());
  for (size_t i = 0; i < t3.nodes.size(); ++i)
    CHECK(t3.nodes[i].threshold == again.nodes[i].threshold);
}

TEST_CASE("uniform partition boxes tile the bounding box") {
  const std::vector<std::pair<double, double>> ranges = {{0.0, 1.0},
                                                         {0.0, 2.0}};
  const int k = 5;
  const Tree tree = grow_uniform_partition_tree(ranges, k, 77);
  REQUIRE(tree.leaf_count == 32);

  // Interval arithmetic down every path.
  double volume = 0.0;
  std::function<void(int, std::vector<std::pair<double, double>>)> walk =
      [&](int node, std::vector<std::pair<double, double>> box) {
        if (tree.nodes[node].is_leaf()) {
          double v = 1.0;
          for (const auto& [lo, hi] : box) v *= hi - lo;
          volume += v;
          return;
        }
        auto left = box;
        left[tree.nodes[node].feature].second = tree.nodes[node].threshold;
        auto right = std::move(box);
        right[tree.nodes[node].feature].first = tree.nodes[node].threshold;
        walk(tree.nodes[node].left, std::move(left));
        walk(tree.nodes[node].right, std::move(right));
      };
  walk(0, ranges);
  CHECK(volume == doctest::Approx(2.0).epsilon(1e-12));

  // Each probe point lands in exactly one leaf (routing is a function).
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u01(0, 1);
  for (int probe = 0; probe < 200; ++probe) {
    const double x[2] = {u01(gen), 2.0 * u01(gen)};
    const int leaf = tree.leaf_of(x);
    CHECK(leaf >= 0);
    CHECK(leaf < tree.leaf_count);
  }
}

TEST_CASE("leaf routing follows the >= goes right convention") {
  Tree tree;
  tree.nodes.resize(3);
  tree.nodes[0].feature = 0;
  tree.nodes[0].threshold = 0.5;
  tree.nodes[0].left = 1;
  tree.nodes[0].right = 2;
  tree.nodes[1].leaf_id = 0;
  tree.nodes[2].leaf_id = 1;
  tree.leaf_count = 2;

  const double low[1] = {0.2}, high[1] = {0.9}, edge[1] = {0.5};
  CHECK(tree.leaf_of(low) == 0);
  CHECK(tree.leaf_of(high) == 1);
  CHECK(tree.leaf_of(edge) == 1);  // tie goes right

  Tree single;
  single.nodes.resize(1);
  single.nodes[0].leaf_id = 0;
  single.leaf_count = 1;
  CHECK(single.leaf_of(high) == 0);
}

TEST_CASE("grow_forest is deterministic and thread-count independent") {
  MatrixXd X = MatrixXd::Random(50, 4);
  MatrixXd R = MatrixXd::Random(50, 2);
  ForestParams params;
  params.num_trees = 12;
  params.min_node = 3;
  params.seed = 2024;
  const Forest f1 = grow_forest(X, R, params);
  const Forest f2 = grow_forest(X, R, params);
  CHECK(serialize_to_string(f1) == serialize_to_string(f2));

  params.num_trees = 1;
  const Forest one = grow_forest(X, R, params);
  const Tree direct = grow_tree(X, R, params, derive_seed(params.seed, 1));
  CHECK(one.trees[0].nodes.size() == direct.nodes.size());
  CHECK(one.trees[0].subsample == direct.subsample);
}

TEST_CASE("every fit point routes to exactly one leaf in every tree") {
  MatrixXd X = MatrixXd::Random(60, 3);
  MatrixXd R = MatrixXd::Random(60, 2);
  ForestParams params;
  params.num_trees = 8;
  params.min_node = 2;
  params.seed = 5;
  const Forest forest = grow_forest(X, R, params);
  for (const Tree& tree : forest.trees) {
    std::vector<int> counts(tree.leaf_count, 0);
    for (int i = 0; i < X.rows(); ++i) {
      const int leaf = tree.leaf_of(X.row(i));
      REQUIRE(leaf >= 0);
      REQUIRE(leaf < tree.leaf_count);
      counts[leaf] += 1;
    }
    // Leaf ids are contiguous and every leaf holds at least one subsample row.
    std::vector<int> sub_counts(tree.leaf_count, 0);
    for (int row : tree.subsample) sub_counts[tree.leaf_of(X.row(row))] += 1;
    for (int c : sub_counts) CHECK(c >= 1);
  }
}

TEST_CASE("forest serialization round-trips") {
  MatrixXd X = MatrixXd::Random(30, 2);
  MatrixXd R = MatrixXd::Random(30, 2);
  ForestParams params;
  params.num_trees = 5;
  params.min_node = 2;
  params.seed = 88;
  const Forest forest = grow_forest(X, R, params);
  const std::string path =
      (std::filesystem::temp_directory_path() / "confbal_forest_rt.txt")
          .string();
  save_forest(forest, path);
  const Forest loaded = load_forest(path);
  CHECK(serialize_to_string(forest) == serialize_to_string(loaded));
  CHECK(forest_hash(forest) == forest_hash(loaded));
  for (int probe = 0; probe < 20; ++probe) {
    Eigen::RowVectorXd x = Eigen::RowVectorXd::Random(2);
    for (int t = 0; t < forest.num_trees(); ++t)
      CHECK(forest.trees[t].leaf_of(x.data()) ==
            loaded.trees[t].leaf_of(x.data()));
  }
}

TEST_CASE("tree_leaf_means averages the subsample response per leaf") {
  MatrixXd X(6, 1);
  X << 0.0, 0.1, 0.2, 0.8, 0.9, 1.0;
  VectorXd v(6);
  v << 0.0, 0.0, 1.0, 1.0, 1.0, 1.0;
  Tree tree;
  tree.nodes.resize(3);
  tree.nodes[0] = {0, 0.5, 1, 2, -1};
  tree.nodes[1].leaf_id = 0;
  tree.nodes[2].leaf_id = 1;
  tree.leaf_count = 2;
  tree.subsample = {0, 1, 2, 3, 4, 5};
  const std::vector<double> means = tree_leaf_means(tree, X, v);
  CHECK(means[0] == doctest::Approx(1.0 / 3.0));
  CHECK(means[1] == doctest::Approx(1.0));
}
