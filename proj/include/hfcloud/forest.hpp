#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace hfcloud {

/// Row-major float feature matrix.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  std::span<const float> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<float> row(std::size_t i) { return {data.data() + i * cols, cols}; }

  /// Columns of `a` followed by columns of `b`.
  static FeatureMatrix hconcat(const FeatureMatrix& a, const FeatureMatrix& b);
};

enum class TreeKind : std::uint8_t { random_split_best_gini = 0, completely_random = 1 };

inline constexpr std::uint32_t kLeafMarker = std::numeric_limits<std::uint32_t>::max();

/// Internal node: x[feature] <= threshold goes left. Leaf: feature ==
/// kLeafMarker and `left` indexes the leaf histogram.
struct TreeNode {
  std::uint32_t feature = kLeafMarker;
  float threshold = 0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;

  bool is_leaf() const { return feature == kLeafMarker; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  int n_classes = 0;
  std::vector<TreeNode> nodes;
  std::vector<std::uint32_t> leaf_counts;  // n_leaves * n_classes

  std::span<const std::uint32_t> leaf_histogram(std::span<const float> x) const;
  /// Adds the normalised leaf histogram for x into `out`.
  void accumulate_proba(std::span<const float> x, std::span<double> out) const;
  std::size_t leaf_count() const { return n_classes ? leaf_counts.size() / n_classes : 0; }

  bool operator==(const DecisionTree&) const = default;
};

struct ForestConfig {
  TreeKind kind = TreeKind::random_split_best_gini;
  int n_trees = 500;
  std::uint64_t seed = 0;
  int min_leaf = 0;          // 0: 2 for random trees, 1 for completely-random trees
  int max_features = 0;      // 0: floor(sqrt(d)) for random trees
  bool compute_oob = false;  // out-of-bag accuracy (random trees only; they bootstrap)
};

struct Forest {
  TreeKind kind = TreeKind::random_split_best_gini;
  int n_classes = 0;
  std::uint64_t seed = 0;
  std::vector<DecisionTree> trees;
  double oob_accuracy = std::numeric_limits<double>::quiet_NaN();

  /// Mean of the trees' leaf distributions; sums to 1.
  std::vector<double> predict_proba(std::span<const float> x) const;
  void predict_proba(std::span<const float> x, std::span<double> out) const;
  /// One row of n_classes probabilities per input row; parallel over rows.
  std::vector<double> predict_proba(const FeatureMatrix& X) const;

  bool operator==(const Forest& o) const {
    return kind == o.kind && n_classes == o.n_classes && seed == o.seed && trees == o.trees;
  }
};

/// Random kind: bootstrap sample, floor(sqrt(d)) candidate features per
/// node, best Gini threshold, min leaf 2. Completely-random kind: whole
/// sample, one random non-constant feature and a uniform threshold in its
/// observed range, min leaf 1. Trees are grown until pure or unsplittable.
/// Samples are processed in a canonical order, so the result depends on
/// the set of (row, label) pairs and the seed only.
Forest train_forest(const FeatureMatrix& X, std::span<const int> y, int n_classes, const ForestConfig& config);

}  // namespace hfcloud
