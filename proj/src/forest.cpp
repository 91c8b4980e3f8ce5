#include "hfcloud/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hfcloud/error.hpp"
#include "hfcloud/rng.hpp"

namespace hfcloud {

FeatureMatrix FeatureMatrix::hconcat(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (a.rows != b.rows) throw Error(Errc::shape_mismatch, "hconcat row counts differ");
  FeatureMatrix out(a.rows, a.cols + b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    auto dst = out.row(i);
    std::copy(a.row(i).begin(), a.row(i).end(), dst.begin());
    std::copy(b.row(i).begin(), b.row(i).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols));
  }
  return out;
}

std::span<const std::uint32_t> DecisionTree::leaf_histogram(std::span<const float> x) const {
  std::uint32_t i = 0;
  while (!nodes[i].is_leaf()) i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
  return {leaf_counts.data() + static_cast<std::size_t>(nodes[i].left) * n_classes, static_cast<std::size_t>(n_classes)};
}

void DecisionTree::accumulate_proba(std::span<const float> x, std::span<double> out) const {
  const auto h = leaf_histogram(x);
  double total = 0;
  for (auto c : h) total += c;
  for (int k = 0; k < n_classes; ++k) out[k] += h[k] / total;
}

void Forest::predict_proba(std::span<const float> x, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& t : trees) t.accumulate_proba(x, out);
  for (auto& v : out) v /= static_cast<double>(trees.size());
}

std::vector<double> Forest::predict_proba(std::span<const float> x) const {
  std::vector<double> out(n_classes);
  predict_proba(x, out);
  return out;
}

std::vector<double> Forest::predict_proba(const FeatureMatrix& X) const {
  std::vector<double> out(X.rows * n_classes);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(X.rows); ++i)
    predict_proba(X.row(i), std::span<double>(out.data() + i * n_classes, n_classes));
  return out;
}

namespace {

struct Builder {
  const FeatureMatrix& X;
  const std::vector<int>& y;  // labels, canonical order
  int n_classes;
  TreeKind kind;
  int min_leaf;
  int max_features;
  Rng rng;

  std::vector<std::pair<float, int>> scratch;
  std::vector<std::uint32_t> features;

  float value(std::uint32_t sample, std::uint32_t f) const { return X.data[sample * X.cols + f]; }

  struct Split {
    std::uint32_t feature = kLeafMarker;
    float threshold = 0;
  };

  Split best_gini(const std::vector<std::uint32_t>& idx, std::size_t b, std::size_t e,
                  const std::vector<std::uint32_t>& node_counts) {
    const std::size_t n = e - b;
    Split best;
    double best_score = std::numeric_limits<double>::infinity();
    // Partial Fisher-Yates over features until enough non-constant ones were scored.
    int scored = 0;
    for (std::size_t k = 0; k < features.size() && scored < max_features; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(below(rng, features.size() - k));
      std::swap(features[k], features[j]);
      const std::uint32_t f = features[k];
      scratch.clear();
      for (std::size_t i = b; i < e; ++i) scratch.emplace_back(value(idx[i], f), y[idx[i]]);
      std::sort(scratch.begin(), scratch.end());
      if (scratch.front().first == scratch.back().first) continue;
      ++scored;

      std::vector<double> left(n_classes, 0.0);
      double left_sq = 0, right_sq = 0;
      std::vector<double> right(node_counts.begin(), node_counts.end());
      for (double c : right) right_sq += c * c;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const int c = scratch[i].second;
        left_sq += 2 * left[c] + 1;
        left[c] += 1;
        right_sq -= 2 * right[c] - 1;
        right[c] -= 1;
        if (scratch[i].first == scratch[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1), nr = static_cast<double>(n - i - 1);
        if (nl < min_leaf || nr < min_leaf) continue;
        // n * weighted Gini = nl*(1 - sum(l^2)/nl^2) + nr*(1 - sum(r^2)/nr^2)
        const double score = (nl - left_sq / nl) + (nr - right_sq / nr);
        if (score < best_score) {
          best_score = score;
          best.feature = f;
          const float lo = scratch[i].first, hi = scratch[i + 1].first;
          float t = static_cast<float>(lo + (static_cast<double>(hi) - lo) / 2.0);
          if (!(t >= lo && t < hi)) t = lo;
          best.threshold = t;
        }
      }
    }
    return best;
  }

  Split completely_random(const std::vector<std::uint32_t>& idx, std::size_t b, std::size_t e) {
    for (std::size_t k = 0; k < features.size(); ++k) {
      const std::size_t j = k + static_cast<std::size_t>(below(rng, features.size() - k));
      std::swap(features[k], features[j]);
      const std::uint32_t f = features[k];
      float lo = value(idx[b], f), hi = lo;
      for (std::size_t i = b + 1; i < e; ++i) {
        lo = std::min(lo, value(idx[i], f));
        hi = std::max(hi, value(idx[i], f));
      }
      if (lo == hi) continue;
      float t = static_cast<float>(lo + uniform01(rng) * (static_cast<double>(hi) - lo));
      if (!(t >= lo && t < hi)) t = lo;
      return {f, t};
    }
    return {};
  }

  DecisionTree build(std::vector<std::uint32_t> idx) {
    DecisionTree tree;
    tree.n_classes = n_classes;
    features.resize(X.cols);
    std::iota(features.begin(), features.end(), 0u);

    struct Pending {
      std::uint32_t node;
      std::size_t b, e;
    };
    tree.nodes.emplace_back();
    std::vector<Pending> stack{{0, 0, idx.size()}};
    std::vector<std::uint32_t> counts(n_classes);
    while (!stack.empty()) {
      const Pending p = stack.back();
      stack.pop_back();
      std::fill(counts.begin(), counts.end(), 0u);
      for (std::size_t i = p.b; i < p.e; ++i) ++counts[y[idx[i]]];
      const std::size_t n = p.e - p.b;
      const bool pure = std::count_if(counts.begin(), counts.end(), [](std::uint32_t c) { return c > 0; }) <= 1;

      Split split;
      if (!pure && n >= static_cast<std::size_t>(2 * min_leaf))
        split = kind == TreeKind::completely_random ? completely_random(idx, p.b, p.e) : best_gini(idx, p.b, p.e, counts);

      std::size_t mid = p.b;
      if (split.feature != kLeafMarker) {
        mid = static_cast<std::size_t>(
            std::partition(idx.begin() + static_cast<std::ptrdiff_t>(p.b), idx.begin() + static_cast<std::ptrdiff_t>(p.e),
                           [&](std::uint32_t s) { return value(s, split.feature) <= split.threshold; }) -
            idx.begin());
        if (mid - p.b < static_cast<std::size_t>(min_leaf) || p.e - mid < static_cast<std::size_t>(min_leaf))
          split.feature = kLeafMarker;
      }
      if (split.feature == kLeafMarker) {
        auto& node = tree.nodes[p.node];
        node.feature = kLeafMarker;
        node.left = static_cast<std::uint32_t>(tree.leaf_counts.size() / n_classes);
        tree.leaf_counts.insert(tree.leaf_counts.end(), counts.begin(), counts.end());
        continue;
      }
      const auto left = static_cast<std::uint32_t>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& node = tree.nodes[p.node];
      node.feature = split.feature;
      node.threshold = split.threshold;
      node.left = left;
      node.right = left + 1;
      stack.push_back({left + 1, mid, p.e});
      stack.push_back({left, p.b, mid});
    }
    // Number leaves in node order so the layout matches a serialised tree.
    std::vector<std::uint32_t> ordered;
    ordered.reserve(tree.leaf_counts.size());
    for (auto& node : tree.nodes) {
      if (!node.is_leaf()) continue;
      const auto* h = tree.leaf_counts.data() + static_cast<std::size_t>(node.left) * n_classes;
      node.left = static_cast<std::uint32_t>(ordered.size() / n_classes);
      ordered.insert(ordered.end(), h, h + n_classes);
    }
    tree.leaf_counts = std::move(ordered);
    return tree;
  }
};

}  // namespace

Forest train_forest(const FeatureMatrix& X, std::span<const int> y, int n_classes, const ForestConfig& config) {
  if (X.rows != y.size()) throw Error(Errc::shape_mismatch, "feature rows and labels differ");
  if (X.rows < 1 || X.cols < 1) throw Error(Errc::invalid_argument, "forest needs at least one sample and feature");
  if (config.n_trees < 1) throw Error(Errc::config, "n_trees must be >= 1");
  for (int label : y)
    if (label < 0 || label >= n_classes) throw Error(Errc::invalid_argument, "label out of range");

  const bool random_kind = config.kind == TreeKind::random_split_best_gini;
  const int min_leaf = config.min_leaf > 0 ? config.min_leaf : (random_kind ? 2 : 1);
  const int max_features =
      config.max_features > 0 ? config.max_features
                              : std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(X.cols)))));

  // Canonical sample order: lexicographic on (row values, label).
  std::vector<std::uint32_t> canon(X.rows);
  std::iota(canon.begin(), canon.end(), 0u);
  std::stable_sort(canon.begin(), canon.end(), [&](std::uint32_t a, std::uint32_t b) {
    const auto ra = X.row(a), rb = X.row(b);
    const auto cmp = std::lexicographical_compare_three_way(ra.begin(), ra.end(), rb.begin(), rb.end(),
                                                           [](float u, float v) { return u <=> v; });
    if (cmp != 0) return cmp < 0;
    return y[a] < y[b];
  });
  const std::vector<int> labels(y.begin(), y.end());

  Forest forest;
  forest.kind = config.kind;
  forest.n_classes = n_classes;
  forest.seed = config.seed;
  forest.trees.resize(config.n_trees);
  const bool oob = config.compute_oob && random_kind;
  std::vector<std::vector<std::uint8_t>> in_bag(oob ? config.n_trees : 0);

#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < config.n_trees; ++t) {
    Builder builder{X, labels, n_classes, config.kind, min_leaf, max_features,
                    Rng(derive_seed(config.seed, static_cast<std::uint64_t>(t))), {}, {}};
    std::vector<std::uint32_t> sample;
    if (random_kind) {
      sample.resize(X.rows);
      for (auto& s : sample) s = canon[below(builder.rng, X.rows)];
      if (oob) {
        in_bag[t].assign(X.rows, 0);
        for (auto s : sample) in_bag[t][s] = 1;
      }
    } else {
      sample = canon;
    }
    forest.trees[t] = builder.build(std::move(sample));
  }

  if (oob) {
    std::vector<double> votes(X.rows * n_classes, 0.0);
    std::vector<int> seen(X.rows, 0);
    for (int t = 0; t < config.n_trees; ++t)
      for (std::size_t i = 0; i < X.rows; ++i)
        if (!in_bag[t][i]) {
          forest.trees[t].accumulate_proba(X.row(i), std::span<double>(votes.data() + i * n_classes, n_classes));
          ++seen[i];
        }
    std::size_t scored = 0, correct = 0;
    for (std::size_t i = 0; i < X.rows; ++i) {
      if (!seen[i]) continue;
      ++scored;
      const double* v = votes.data() + i * n_classes;
      correct += static_cast<int>(std::max_element(v, v + n_classes) - v) == y[i];
    }
    forest.oob_accuracy = scored ? static_cast<double>(correct) / scored : std::numeric_limits<double>::quiet_NaN();
  }
  return forest;
}

}  // namespace hfcloud
