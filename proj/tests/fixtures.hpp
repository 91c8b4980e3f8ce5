#pragma once

#include <array>
#include <algorithm>
#include <cmath>

#include "hfcloud/forest.hpp"
#include "hfcloud/hfcnn.hpp"
#include "hfcloud/rng.hpp"
#include "hfcloud/patchset.hpp"
#include "hfcloud/pipeline.hpp"
#include "hfcloud/refine.hpp"
#include "hfcloud/synthgen.hpp"

namespace fixtures {

/// `per_class` labelled region patches of each class, drawn at random from
/// the regions of eight generated tiles, in class-major order.
inline hfcloud::TensorBatch synthetic_patch_set(int per_class, std::uint64_t seed) {
  using namespace hfcloud;
  std::array<std::vector<Patch>, kNumClasses> pool;
  PipelineConfig config;
  config.segment.n_superpixels = 300;
  for (std::uint64_t s = seed; s < seed + 8; ++s) {
    SceneParams sp;
    sp.tile_size = 256;
    sp.n_buildings = 10;
    sp.seed = s;
    const auto scene = generate_tile(sp);
    const auto map = segment_tile(scene.image, config);
    const auto labels = label_from_gt("t", map, scene.ground_truth);
    const auto patches = region_patches(scene.image, map, region_stats(map, scene.image));
    for (const auto& [rid, cls] : labels.labels) pool[to_int(cls)].push_back(patches[rid]);
  }
  Rng rng(derive_seed(seed, 0x5041));
  std::vector<Patch> all;
  TensorBatch out;
  for (int c = 0; c < kNumClasses; ++c) {
    if (static_cast<int>(pool[c].size()) < per_class) throw Error(Errc::invalid_argument, "not enough patches");
    shuffle(pool[c], rng);
    for (int k = 0; k < per_class; ++k) {
      all.push_back(pool[c][k]);
      out.labels.push_back(c);
      out.mean_nir.push_back(pool[c][k].mean_nir);
    }
  }
  out.images = stack_patches(all);
  return out;
}

struct OverfitResult {
  bool reached = false;
  int iterations = 0;
  double accuracy = 0;
};

/// Momentum SGD on the whole set in shuffled mini-batches, checking the
/// full training accuracy every `check_every` steps.
inline OverfitResult overfit(const hfcloud::TensorBatch& data, int max_iterations, int batch_size, int check_every,
                             std::uint64_t seed) {
  using namespace hfcloud;
  auto model = HfcnnModel::initialized(seed);
  TrainConfig config;
  config.batch_size = batch_size;
  SgdState state = make_sgd_state(model);
  Rng rng(seed);
  const int n = data.images.n();
  std::vector<std::size_t> order(n);
  for (int i = 0; i < n; ++i) order[i] = static_cast<std::size_t>(i);
  std::size_t cursor = order.size();
  Tensor<float> batch(batch_size, 3, 32, 32);
  std::vector<int> labels(batch_size);
  OverfitResult r;
  while (r.iterations < max_iterations) {
    for (int k = 0; k < batch_size; ++k) {
      if (cursor == order.size()) {
        shuffle(order, rng);
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      std::copy_n(data.images.sample(static_cast<int>(idx)), batch.sample_size(), batch.sample(k));
      labels[k] = data.labels[idx];
    }
    train_step(model, state, batch, labels, config);
    ++r.iterations;
    if (r.iterations % check_every == 0) {
      r.accuracy = accuracy(model, data);
      if (r.accuracy == 1.0) {
        r.reached = true;
        break;
      }
    }
  }
  return r;
}

struct Toy {
  hfcloud::FeatureMatrix x;
  std::vector<int> y;
};

/// Two-feature XOR on [0,1)^2: class = (x0 > 0.5) != (x1 > 0.5).
inline Toy xor_toy(std::size_t n, std::uint64_t seed) {
  hfcloud::Rng rng(seed);
  Toy t{hfcloud::FeatureMatrix(n, 2), {}};
  for (std::size_t i = 0; i < n; ++i) {
    const double a = hfcloud::uniform01(rng), b = hfcloud::uniform01(rng);
    t.x.row(i)[0] = static_cast<float>(a);
    t.x.row(i)[1] = static_cast<float>(b);
    t.y.push_back((a > 0.5) != (b > 0.5));
  }
  return t;
}

/// Four classes separated along feature 0 (class c in [c, c+0.8)); the
/// other features are uniform noise.
inline Toy box_toy(std::size_t per_class, std::size_t d, std::uint64_t seed) {
  hfcloud::Rng rng(seed);
  Toy t{hfcloud::FeatureMatrix(per_class * 4, d), {}};
  for (std::size_t i = 0; i < per_class * 4; ++i) {
    const int c = static_cast<int>(i % 4);
    auto row = t.x.row(i);
    for (auto& v : row) v = static_cast<float>(hfcloud::uniform01(rng));
    row[0] = static_cast<float>(c + 0.8 * hfcloud::uniform01(rng));
    t.y.push_back(c);
  }
  return t;
}

struct RandomGraph {
  hfcloud::RegionGraph graph;
  std::vector<hfcloud::RegionPrediction> preds;
};

/// Connected-ish random region graph (a path plus random chords) with random
/// labels and features drawn around a few shared prototypes.
inline RandomGraph random_region_graph(std::uint32_t n, std::uint64_t seed, std::size_t dim = 8) {
  using namespace hfcloud;
  Rng rng(seed);
  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
  for (std::uint32_t i = 0; i + 1 < n; ++i)
    if (below(rng, 5) != 0) adj[i][i + 1] = adj[i + 1][i] = 1;
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 2; j < n; ++j)
      if (uniform01(rng) < 0.08) adj[i][j] = adj[j][i] = 1;
  RandomGraph g;
  g.graph.resize(n);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < n; ++j)
      if (adj[i][j]) g.graph[i].push_back(j);
  std::vector<std::vector<double>> protos(3, std::vector<double>(dim));
  for (auto& p : protos)
    for (auto& v : p) v = uniform(rng, -1, 1);
  for (std::uint32_t i = 0; i < n; ++i) {
    RegionPrediction p;
    p.region_id = i;
    p.label = static_cast<ClassLabel>(below(rng, 4));
    const auto& proto = protos[below(rng, 3)];
    for (std::size_t d = 0; d < dim; ++d) p.feature.push_back(proto[d] + uniform(rng, -0.6, 0.6));
    g.preds.push_back(p);
  }
  return g;
}

/// Literal per-region application of the relabel rule: hop distances by
/// repeated relaxation over the adjacency lists, then an exhaustive scan.
inline std::vector<hfcloud::ClassLabel> relabel_oracle(const RandomGraph& g, int hops, bool other_includes_building,
                                                       bool use_mean) {
  using namespace hfcloud;
  const std::size_t n = g.preds.size();
  const int inf = 1 << 20;
  std::vector<std::vector<int>> dist(n, std::vector<int>(n, inf));
  for (std::size_t i = 0; i < n; ++i) dist[i][i] = 0;
  for (std::size_t round = 0; round < n; ++round)
    for (std::size_t i = 0; i < n; ++i)
      for (auto j : g.graph[i])
        for (std::size_t k = 0; k < n; ++k) dist[j][k] = std::min(dist[j][k], dist[i][k] + 1);
  auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t d = 0; d < a.size(); ++d) {
      ab += a[d] * b[d];
      aa += a[d] * a[d];
      bb += b[d] * b[d];
    }
    return 1.0 - ab / (std::sqrt(aa) * std::sqrt(bb));
  };
  std::vector<ClassLabel> out;
  for (std::size_t s = 0; s < n; ++s) {
    const ClassLabel ls = g.preds[s].label;
    out.push_back(ls);
    if (ls != ClassLabel::cirrus_cloud && ls != ClassLabel::building) continue;
    std::vector<double> thick, other;
    for (std::size_t t = 0; t < n; ++t) {
      if (t == s || dist[s][t] > hops) continue;
      const ClassLabel lt = g.preds[t].label;
      const double d = cosine(g.preds[t].feature, g.preds[s].feature);
      if (lt == ClassLabel::thick_cloud) thick.push_back(d);
      if (lt == ClassLabel::other_culture || (other_includes_building && lt == ClassLabel::building)) other.push_back(d);
    }
    if (thick.empty() || other.empty()) continue;
    auto agg = [&](const std::vector<double>& v) {
      if (!use_mean) return *std::min_element(v.begin(), v.end());
      double sum = 0;
      for (double x : v) sum += x;
      return sum / static_cast<double>(v.size());
    };
    if (agg(thick) < agg(other)) out.back() = ClassLabel::thick_cloud;
  }
  return out;
}

}  // namespace fixtures
