#include "hfcloud/gcforest.hpp"

#include <algorithm>
#include <initializer_list>
#include <iostream>
#include <nlohmann/json.hpp>

#include "hfcloud/binio.hpp"
#include "hfcloud/error.hpp"
#include "hfcloud/rng.hpp"

namespace hfcloud {

using nlohmann::json;

void GcForestConfig::validate() const {
  if (scan.windows.empty()) throw Error(Errc::config, "at least one scan window is required");
  for (std::size_t i = 0; i < scan.windows.size(); ++i) {
    const int w = scan.windows[i];
    if (w < 1) throw Error(Errc::config, "scan window must be positive");
    if (w > kPatchSize) throw Error(Errc::invalid_argument, "scan window larger than patch");
    if (i > 0 && w <= scan.windows[i - 1]) throw Error(Errc::config, "scan windows must be strictly ascending");
  }
  if (scan.stride < 1) throw Error(Errc::config, "scan stride must be >= 1");
  if (scan.n_trees < 1 || cascade.n_trees < 1) throw Error(Errc::config, "tree counts must be >= 1");
  if (scan.max_instances_per_class < 1) throw Error(Errc::config, "max_instances_per_class must be >= 1");
  if (cascade.patience < 1) throw Error(Errc::config, "patience must be >= 1");
  if (cascade.max_levels < 1) throw Error(Errc::config, "max_levels must be >= 1");
  if (folds < 2) throw Error(Errc::config, "folds must be >= 2");
}

std::size_t scan_positions(int window, int stride, int size) {
  if (window > size) throw Error(Errc::invalid_argument, "scan window larger than patch");
  const std::size_t per_axis = static_cast<std::size_t>((size - window) / stride + 1);
  return per_axis * per_axis;
}

std::size_t scan_feature_length(const ScanConfig& config) {
  std::size_t n = 0;
  for (int w : config.windows) n += scan_positions(w, config.stride) * 2 * kNumClasses;
  return n;
}

namespace {

std::uint64_t seed_of(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  for (auto p : path) base = derive_seed(base, p);
  return base;
}

/// Fold index per sample, stratified by label.
std::vector<int> stratified_folds(std::span<const int> labels, int folds, std::uint64_t seed) {
  std::vector<int> fold(labels.size(), 0);
  int max_label = 0;
  for (int l : labels) max_label = std::max(max_label, l);
  for (int c = 0; c <= max_label; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) idx.push_back(i);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    shuffle(idx, rng);
    for (std::size_t k = 0; k < idx.size(); ++k) fold[idx[k]] = static_cast<int>(k % folds);
  }
  return fold;
}

FeatureMatrix select_rows(const FeatureMatrix& X, const std::vector<std::size_t>& rows) {
  FeatureMatrix out(rows.size(), X.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(X.row(rows[i]).begin(), X.row(rows[i]).end(), out.row(i).begin());
  return out;
}

void fill_window(const Tensor<float>& images, int b, int window, int ox, int oy, std::span<float> out) {
  std::size_t k = 0;
  for (int c = 0; c < images.c(); ++c)
    for (int y = 0; y < window; ++y)
      for (int x = 0; x < window; ++x) out[k++] = images.at(b, c, oy + y, ox + x);
}

void check_images(const Tensor<float>& images) {
  require_shape(images, {-1, kPatchChannels, kPatchSize, kPatchSize}, "gcforest input");
}

/// Writes the scan feature of image b into `out`.
void scan_one(const Tensor<float>& images, int b, const std::vector<Scanner>& scanners, int stride,
              std::span<float> out) {
  std::size_t k = 0;
  std::array<double, kNumClasses> probs{};
  for (const auto& s : scanners) {
    const FeatureMatrix inst = window_instances(images, b, s.window, stride);
    for (const Forest* f : {&s.random, &s.completely_random})
      for (std::size_t r = 0; r < inst.rows; ++r) {
        f->predict_proba(inst.row(r), probs);
        for (double p : probs) out[k++] = static_cast<float>(p);
      }
  }
}

/// Window instances of the selected images, at most `cap` per class.
FeatureMatrix scan_training_set(const Tensor<float>& images, std::span<const int> labels,
                                const std::vector<std::size_t>& subset, int window, int stride, std::size_t cap,
                                std::uint64_t seed, std::vector<int>& y) {
  const int per_axis = (kPatchSize - window) / stride + 1;
  const std::size_t n_pos = static_cast<std::size_t>(per_axis) * per_axis;
  std::vector<std::pair<std::size_t, std::size_t>> chosen;  // (image, position)
  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<std::pair<std::size_t, std::size_t>> all;
    for (auto i : subset)
      if (labels[i] == c)
        for (std::size_t p = 0; p < n_pos; ++p) all.emplace_back(i, p);
    if (all.size() > cap) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
      shuffle(all, rng);
      all.resize(cap);
      std::sort(all.begin(), all.end());
    }
    chosen.insert(chosen.end(), all.begin(), all.end());
  }
  std::sort(chosen.begin(), chosen.end());
  const std::size_t dim = static_cast<std::size_t>(kPatchChannels) * window * window;
  FeatureMatrix X(chosen.size(), dim);
  y.resize(chosen.size());
  for (std::size_t r = 0; r < chosen.size(); ++r) {
    const auto [img, pos] = chosen[r];
    const int ox = static_cast<int>(pos % per_axis) * stride, oy = static_cast<int>(pos / per_axis) * stride;
    fill_window(images, static_cast<int>(img), window, ox, oy, X.row(r));
    y[r] = labels[img];
  }
  return X;
}

std::vector<Scanner> fit_scanners(const Tensor<float>& images, std::span<const int> labels,
                                  const std::vector<std::size_t>& subset, const GcForestConfig& config,
                                  std::uint64_t fold_tag) {
  std::vector<Scanner> out;
  for (int w : config.scan.windows) {
    std::vector<int> y;
    const FeatureMatrix X =
        scan_training_set(images, labels, subset, w, config.scan.stride, config.scan.max_instances_per_class,
                          seed_of(config.seed, {5, static_cast<std::uint64_t>(w), fold_tag}), y);
    Scanner s;
    s.window = w;
    ForestConfig fc;
    fc.n_trees = config.scan.n_trees;
    fc.kind = TreeKind::random_split_best_gini;
    fc.seed = seed_of(config.seed, {1, static_cast<std::uint64_t>(w), 0, fold_tag});
    s.random = train_forest(X, y, kNumClasses, fc);
    fc.kind = TreeKind::completely_random;
    fc.seed = seed_of(config.seed, {1, static_cast<std::uint64_t>(w), 1, fold_tag});
    s.completely_random = train_forest(X, y, kNumClasses, fc);
    out.push_back(std::move(s));
  }
  return out;
}

std::array<Forest, kForestsPerLevel> fit_level(const FeatureMatrix& X, std::span<const int> y,
                                               const GcForestConfig& config, int level, std::uint64_t fold_tag) {
  std::array<Forest, kForestsPerLevel> forests;
  for (int f = 0; f < kForestsPerLevel; ++f) {
    ForestConfig fc;
    fc.kind = f < 2 ? TreeKind::random_split_best_gini : TreeKind::completely_random;
    fc.n_trees = config.cascade.n_trees;
    fc.seed = seed_of(config.seed, {2, static_cast<std::uint64_t>(level), static_cast<std::uint64_t>(f), fold_tag});
    forests[f] = train_forest(X, y, kNumClasses, fc);
  }
  return forests;
}

/// Class vectors (rows x 16) of one level.
FeatureMatrix level_vectors(const std::array<Forest, kForestsPerLevel>& forests, const FeatureMatrix& X) {
  FeatureMatrix out(X.rows, kClassVectorDim);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(X.rows); ++i) {
    std::array<double, kNumClasses> p{};
    for (int f = 0; f < kForestsPerLevel; ++f) {
      forests[f].predict_proba(X.row(i), p);
      for (int c = 0; c < kNumClasses; ++c) out.row(i)[f * kNumClasses + c] = static_cast<float>(p[c]);
    }
  }
  return out;
}

double vector_accuracy(const FeatureMatrix& cv, std::span<const int> y) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < cv.rows; ++i) {
    std::array<double, kNumClasses> mean{};
    for (int f = 0; f < kForestsPerLevel; ++f)
      for (int c = 0; c < kNumClasses; ++c) mean[c] += cv.row(i)[f * kNumClasses + c];
    correct += static_cast<int>(std::max_element(mean.begin(), mean.end()) - mean.begin()) == y[i];
  }
  return cv.rows ? static_cast<double>(correct) / cv.rows : 0.0;
}

}  // namespace

FeatureMatrix window_instances(const Tensor<float>& images, int b, int window, int stride) {
  check_images(images);
  const int per_axis = static_cast<int>((kPatchSize - window) / stride + 1);
  if (window > kPatchSize) throw Error(Errc::invalid_argument, "scan window larger than patch");
  FeatureMatrix X(static_cast<std::size_t>(per_axis) * per_axis, static_cast<std::size_t>(kPatchChannels) * window * window);
  for (int py = 0; py < per_axis; ++py)
    for (int px = 0; px < per_axis; ++px)
      fill_window(images, b, window, px * stride, py * stride, X.row(static_cast<std::size_t>(py) * per_axis + px));
  return X;
}

FeatureMatrix multi_grained_scan(const Tensor<float>& images, const std::vector<Scanner>& scanners, int stride) {
  check_images(images);
  ScanConfig sc;
  sc.stride = stride;
  sc.windows.clear();
  for (const auto& s : scanners) sc.windows.push_back(s.window);
  FeatureMatrix out(static_cast<std::size_t>(images.n()), scan_feature_length(sc));
#pragma omp parallel for schedule(dynamic)
  for (int b = 0; b < images.n(); ++b) scan_one(images, b, scanners, stride, out.row(b));
  return out;
}

std::vector<float> multi_grained_scan(const Patch& patch, const std::vector<Scanner>& scanners, int stride) {
  Tensor<float> t(1, kPatchChannels, kPatchSize, kPatchSize);
  std::copy(patch.pixels.begin(), patch.pixels.end(), t.data.begin());
  const FeatureMatrix m = multi_grained_scan(t, scanners, stride);
  return m.data;
}

std::vector<Scanner> train_scanners(const Tensor<float>& images, std::span<const int> labels,
                                    const GcForestConfig& config, FeatureMatrix* out_of_fold) {
  config.validate();
  check_images(images);
  if (static_cast<std::size_t>(images.n()) != labels.size()) throw Error(Errc::shape_mismatch, "images and labels differ");
  if (labels.empty()) throw Error(Errc::invalid_argument, "no training images");
  const int folds = config.folds;
  std::vector<std::size_t> everything(labels.size());
  for (std::size_t i = 0; i < everything.size(); ++i) everything[i] = i;

  if (out_of_fold) {
    *out_of_fold = FeatureMatrix(labels.size(), scan_feature_length(config.scan));
    const auto fold = stratified_folds(labels, folds, seed_of(config.seed, {4}));
    for (int k = 0; k < folds; ++k) {
      std::vector<std::size_t> train, held;
      for (std::size_t i = 0; i < labels.size(); ++i) (fold[i] == k ? held : train).push_back(i);
      if (held.empty()) continue;
      if (train.empty()) train = held;
      const auto scanners = fit_scanners(images, labels, train, config, static_cast<std::uint64_t>(k));
#pragma omp parallel for schedule(dynamic)
      for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(held.size()); ++j)
        scan_one(images, static_cast<int>(held[j]), scanners, config.scan.stride, out_of_fold->row(held[j]));
    }
  }
  return fit_scanners(images, labels, everything, config, static_cast<std::uint64_t>(folds));
}

void train_cascade(CascadeModel& model, const FeatureMatrix& train_x, std::span<const int> train_y,
                   const FeatureMatrix& valid_x, std::span<const int> valid_y) {
  const GcForestConfig& config = model.config;
  config.validate();
  if (train_x.rows != train_y.size() || valid_x.rows != valid_y.size())
    throw Error(Errc::shape_mismatch, "cascade features and labels differ");
  if (train_x.rows == 0 || valid_x.rows == 0) throw Error(Errc::invalid_argument, "cascade needs non-empty train and validation sets");
  if (train_x.cols != valid_x.cols) throw Error(Errc::shape_mismatch, "train and validation widths differ");
  std::array<bool, kNumClasses> present{};
  for (int l : valid_y) present.at(static_cast<std::size_t>(l)) = true;
  for (int c = 0; c < kNumClasses; ++c)
    if (!present[c]) std::cerr << "warning: validation set has no samples of class " << c << "\n";

  model.scan_dim = train_x.cols;
  model.levels.clear();
  model.level_accuracy.clear();
  model.best_level = -1;

  FeatureMatrix cv_train, cv_valid;
  double best = -1;
  int stale = 0;
  for (int level = 0; level < config.cascade.max_levels; ++level) {
    const FeatureMatrix xt = level == 0 ? train_x : FeatureMatrix::hconcat(train_x, cv_train);
    const FeatureMatrix xv = level == 0 ? valid_x : FeatureMatrix::hconcat(valid_x, cv_valid);
    CascadeLevel lv;
    lv.forests = fit_level(xt, train_y, config, level, static_cast<std::uint64_t>(config.folds));
    FeatureMatrix next_valid = level_vectors(lv.forests, xv);
    lv.valid_accuracy = vector_accuracy(next_valid, valid_y);
    model.levels.push_back(std::move(lv));
    model.level_accuracy.push_back(model.levels.back().valid_accuracy);

    if (model.level_accuracy.back() > best) {
      best = model.level_accuracy.back();
      model.best_level = level;
      stale = 0;
    } else {
      ++stale;
    }
    if (stale >= config.cascade.patience || level + 1 == config.cascade.max_levels) break;

    // Out-of-fold class vectors for the next level's training input.
    FeatureMatrix next_train(train_x.rows, kClassVectorDim);
    const auto fold = stratified_folds(train_y, config.folds, seed_of(config.seed, {3, static_cast<std::uint64_t>(level)}));
    for (int k = 0; k < config.folds; ++k) {
      std::vector<std::size_t> tr, held;
      for (std::size_t i = 0; i < train_y.size(); ++i) (fold[i] == k ? held : tr).push_back(i);
      if (held.empty()) continue;
      if (tr.empty()) tr = held;
      std::vector<int> ytr;
      for (auto i : tr) ytr.push_back(train_y[i]);
      const auto forests = fit_level(select_rows(xt, tr), ytr, config, level, static_cast<std::uint64_t>(k));
      const FeatureMatrix cv = level_vectors(forests, select_rows(xt, held));
      for (std::size_t j = 0; j < held.size(); ++j) std::copy(cv.row(j).begin(), cv.row(j).end(), next_train.row(held[j]).begin());
    }
    cv_train = std::move(next_train);
    cv_valid = std::move(next_valid);
  }
  model.levels.resize(static_cast<std::size_t>(model.best_level) + 1);
}

CascadeModel train_gcforest(const Tensor<float>& train_images, std::span<const int> train_labels,
                            const Tensor<float>& valid_images, std::span<const int> valid_labels,
                            const GcForestConfig& config) {
  config.validate();
  CascadeModel model;
  model.config = config;
  FeatureMatrix train_scan;
  model.scanners = train_scanners(train_images, train_labels, config, &train_scan);
  const FeatureMatrix valid_scan = multi_grained_scan(valid_images, model.scanners, config.scan.stride);
  train_cascade(model, train_scan, train_labels, valid_scan, valid_labels);
  return model;
}

std::vector<CascadePrediction> predict_from_features(const CascadeModel& model, const FeatureMatrix& level0) {
  if (!model.trained()) throw Error(Errc::untrained, "cascade model is not trained");
  if (level0.cols != model.scan_dim) throw Error(Errc::shape_mismatch, "cascade input width differs from training");
  std::vector<CascadePrediction> out(level0.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(level0.rows); ++i) {
    std::vector<float> x(level0.row(i).begin(), level0.row(i).end());
    x.resize(model.scan_dim + kClassVectorDim, 0.0f);
    CascadePrediction& pred = out[i];
    for (std::size_t level = 0; level < model.levels.size(); ++level) {
      const std::span<const float> input(x.data(), model.level_input_dim(static_cast<int>(level)));
      for (int f = 0; f < kForestsPerLevel; ++f)
        model.levels[level].forests[f].predict_proba(input, std::span<double>(pred.class_vectors.data() + f * kNumClasses, kNumClasses));
      for (int k = 0; k < kClassVectorDim; ++k) x[model.scan_dim + k] = static_cast<float>(pred.class_vectors[k]);
    }
    for (int c = 0; c < kNumClasses; ++c) {
      double s = 0;
      for (int f = 0; f < kForestsPerLevel; ++f) s += pred.class_vectors[f * kNumClasses + c];
      pred.probs[c] = s / kForestsPerLevel;
    }
  }
  return out;
}

std::vector<CascadePrediction> predict(const CascadeModel& model, const Tensor<float>& images) {
  if (!model.trained()) throw Error(Errc::untrained, "cascade model is not trained");
  if (model.scanners.empty()) throw Error(Errc::invalid_argument, "cascade has no scanners; use predict_from_features");
  return predict_from_features(model, multi_grained_scan(images, model.scanners, model.config.scan.stride));
}

CascadePrediction predict(const CascadeModel& model, const Patch& patch) {
  Tensor<float> t(1, kPatchChannels, kPatchSize, kPatchSize);
  std::copy(patch.pixels.begin(), patch.pixels.end(), t.data.begin());
  return predict(model, t).front();
}

namespace {

constexpr std::uint8_t kGcfsVersion = 1;

json forest_header(const Forest& f, json role) {
  role["kind"] = static_cast<int>(f.kind);
  role["n_trees"] = f.trees.size();
  role["seed"] = f.seed;
  role["n_classes"] = f.n_classes;
  return role;
}

void write_forest(binio::Writer& w, const Forest& f) {
  for (const auto& t : f.trees) {
    w.u32(static_cast<std::uint32_t>(t.nodes.size()));
    for (const auto& n : t.nodes) {
      w.u32(n.feature);
      if (n.is_leaf()) {
        for (int c = 0; c < t.n_classes; ++c) w.u32(t.leaf_counts[static_cast<std::size_t>(n.left) * t.n_classes + c]);
      } else {
        w.f32(n.threshold);
        w.u32(n.left);
        w.u32(n.right);
      }
    }
  }
}

Forest read_forest(binio::Reader& r, const json& h) {
  Forest f;
  f.kind = static_cast<TreeKind>(h.at("kind").get<int>());
  f.n_classes = h.at("n_classes").get<int>();
  f.seed = h.at("seed").get<std::uint64_t>();
  const auto n_trees = h.at("n_trees").get<std::size_t>();
  if (f.n_classes != kNumClasses || n_trees < 1) throw Error(Errc::corrupt_metadata, "GCFS forest header invalid");
  f.trees.resize(n_trees);
  for (auto& t : f.trees) {
    t.n_classes = f.n_classes;
    const std::uint32_t n_nodes = r.u32();
    if (n_nodes == 0 || n_nodes > r.remaining() / 4) throw Error(Errc::truncated, "GCFS tree node count exceeds data");
    t.nodes.resize(n_nodes);
    for (auto& n : t.nodes) {
      n.feature = r.u32();
      if (n.is_leaf()) {
        n.left = static_cast<std::uint32_t>(t.leaf_counts.size() / f.n_classes);
        for (int c = 0; c < f.n_classes; ++c) t.leaf_counts.push_back(r.u32());
      } else {
        n.threshold = r.f32();
        n.left = r.u32();
        n.right = r.u32();
        if (n.left >= n_nodes || n.right >= n_nodes) throw Error(Errc::corrupt_metadata, "GCFS child index out of range");
      }
    }
  }
  return f;
}

}  // namespace

std::vector<std::uint8_t> serialize(const CascadeModel& model) {
  if (!model.trained()) throw Error(Errc::untrained, "cascade model is not trained");
  const auto& c = model.config;
  json header;
  header["config"] = {{"windows", c.scan.windows},
                      {"stride", c.scan.stride},
                      {"scan_trees", c.scan.n_trees},
                      {"max_instances_per_class", c.scan.max_instances_per_class},
                      {"cascade_trees", c.cascade.n_trees},
                      {"max_levels", c.cascade.max_levels},
                      {"patience", c.cascade.patience},
                      {"folds", c.folds}};
  header["seed"] = c.seed;
  json level_dims = json::array();
  for (std::size_t l = 0; l < model.levels.size(); ++l) level_dims.push_back(model.level_input_dim(static_cast<int>(l)));
  header["dims"] = {{"scan_dim", model.scan_dim}, {"n_classes", kNumClasses}, {"level_input_dims", level_dims}};
  header["best_level"] = model.best_level;
  header["level_accuracy"] = model.level_accuracy;
  json forests = json::array();
  for (const auto& s : model.scanners) {
    forests.push_back(forest_header(s.random, {{"role", "scan"}, {"window", s.window}}));
    forests.push_back(forest_header(s.completely_random, {{"role", "scan"}, {"window", s.window}}));
  }
  for (std::size_t l = 0; l < model.levels.size(); ++l)
    for (int f = 0; f < kForestsPerLevel; ++f)
      forests.push_back(forest_header(model.levels[l].forests[f], {{"role", "level"}, {"level", l}, {"index", f}}));
  header["forests"] = forests;

  binio::Writer w;
  w.bytes("GCFS");
  w.u8(kGcfsVersion);
  const std::string text = header.dump();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  for (const auto& s : model.scanners) {
    write_forest(w, s.random);
    write_forest(w, s.completely_random);
  }
  for (const auto& l : model.levels)
    for (const auto& f : l.forests) write_forest(w, f);
  return std::move(w).data();
}

CascadeModel deserialize_gcforest(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  if (r.bytes(4) != "GCFS") throw Error(Errc::bad_magic, "not a GCFS model");
  const auto version = r.u8();
  if (version != kGcfsVersion) throw Error(Errc::unsupported_version, "GCFS version " + std::to_string(version));
  json header;
  try {
    header = json::parse(r.bytes(r.u32()));
  } catch (const json::exception& e) {
    throw Error(Errc::corrupt_metadata, std::string("GCFS header: ") + e.what());
  }
  CascadeModel model;
  try {
    auto& c = model.config;
    const auto& hc = header.at("config");
    c.scan.windows = hc.at("windows").get<std::vector<int>>();
    c.scan.stride = hc.at("stride").get<int>();
    c.scan.n_trees = hc.at("scan_trees").get<int>();
    c.scan.max_instances_per_class = hc.at("max_instances_per_class").get<std::size_t>();
    c.cascade.n_trees = hc.at("cascade_trees").get<int>();
    c.cascade.max_levels = hc.at("max_levels").get<int>();
    c.cascade.patience = hc.at("patience").get<int>();
    c.folds = hc.at("folds").get<int>();
    c.seed = header.at("seed").get<std::uint64_t>();
    model.scan_dim = header.at("dims").at("scan_dim").get<std::size_t>();
    model.best_level = header.at("best_level").get<int>();
    model.level_accuracy = header.at("level_accuracy").get<std::vector<double>>();
    const auto& forests = header.at("forests");
    std::size_t k = 0;
    auto next = [&]() -> const json& {
      if (k >= forests.size()) throw Error(Errc::corrupt_metadata, "GCFS forest list too short");
      return forests[k++];
    };
    while (k < forests.size() && forests[k].at("role") == "scan") {
      Scanner s;
      s.window = forests[k].at("window").get<int>();
      s.random = read_forest(r, next());
      s.completely_random = read_forest(r, next());
      model.scanners.push_back(std::move(s));
    }
    while (k < forests.size()) {
      CascadeLevel lv;
      for (auto& f : lv.forests) f = read_forest(r, next());
      lv.valid_accuracy = model.level_accuracy.at(model.levels.size());
      model.levels.push_back(std::move(lv));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::corrupt_metadata, std::string("GCFS header: ") + e.what());
  } catch (const std::out_of_range&) {
    throw Error(Errc::corrupt_metadata, "GCFS level accuracy list too short");
  }
  if (r.remaining() != 0) throw Error(Errc::corrupt_metadata, "GCFS trailing bytes");
  if (model.best_level < 0 || static_cast<std::size_t>(model.best_level) + 1 != model.levels.size())
    throw Error(Errc::corrupt_metadata, "GCFS best_level inconsistent with stored levels");
  return model;
}

void save_gcforest(const CascadeModel& model, const std::string& path) { binio::write_file(path, serialize(model)); }

CascadeModel load_gcforest(const std::string& path) { return deserialize_gcforest(binio::read_file(path)); }

}  // namespace hfcloud
