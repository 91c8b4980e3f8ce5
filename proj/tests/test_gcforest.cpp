#include <doctest.h>

#include <numeric>

#include "fixtures.hpp"
#include "hfcloud/gcforest.hpp"
#include "test_support.hpp"

using namespace hfcloud;

namespace {

GcForestConfig small_config() {
  GcForestConfig c;
  c.scan.n_trees = 4;
  c.scan.windows = {8, 16};
  c.scan.stride = 8;
  c.cascade.n_trees = 10;
  c.cascade.max_levels = 3;
  c.seed = 5;
  return c;
}

/// Forest with a single one-leaf tree voting for `cls`.
Forest constant_forest(int cls) {
  Forest f;
  f.n_classes = 4;
  DecisionTree t;
  t.n_classes = 4;
  t.nodes.push_back(TreeNode{});
  t.leaf_counts = {0, 0, 0, 0};
  t.leaf_counts[cls] = 3;
  f.trees.push_back(t);
  return f;
}

CascadeModel hand_model(std::array<int, 4> classes) {
  CascadeModel m;
  m.scan_dim = 2;
  CascadeLevel lv;
  for (int i = 0; i < 4; ++i) lv.forests[i] = constant_forest(classes[i]);
  m.levels.push_back(lv);
  m.level_accuracy = {1.0};
  m.best_level = 0;
  return m;
}

void check_prediction(const CascadePrediction& p) {
  double s = 0;
  for (int k = 0; k < 4; ++k) {
    double mean = 0;
    for (int f = 0; f < 4; ++f) mean += p.class_vectors[f * 4 + k];
    CHECK(std::abs(p.probs[k] - mean / 4) < 1e-12);
    CHECK(p.probs[k] >= 0);
    s += p.probs[k];
  }
  CHECK(std::abs(s - 1.0) < 1e-9);
}

}  // namespace

TEST_SUITE("gcforest") {

TEST_CASE("scan feature arithmetic") {
  CHECK(scan_positions(8, 4) == 49);
  CHECK(scan_positions(16, 4) == 25);
  ScanConfig one;
  one.windows = {8};
  CHECK(scan_feature_length(one) == 392);
  CHECK(scan_feature_length(ScanConfig{}) == 592);
  CHECK_THROWS_AS(scan_positions(33, 4), Error);
  GcForestConfig big;
  big.scan.windows = {8, 40};
  CHECK_THROWS_AS(big.validate(), Error);
}

TEST_CASE("config validation") {
  GcForestConfig c;
  c.cascade.patience = 0;
  try {
    c.validate();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::config);
  }
  c = {};
  c.scan.windows = {16, 8};
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.folds = 1;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK_NOTHROW(GcForestConfig{}.validate());
}

TEST_CASE("window_instances layout") {
  const auto img = testing::random_tensor<float>(2, 3, 32, 32, 3, 0, 1);
  const auto w = window_instances(img, 1, 8, 4);
  CHECK(w.rows == 49);
  CHECK(w.cols == 3u * 64);
  // Position 8 is row 1, column 1 of the 7x7 grid: origin (4, 4).
  CHECK(w.row(8)[0] == img.at(1, 0, 4, 4));
  CHECK(w.row(8)[64 + 8 + 3] == img.at(1, 1, 5, 7));
  CHECK(w.row(48)[2 * 64 + 63] == img.at(1, 2, 31, 31));
}

TEST_CASE("constant patch gives identical position vectors per forest") {
  const auto data = fixtures::synthetic_patch_set(5, 3);
  auto cfg = small_config();
  cfg.scan.stride = 4;
  cfg.scan.windows = {8};
  const auto scanners = train_scanners(data.images, data.labels, cfg);
  Patch p;
  std::fill(p.pixels.begin(), p.pixels.end(), 0.6f);
  const auto f = multi_grained_scan(p, scanners, 4);
  REQUIRE(f.size() == 392);
  for (int forest = 0; forest < 2; ++forest)
    for (int pos = 1; pos < 49; ++pos)
      for (int k = 0; k < 4; ++k) CHECK(f[(forest * 49 + pos) * 4 + k] == f[forest * 49 * 4 + k]);
  for (int i = 0; i < 98; ++i) {
    double s = 0;
    for (int k = 0; k < 4; ++k) s += f[i * 4 + k];
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("prediction is the mean of the four forests") {
  const auto same = hand_model({0, 0, 0, 0});
  FeatureMatrix x(1, 2);
  const auto p = predict_from_features(same, x)[0];
  CHECK(p.probs == std::array<double, 4>{1, 0, 0, 0});
  const auto mixed = hand_model({0, 1, 2, 3});
  const auto q = predict_from_features(mixed, x)[0];
  CHECK(q.probs == std::array<double, 4>{0.25, 0.25, 0.25, 0.25});
  check_prediction(q);
  CHECK(q.class_vectors[5] == 1.0);
  CHECK_THROWS_AS(predict_from_features(mixed, FeatureMatrix(1, 3)), Error);
}

TEST_CASE("untrained model") {
  CascadeModel m;
  try {
    predict_from_features(m, FeatureMatrix(1, 1));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::untrained);
  }
  CHECK_THROWS_AS(serialize(m), Error);
}

TEST_CASE("cascade on a separable toy") {
  const auto train = fixtures::box_toy(40, 6, 30);
  const auto valid = fixtures::box_toy(15, 6, 31);
  CascadeModel m;
  m.config = small_config();
  m.config.cascade.max_levels = 5;
  train_cascade(m, train.x, train.y, valid.x, valid.y);
  REQUIRE(m.trained());
  CHECK(m.best_level <= 1);
  CHECK(m.level_accuracy[m.best_level] == 1.0);
  CHECK(m.level_accuracy.size() <= 3);
  CHECK(m.levels.size() == static_cast<std::size_t>(m.best_level) + 1);
  for (double a : m.level_accuracy) CHECK(m.level_accuracy[m.best_level] >= a);
  for (const auto& p : predict_from_features(m, valid.x)) check_prediction(p);
}

TEST_CASE("cascade on noisy data keeps the best level") {
  auto train = fixtures::xor_toy(300, 40);
  auto valid = fixtures::xor_toy(100, 41);
  // Label noise so later levels have something to disagree about.
  for (std::size_t i = 0; i < train.y.size(); i += 7) train.y[i] = 1 - train.y[i];
  CascadeModel m;
  m.config = small_config();
  m.config.cascade.max_levels = 4;
  m.config.cascade.patience = 2;
  train_cascade(m, train.x, train.y, valid.x, valid.y);
  CHECK(m.level_accuracy[m.best_level] >= m.level_accuracy[0]);
  for (int l = 0; l < m.best_level; ++l) CHECK(m.level_accuracy[m.best_level] >= m.level_accuracy[l]);
  CHECK(m.level_input_dim(0) == 2);
  CHECK(m.level_input_dim(1) == 2 + kClassVectorDim);
}

TEST_CASE("validation set missing a class only warns") {
  const auto train = fixtures::box_toy(20, 4, 50);
  auto valid = fixtures::box_toy(5, 4, 51);
  fixtures::Toy partial{FeatureMatrix(0, 4), {}};
  std::vector<float> rows;
  for (std::size_t i = 0; i < valid.x.rows; ++i)
    if (valid.y[i] != 3) {
      rows.insert(rows.end(), valid.x.row(i).begin(), valid.x.row(i).end());
      partial.y.push_back(valid.y[i]);
    }
  partial.x.rows = partial.y.size();
  partial.x.data = rows;
  CascadeModel m;
  m.config = small_config();
  CHECK_NOTHROW(train_cascade(m, train.x, train.y, partial.x, partial.y));
  CHECK(m.trained());
}

TEST_CASE("end to end on patches: determinism and serialization") {
  const auto train = fixtures::synthetic_patch_set(8, 60);
  const auto valid = fixtures::synthetic_patch_set(3, 90);
  const auto cfg = small_config();
  const auto a = train_gcforest(train.images, train.labels, valid.images, valid.labels, cfg);
  const auto b = train_gcforest(train.images, train.labels, valid.images, valid.labels, cfg);
  const auto bytes = serialize(a);
  CHECK(bytes == serialize(b));
  CHECK(a.scan_dim == scan_feature_length(cfg.scan));

  const auto back = deserialize_gcforest(bytes);
  CHECK(serialize(back) == bytes);
  const auto pa = predict(a, valid.images), pb = predict(back, valid.images);
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].probs == pb[i].probs);
    CHECK(pa[i].class_vectors == pb[i].class_vectors);
    check_prediction(pa[i]);
  }
  Patch p;
  std::copy_n(valid.images.sample(2), p.pixels.size(), p.pixels.begin());
  CHECK(predict(a, p).probs == pa[2].probs);

  testing::TempDir dir;
  save_gcforest(a, dir / "m.gcfs");
  CHECK(serialize(load_gcforest(dir / "m.gcfs")) == bytes);

  auto code_of = [](std::vector<std::uint8_t> v) {
    try {
      deserialize_gcforest(v);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::io;
  };
  auto cut = bytes;
  cut.resize(cut.size() / 2);
  CHECK(code_of(cut) == Errc::truncated);
  auto ver = bytes;
  ver[4] = 200;
  CHECK(code_of(ver) == Errc::unsupported_version);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK(code_of(magic) == Errc::bad_magic);

  auto other = cfg;
  other.seed = 6;
  CHECK(serialize(train_gcforest(train.images, train.labels, valid.images, valid.labels, other)) != bytes);
}

}  // TEST_SUITE
