#include <doctest.h>

#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "hfcloud/binio.hpp"
#include "hfcloud/hfcnn.hpp"
#include "hfcloud/nn_reference.hpp"
#include "test_support.hpp"

using namespace hfcloud;

namespace {

double max_abs_rel(const Tensor<float>& a, const Tensor<float>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(double(a.data[i]) - b.data[i]) / std::max(1.0, std::abs(double(b.data[i]))));
  return worst;
}

Tensor<float> relu(Tensor<float> t) {
  for (auto& v : t.data) v = std::max(v, 0.0f);
  return t;
}

}  // namespace

TEST_SUITE("hfcnn") {

TEST_CASE("parameter shapes") {
  const HfcnnModel m;
  CHECK(m.params.conv1_w.size() == 32u * 3 * 25);
  CHECK(m.params.conv2_w.size() == 32u * 32 * 25);
  CHECK(m.params.conv3_w.size() == 64u * 32 * 25);
  CHECK(m.params.conv3_b.size() == 64u);
  CHECK(m.params.fc_w.size() == 4u * 128);
  CHECK(m.params.fc_b.size() == 4u);
}

TEST_CASE("zero linear layer gives uniform probabilities") {
  auto m = HfcnnModel::initialized(3);
  std::fill(m.params.fc_w.begin(), m.params.fc_w.end(), 0.0f);
  const auto out = m.forward(testing::random_tensor<float>(3, 3, 32, 32, 1, 0, 1));
  for (float p : out.probs.data) CHECK(p == 0.25f);
  CHECK(out.features.shape == std::array<int, 4>{3, 128, 1, 1});
}

TEST_CASE("forward: duplicate samples give identical rows, rows sum to one") {
  const auto m = HfcnnModel::initialized(4);
  auto x = testing::random_tensor<float>(4, 3, 32, 32, 2, 0, 1);
  std::copy_n(x.sample(0), x.sample_size(), x.sample(1));
  const auto out = m.forward(x);
  CHECK(std::equal(out.probs.sample(0), out.probs.sample(0) + 4, out.probs.sample(1)));
  CHECK(std::equal(out.features.sample(0), out.features.sample(0) + 128, out.features.sample(1)));
  for (int b = 0; b < 4; ++b) {
    double s = 0;
    for (int k = 0; k < 4; ++k) {
      CHECK(out.probs.at(b, k, 0, 0) > 0.0f);
      CHECK(out.probs.at(b, k, 0, 0) < 1.0f);
      s += out.probs.at(b, k, 0, 0);
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
  CHECK_THROWS_AS(m.forward(Tensor<float>(1, 3, 28, 28)), Error);
  CHECK_THROWS_AS(m.forward(Tensor<float>(1, 4, 32, 32)), Error);
}

TEST_CASE("every stage matches the nested-loop oracles") {
  const auto m = HfcnnModel::initialized(5);
  const auto x = testing::random_tensor<float>(2, 3, 32, 32, 3, 0, 1);
  HfcnnCache<float> c;
  m.forward(x, c);
  using nn::reference::avgpool;
  using nn::reference::conv2d;
  using nn::reference::maxpool;
  auto standardized = x;
  for (auto& v : standardized.data) v = (v - 0.5f) / 0.25f;
  CHECK(c.input.data == standardized.data);
  const auto f1 = relu(conv2d<float>(standardized, m.params.conv1_w, m.params.conv1_b, HfcnnModel::kConv1));
  CHECK(max_abs_rel(c.f1, f1) < 1e-5);
  const auto p1 = maxpool(c.f1, HfcnnModel::kPool);
  CHECK(max_abs_rel(c.pool1, p1) < 1e-5);
  const auto f2 = relu(conv2d<float>(c.pool1, m.params.conv2_w, m.params.conv2_b, HfcnnModel::kConv2));
  CHECK(max_abs_rel(c.f2, f2) < 1e-5);
  const auto p2 = avgpool(c.f2, HfcnnModel::kPool);
  CHECK(max_abs_rel(c.pool2, p2) < 1e-5);
  const auto f3 = relu(conv2d<float>(c.pool2, m.params.conv3_w, m.params.conv3_b, HfcnnModel::kConv3));
  CHECK(max_abs_rel(c.f3, f3) < 1e-5);
  CHECK(c.fused.shape == std::array<int, 4>{2, 128, 32, 32});
  for (int b = 0; b < 2; ++b)
    for (int ch = 0; ch < 128; ++ch) {
      double s = 0;
      for (float v : std::span(c.fused.data).subspan((b * 128 + ch) * 1024, 1024)) s += v;
      CHECK(c.features.at(b, ch, 0, 0) == doctest::Approx(s / 1024).epsilon(1e-5));
    }
}

TEST_CASE("fuse_features layout") {
  Tensor<float> f1(1, 32, 32, 32), f2(1, 32, 16, 16), f3(1, 64, 8, 8);
  std::fill(f3.data.begin(), f3.data.end(), 5.0f);
  f2.at(0, 0, 0, 0) = 1.0f;
  const auto out = fuse_features(f1, f2, f3);
  for (int ch = 64; ch < 128; ++ch)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) CHECK(out.at(0, ch, y, x) == 5.0f);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) CHECK(out.at(0, 32, y, x) == ((y < 2 && x < 2) ? 1.0f : 0.0f));
  CHECK_THROWS_AS(fuse_features(f1, f3, f2), Error);
}

TEST_CASE("fuse_features equals the index oracle and keeps stage channels separate") {
  const auto f1 = testing::random_tensor<float>(2, 32, 32, 32, 1);
  const auto f2 = testing::random_tensor<float>(2, 32, 16, 16, 2);
  const auto f3 = testing::random_tensor<float>(2, 64, 8, 8, 3);
  const auto out = fuse_features(f1, f2, f3);
  for (int b = 0; b < 2; ++b)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        for (int ch = 0; ch < 32; ++ch) CHECK(out.at(b, ch, y, x) == f1.at(b, ch, y, x));
        for (int ch = 0; ch < 32; ++ch) CHECK(out.at(b, 32 + ch, y, x) == f2.at(b, ch, y / 2, x / 2));
        for (int ch = 0; ch < 64; ++ch) CHECK(out.at(b, 64 + ch, y, x) == f3.at(b, ch, y / 4, x / 4));
      }
  const auto only3 = fuse_features(Tensor<float>(2, 32, 32, 32), Tensor<float>(2, 32, 16, 16), f3);
  for (std::size_t b = 0; b < 2; ++b) {
    const std::size_t base = b * 128 * 1024;
    CHECK(std::equal(out.data.begin() + base + 64 * 1024, out.data.begin() + base + 128 * 1024,
                     only3.data.begin() + base + 64 * 1024));
    CHECK(std::all_of(only3.data.begin() + base, only3.data.begin() + base + 64 * 1024, [](float v) { return v == 0; }));
  }
}

TEST_CASE("whole-network parameter gradients match central differences") {
  for (const auto& [name, err] : gradcheck::hfcnn_parameter_errors(11, 12)) {
    CAPTURE(name);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("train_step: null update and descent") {
  auto m = HfcnnModel::initialized(6);
  const auto x = testing::random_tensor<float>(8, 3, 32, 32, 4, 0, 1);
  const std::vector<int> y{0, 1, 2, 3, 0, 1, 2, 3};
  auto state = make_sgd_state(m);
  TrainConfig zero;
  zero.lr = 0;
  zero.momentum = 0;
  const auto before = m.params;
  train_step(m, state, x, y, zero);
  CHECK(m.params == before);

  TrainConfig cfg;
  cfg.momentum = 0;
  state = make_sgd_state(m);
  float prev = train_step(m, state, x, y, cfg);
  int decreases = 0;
  for (int i = 0; i < 20; ++i) {
    const float loss = train_step(m, state, x, y, cfg);
    decreases += loss < prev;
    prev = loss;
  }
  CHECK(decreases == 20);
}

TEST_CASE("train_step reports divergence and leaves parameters alone") {
  auto m = HfcnnModel::initialized(7);
  const auto x = testing::random_tensor<float>(2, 3, 32, 32, 4, 0, 1);
  const std::vector<int> y{0, 1};
  auto state = make_sgd_state(m);
  m.params.fc_b[2] = std::numeric_limits<float>::infinity();
  m.params.fc_b[3] = -std::numeric_limits<float>::infinity();
  const auto before = m.params;
  try {
    train_step(m, state, x, y, TrainConfig{});
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::divergence);
  }
  CHECK(m.params == before);
}

TEST_CASE("train: history length, determinism, config errors") {
  const auto data = fixtures::synthetic_patch_set(4, 21);
  TrainConfig cfg;
  cfg.max_iterations = 12;
  cfg.batch_size = 8;
#ifdef _OPENMP
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
#endif
  auto a = HfcnnModel::initialized(1), b = HfcnnModel::initialized(1);
  const auto ha = train(a, data, cfg);
  const auto hb = train(b, data, cfg);
#ifdef _OPENMP
  omp_set_num_threads(saved);
#endif
  CHECK(ha.loss.size() == 12);
  CHECK(ha.accuracy.size() == 12);
  CHECK(a.params == b.params);
  CHECK(ha.loss == hb.loss);
  CHECK(a.iterations == 12);

  TensorBatch empty;
  CHECK_THROWS_AS(train(a, empty, cfg), Error);
  TrainConfig bad;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = {};
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("training drives loss down on real patches") {
  const auto data = fixtures::synthetic_patch_set(8, 31);
  auto m = HfcnnModel::initialized(2);
  TrainConfig cfg;
  cfg.max_iterations = 150;
  cfg.batch_size = 16;
  const auto h = train(m, data, cfg);
  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) {
    first += h.loss[i];
    last += h.loss[h.loss.size() - 1 - i];
  }
  CHECK(last < first);
}

TEST_CASE("predict_chunked equals forward") {
  const auto m = HfcnnModel::initialized(8);
  const auto x = testing::random_tensor<float>(7, 3, 32, 32, 5, 0, 1);
  const auto whole = m.forward(x);
  const auto parts = predict_chunked(m, x, 3);
  CHECK(whole.probs.data == parts.probs.data);
  CHECK(whole.features.data == parts.features.data);
}

TEST_CASE("serialization round trip and errors") {
  auto m = HfcnnModel::initialized(9);
  m.iterations = 77;
  const auto bytes = serialize(m);
  const auto back = deserialize_hfcnn(bytes);
  CHECK(back.params == m.params);
  CHECK(back.iterations == 77);
  CHECK(back.seed == m.seed);
  const auto x = testing::random_tensor<float>(3, 3, 32, 32, 6, 0, 1);
  CHECK(m.forward(x).probs.data == back.forward(x).probs.data);

  testing::TempDir dir;
  save_hfcnn(m, dir / "m.hfcn");
  CHECK(load_hfcnn(dir / "m.hfcn").params == m.params);

  auto code_of = [](std::vector<std::uint8_t> b) {
    try {
      deserialize_hfcnn(b);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::io;
  };
  auto cut = bytes;
  cut.resize(cut.size() - 5);
  CHECK(code_of(cut) == Errc::truncated);
  auto ver = bytes;
  ver[4] = 255;
  CHECK(code_of(ver) == Errc::unsupported_version);
  auto magic = bytes;
  magic[1] = 'X';
  CHECK(code_of(magic) == Errc::bad_magic);
  CHECK(code_of({}) != Errc::io);
}

}  // TEST_SUITE
