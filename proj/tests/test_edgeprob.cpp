#include <doctest.h>

#include <cmath>

#include "hfcloud/edgeprob.hpp"
#include "hfcloud/error.hpp"
#include "hfcloud/synthgen.hpp"
#include "test_support.hpp"

using namespace hfcloud;

namespace {

MultiBandImage step_image(int w, int h, int column, std::uint8_t left, std::uint8_t right) {
  MultiBandImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.channel(x, y, c) = x < column ? left : right;
  return img;
}

double max_abs_diff(const EdgeMap& a, const EdgeMap& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.prob.size(); ++i) d = std::max(d, std::abs(double{a.prob[i]} - b.prob[i]));
  return d;
}

}  // namespace

TEST_SUITE("edgeprob") {

TEST_CASE("constant image gives an all-zero map") {
  MultiBandImage img(20, 11);
  std::fill(img.rgb.begin(), img.rgb.end(), 77);
  const auto e = edge_probability(img);
  CHECK(e.width == 20);
  CHECK(e.height == 11);
  for (float v : e.prob) CHECK(v == 0.0f);
}

TEST_CASE("vertical step: each row peaks within one pixel of the step") {
  for (int c : {5, 16, 27}) {
    const auto e = edge_probability(step_image(32, 32, c, 20, 200));
    for (int y = 0; y < 32; ++y) {
      int best = 0;
      for (int x = 1; x < 32; ++x)
        if (e.at(x, y) > e.at(best, y)) best = x;
      CHECK(std::abs(best - c) <= 1);
    }
  }
}

TEST_CASE("parallel kernel equals the serial reference") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto img = testing::random_image(37 + static_cast<int>(seed), 29, seed);
    const auto fast = edge_probability(img);
    const auto ref = reference::gradient_multiscale(img);
    CHECK(max_abs_diff(fast, ref) < 1e-6);
  }
}

TEST_CASE("values lie in [0,1] and the maximum is 1") {
  const auto e = edge_probability(testing::random_image(40, 40, 5));
  float hi = 0;
  for (float v : e.prob) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
    hi = std::max(hi, v);
  }
  CHECK(hi == doctest::Approx(1.0));
}

TEST_CASE("luminance shift and contrast scaling leave the map unchanged") {
  auto img = testing::random_image(48, 40, 11);
  for (auto& v : img.rgb) v = static_cast<std::uint8_t>(40 + v / 4);  // room to shift and scale
  const auto base = edge_probability(img);
  auto shifted = img;
  for (auto& v : shifted.rgb) v = static_cast<std::uint8_t>(v + 30);
  CHECK(max_abs_diff(base, edge_probability(shifted)) < 1e-6);
  auto scaled = img;
  for (auto& v : scaled.rgb) v = static_cast<std::uint8_t>((v - 40) * 2);
  auto base_scaled_src = img;
  for (auto& v : base_scaled_src.rgb) v = static_cast<std::uint8_t>(v - 40);
  CHECK(max_abs_diff(edge_probability(base_scaled_src), edge_probability(scaled)) < 1e-6);
}

TEST_CASE("synthetic cloud boundary ring is much brighter than the rest") {
  SceneParams p;
  p.tile_size = 160;
  p.n_thick_blobs = 1;
  p.n_cirrus_halos = 0;
  p.n_buildings = 0;
  const auto scene = generate_tile(p);
  const auto e = edge_probability(scene.image);
  const int n = p.tile_size;
  double ring = 0, rest = 0;
  std::size_t n_ring = 0, n_rest = 0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const bool thick = scene.ground_truth[y * n + x] == 0;
      bool boundary = false;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx >= 0 && yy >= 0 && xx < n && yy < n && (scene.ground_truth[yy * n + xx] == 0) != thick) boundary = true;
        }
      (boundary ? ring : rest) += e.at(x, y);
      ++(boundary ? n_ring : n_rest);
    }
  REQUIRE(n_ring > 0);
  CHECK(ring / n_ring > 2 * (rest / n_rest));
}

TEST_CASE("external detector validates dimensions") {
  const auto img = testing::random_image(10, 10, 1);
  EdgeMap wrong{9, 10, std::vector<float>(90, 0.5f)};
  CHECK_THROWS_AS(edge_probability(img, EdgeDetector::external, wrong), Error);
  CHECK_THROWS_AS(edge_probability(img, EdgeDetector::external), Error);
  EdgeMap ok{10, 10, std::vector<float>(100, 0.25f)};
  CHECK(edge_probability(img, EdgeDetector::external, ok).prob == ok.prob);
}

TEST_CASE("edge map file keeps 16-bit precision") {
  testing::TempDir dir;
  const auto e = edge_probability(testing::random_image(30, 20, 4));
  save_edge_map(e, dir / "e.png");
  const auto back = load_edge_map(dir / "e.png");
  CHECK(back.width == 30);
  CHECK(back.height == 20);
  CHECK(max_abs_diff(e, back) <= 0.5 / 65535 + 1e-7);
}

}  // TEST_SUITE
