#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "hfcloud/edgeprob.hpp"
#include "hfcloud/error.hpp"
#include "hfcloud/superpixel.hpp"
#include "hfcloud/synthgen.hpp"
#include "test_support.hpp"

using namespace hfcloud;

namespace {

/// 4-connected component count via flood fill, plus the smallest component.
std::pair<std::size_t, std::size_t> components(const SuperPixelMap& m) {
  std::vector<int> seen(m.label.size(), 0);
  std::size_t count = 0, smallest = m.label.size();
  std::vector<std::size_t> stack;
  for (std::size_t s = 0; s < m.label.size(); ++s) {
    if (seen[s]) continue;
    ++count;
    std::size_t size = 0;
    stack.assign(1, s);
    seen[s] = 1;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++size;
      const int x = static_cast<int>(i % m.width), y = static_cast<int>(i / m.width);
      const int nx[4] = {x + 1, x - 1, x, x}, ny[4] = {y, y, y + 1, y - 1};
      for (int d = 0; d < 4; ++d) {
        if (nx[d] < 0 || ny[d] < 0 || nx[d] >= m.width || ny[d] >= m.height) continue;
        const std::size_t j = static_cast<std::size_t>(ny[d]) * m.width + nx[d];
        if (!seen[j] && m.label[j] == m.label[i]) {
          seen[j] = 1;
          stack.push_back(j);
        }
      }
    }
    smallest = std::min(smallest, size);
  }
  return {count, smallest};
}

MultiBandImage constant_image(int w, int h, std::uint8_t v) {
  MultiBandImage img(w, h);
  std::fill(img.rgb.begin(), img.rgb.end(), v);
  return img;
}

MultiBandImage vertical_step(int w, int h, int column) {
  MultiBandImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.channel(x, y, c) = x < column ? 30 : 220;
  return img;
}

/// Relabels ids by first appearance so maps can be compared up to renumbering.
std::vector<std::uint32_t> canonical(const SuperPixelMap& m) {
  std::map<std::uint32_t, std::uint32_t> ids;
  std::vector<std::uint32_t> out;
  for (auto v : m.label) out.push_back(ids.emplace(v, static_cast<std::uint32_t>(ids.size())).first->second);
  return out;
}

}  // namespace

TEST_SUITE("superpixel") {

TEST_CASE("grid_init produces exactly K rectangles covering the image") {
  for (auto [w, h, k] : {std::tuple{500, 500, 600}, std::tuple{32, 32, 4}, std::tuple{37, 19, 7}, std::tuple{10, 3, 30}}) {
    const auto m = grid_init(w, h, k);
    CHECK(m.n_regions == static_cast<std::uint32_t>(k));
    std::vector<std::size_t> area(k, 0);
    for (auto v : m.label) ++area[v];
    for (auto a : area) CHECK(a > 0);
    CHECK(components(m).first == static_cast<std::size_t>(k));
  }
  CHECK_THROWS_AS(grid_init(4, 4, 17), Error);
  CHECK_THROWS_AS(grid_init(4, 4, 0), Error);
}

TEST_CASE("constant image with K=4 gives four near-equal regions") {
  const auto img = constant_image(32, 32, 128);
  SegmentParams p;
  p.n_superpixels = 4;
  const auto m = segment(img, edge_probability(img), p);
  REQUIRE(m.n_regions == 4);
  std::vector<int> area(4, 0);
  for (auto v : m.label) ++area[v];
  for (int a : area) CHECK(std::abs(a - 256) <= 16);
}

TEST_CASE("K=1 covers the whole image") {
  const auto img = testing::random_image(20, 15, 2);
  SegmentParams p;
  p.n_superpixels = 1;
  const auto m = segment(img, edge_probability(img), p);
  CHECK(m.n_regions == 1);
  for (auto v : m.label) CHECK(v == 0);
}

TEST_CASE("vertical step: boundary within one pixel of the step in at least 30 of 32 rows") {
  const auto img = vertical_step(32, 32, 16);
  SegmentParams p;
  p.n_superpixels = 2;
  const auto m = segment(img, edge_probability(img), p);
  int good = 0;
  for (int y = 0; y < 32; ++y) {
    int boundary = -1;
    for (int x = 1; x < 32; ++x)
      if (m.at(x, y) != m.at(x - 1, y)) boundary = x;
    good += boundary >= 15 && boundary <= 17;
  }
  CHECK(good >= 30);
}

TEST_CASE("energy is non-increasing across sweeps") {
  SceneParams sp;
  sp.tile_size = 96;
  sp.n_buildings = 3;
  for (std::uint64_t seed : {3, 4}) {
    sp.seed = seed;
    const auto img = generate_tile(sp).image;
    SegmentParams p;
    p.n_superpixels = 40;
    p.iterations = 6;
    std::vector<double> trace;
    segment(img, edge_probability(img), p, &trace);
    REQUIRE(trace.size() == 7);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-6 * std::abs(trace[i - 1]));
    CHECK(trace.back() < trace.front());
  }
}

TEST_CASE("segment keeps regions connected and the partition total") {
  const auto img = testing::random_image(64, 48, 8);
  SegmentParams p;
  p.n_superpixels = 30;
  const auto m = segment(img, edge_probability(img), p);
  CHECK(m.label.size() == 64u * 48u);
  validate(m);
  CHECK(components(m).first == m.n_regions);
}

TEST_CASE("enforce_connectivity absorbs a small island") {
  SuperPixelMap m;
  m.width = 12;
  m.height = 12;
  m.n_regions = 2;
  m.label.assign(144, 0);
  m.label[5 * 12 + 5] = m.label[5 * 12 + 6] = m.label[6 * 12 + 5] = 1;
  const auto out = enforce_connectivity(m, 10);
  CHECK(out.n_regions == 1);
  for (auto v : out.label) CHECK(v == 0);
}

TEST_CASE("enforce_connectivity is the identity when every region is large enough") {
  const auto m = grid_init(40, 40, 9);
  const auto out = enforce_connectivity(m, 10);
  CHECK(out.n_regions == m.n_regions);
  CHECK(canonical(out) == canonical(m));
}

TEST_CASE("enforce_connectivity on random maps leaves connected regions of at least min_area") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto m = testing::random_map(64, 64, 5, seed);
    const auto out = enforce_connectivity(m, 10);
    validate(out);
    const auto [count, smallest] = components(out);
    CHECK(count == out.n_regions);
    CHECK(smallest >= 10);
    CHECK(out.label.size() == 64u * 64u);
  }
}

TEST_CASE("region_stats") {
  MultiBandImage img(4, 4);
  std::fill(img.nir.begin(), img.nir.end(), 800);
  SuperPixelMap one{4, 4, 1, std::vector<std::uint32_t>(16, 0)};
  const auto s = region_stats(one, img);
  REQUIRE(s.size() == 1);
  CHECK(s[0].area == 16);
  CHECK(s[0].mean_nir == 800);
  CHECK(s[0].cx == 1.5);
  CHECK(s[0].cy == 1.5);

  SuperPixelMap halves{4, 4, 2, {}};
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) halves.label.push_back(x < 2 ? 0 : 1);
  const auto h = region_stats(halves, img);
  CHECK(h[0].cx == 0.5);
  CHECK(h[0].cy == 1.5);
  CHECK(h[1].cx == 2.5);
  CHECK(h[1].cy == 1.5);

  const auto rimg = testing::random_image(30, 20, 6);
  const auto rmap = enforce_connectivity(testing::random_map(30, 20, 4, 6), 1);
  const auto rs = region_stats(rmap, rimg);
  for (std::uint32_t r = 0; r < rmap.n_regions; ++r) {
    double n = 0, sx = 0, sy = 0, nir = 0, red = 0;
    int x0 = 1 << 30, x1 = -1;
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 30; ++x)
        if (rmap.at(x, y) == r) {
          n += 1;
          sx += x;
          sy += y;
          nir += rimg.nir_at(x, y);
          red += rimg.channel(x, y, 0);
          x0 = std::min(x0, x);
          x1 = std::max(x1, x);
        }
    CHECK(rs[r].area == static_cast<std::size_t>(n));
    CHECK(rs[r].cx == doctest::Approx(sx / n));
    CHECK(rs[r].cy == doctest::Approx(sy / n));
    CHECK(rs[r].mean_nir == doctest::Approx(nir / n));
    CHECK(rs[r].mean_rgb[0] == doctest::Approx(red / n));
    CHECK(rs[r].x0 == x0);
    CHECK(rs[r].x1 == x1);
  }
}

TEST_CASE("adjacency") {
  SuperPixelMap two{4, 2, 2, {0, 0, 1, 1, 0, 0, 1, 1}};
  const auto g2 = adjacency(two);
  CHECK(g2[0] == std::vector<std::uint32_t>{1});
  CHECK(g2[1] == std::vector<std::uint32_t>{0});

  SuperPixelMap three{3, 2, 3, {0, 1, 2, 0, 1, 2}};
  const auto g3 = adjacency(three);
  CHECK(g3[0] == std::vector<std::uint32_t>{1});
  CHECK(g3[1] == std::vector<std::uint32_t>({0, 2}));
  CHECK(g3[2] == std::vector<std::uint32_t>{1});

  const auto m = testing::random_map(64, 64, 12, 17);
  std::vector<std::set<std::uint32_t>> oracle(12);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      if (x + 1 < 64 && m.at(x, y) != m.at(x + 1, y)) {
        oracle[m.at(x, y)].insert(m.at(x + 1, y));
        oracle[m.at(x + 1, y)].insert(m.at(x, y));
      }
      if (y + 1 < 64 && m.at(x, y) != m.at(x, y + 1)) {
        oracle[m.at(x, y)].insert(m.at(x, y + 1));
        oracle[m.at(x, y + 1)].insert(m.at(x, y));
      }
    }
  const auto g = adjacency(m);
  for (std::uint32_t r = 0; r < 12; ++r) {
    CHECK(g[r] == std::vector<std::uint32_t>(oracle[r].begin(), oracle[r].end()));
    for (auto q : g[r]) CHECK(std::find(g[q].begin(), g[q].end(), r) != g[q].end());
  }
}

TEST_CASE("extract_patch geometry") {
  const auto img = testing::random_image(100, 80, 12);
  RegionStats r;
  r.x0 = 40;
  r.x1 = 51;
  r.y0 = 30;
  r.y1 = 36;
  r.area = 1;
  const auto origin = patch_origin(100, 80, r);
  // bbox centre (45, 33) rounded down; the patch's centre pixel is origin + 16.
  CHECK(origin[0] + 16 == 45);
  CHECK(origin[1] + 16 == 33);
  const Patch p = extract_patch(img, r);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) CHECK(p.at(c, y, x) == img.channel(origin[0] + x, origin[1] + y, c) / 255.0f);

  RegionStats corner;
  corner.x0 = corner.y0 = 0;
  corner.x1 = corner.y1 = 3;
  corner.area = 1;
  const auto o2 = patch_origin(100, 80, corner);
  CHECK(o2[0] == 0);
  CHECK(o2[1] == 0);
  corner.x0 = 97;
  corner.x1 = 99;
  corner.y0 = 78;
  corner.y1 = 79;
  const auto o3 = patch_origin(100, 80, corner);
  CHECK(o3[0] == 68);
  CHECK(o3[1] == 48);
  CHECK_THROWS_AS(extract_patch(img, r, 16), Error);
}

TEST_CASE("patches from a synthetic tile hold only source pixel values") {
  SceneParams sp;
  sp.tile_size = 128;
  sp.n_buildings = 4;
  const auto img = generate_tile(sp).image;
  SegmentParams p;
  p.n_superpixels = 40;
  const auto m = enforce_connectivity(segment(img, edge_probability(img), p), 10);
  for (const auto& st : region_stats(m, img)) {
    const Patch patch = extract_patch(img, st);
    REQUIRE(patch.pixels.size() == 3u * 32u * 32u);
    const auto o = patch_origin(img.width, img.height, st);
    CHECK(o[0] >= 0);
    CHECK(o[1] >= 0);
    CHECK(o[0] + 32 <= img.width);
    CHECK(o[1] + 32 <= img.height);
    CHECK(patch.at(1, 7, 9) == img.channel(o[0] + 9, o[1] + 7, 1) / 255.0f);
  }
}

TEST_CASE("SPXM round trip and corruption") {
  const auto m = enforce_connectivity(testing::random_map(33, 21, 6, 4), 1);
  const auto bytes = encode_spxm(m);
  CHECK(decode_spxm(bytes) == m);

  testing::TempDir dir;
  save_spxm(m, dir / "m.spxm");
  CHECK(load_spxm(dir / "m.spxm") == m);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_spxm(bad), Error);
  auto ver = bytes;
  ver[4] = 9;
  try {
    decode_spxm(ver);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::unsupported_version);
  }
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  try {
    decode_spxm(cut);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::truncated);
  }
}

}  // TEST_SUITE
