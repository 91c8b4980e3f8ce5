#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "hfcloud/binio.hpp"
#include "hfcloud/error.hpp"
#include "hfcloud/image_io.hpp"
#include "hfcloud/raster.hpp"
#include "hfcloud/synthgen.hpp"
#include "test_support.hpp"

using namespace hfcloud;

TEST_SUITE("raster") {

TEST_CASE("container round trip is bit exact") {
  testing::TempDir dir;
  for (auto [w, h] : {std::pair{8, 8}, std::pair{13, 5}, std::pair{1, 1}}) {
    const auto img = testing::random_image(w, h, static_cast<std::uint64_t>(w * 100 + h));
    save_image(img, dir / "c");
    const auto back = load_image(dir / "c");
    CHECK(back == img);
    CHECK(back.width == w);
    CHECK(back.height == h);
    CHECK(back.nir_max == 1023);
  }
}

TEST_CASE("synthetic tile loads with per-pixel equality") {
  testing::TempDir dir;
  SceneParams p;
  p.seed = 1;
  p.tile_size = 128;
  p.n_buildings = 4;
  const auto scene = generate_tile(p);
  save_scene(scene, dir / "t");
  CHECK(load_image(dir / "t") == scene.image);
}

TEST_CASE("nir band size disagreeing with rgb is a dimension mismatch") {
  testing::TempDir dir;
  save_image(testing::random_image(8, 8, 3), dir / "c");
  std::vector<std::uint16_t> nir(7 * 8, 100);
  image_io::write_gray16(dir / "c/nir.png", 7, 8, nir);
  try {
    load_image(dir / "c");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::dimension_mismatch);
  }
}

TEST_CASE("missing and corrupt containers report distinct errors") {
  testing::TempDir dir;
  try {
    load_image(dir / "nothing");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::missing_file);
  }
  save_image(testing::random_image(4, 4, 1), dir / "c");
  binio::write_text(dir / "c/meta.json", "{\"width\": 4, \"height\": ");
  try {
    load_image(dir / "c");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::corrupt_metadata);
  }
}

TEST_CASE("validate rejects NIR above the ceiling and short buffers") {
  MultiBandImage img(4, 4);
  img.nir[3] = 1024;
  CHECK_THROWS_AS(img.validate(), Error);
  MultiBandImage short_rgb(4, 4);
  short_rgb.rgb.pop_back();
  CHECK_THROWS_AS(short_rgb.validate(), Error);
}

TEST_CASE("crop_tiles uses floor division and row-major offsets") {
  const auto a = crop_tiles(MultiBandImage(1000, 1000), 500);
  REQUIRE(a.size() == 4);
  CHECK(a[0].offset_x == 0);
  CHECK(a[0].offset_y == 0);
  CHECK(a[1].offset_x == 500);
  CHECK(a[1].offset_y == 0);
  CHECK(a[2].offset_x == 0);
  CHECK(a[2].offset_y == 500);
  CHECK(a[3].offset_x == 500);
  CHECK(a[3].offset_y == 500);
  CHECK(crop_tiles(MultiBandImage(1200, 500), 500).size() == 2);
  CHECK(crop_tiles(MultiBandImage(499, 499), 500).empty());
  CHECK_THROWS_AS(crop_tiles(MultiBandImage(64, 64), 31), Error);
}

TEST_CASE("crop_tiles pixels match the source and tiles are disjoint") {
  const auto img = testing::random_image(100, 70, 9);
  const auto tiles = crop_tiles(img, 32);
  REQUIRE(tiles.size() == 6);
  std::vector<int> cover(100 * 70, 0);
  for (const auto& t : tiles) {
    CHECK(t.image.width == 32);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        ++cover[(t.offset_y + y) * 100 + t.offset_x + x];
        for (int c = 0; c < 3; ++c) CHECK(t.image.channel(x, y, c) == img.channel(t.offset_x + x, t.offset_y + y, c));
        CHECK(t.image.nir_at(x, y) == img.nir_at(t.offset_x + x, t.offset_y + y));
      }
  }
  for (int y = 0; y < 70; ++y)
    for (int x = 0; x < 100; ++x) CHECK(cover[y * 100 + x] == ((x < 96 && y < 64) ? 1 : 0));
}

TEST_CASE("band_stats") {
  MultiBandImage flat(5, 3);
  std::fill(flat.nir.begin(), flat.nir.end(), 700);
  const auto s = band_stats(flat, Band::NIR);
  CHECK(s.mean == 700);
  CHECK(s.min == 700);
  CHECK(s.max == 700);

  MultiBandImage two(2, 1);
  two.nir = {0, 1023};
  const auto t = band_stats(two, Band::NIR);
  CHECK(t.mean == doctest::Approx(511.5));
  CHECK(t.min == 0);
  CHECK(t.max == 1023);

  SceneParams p;
  p.tile_size = 96;
  p.n_buildings = 3;
  const auto img = generate_tile(p).image;
  for (Band b : {Band::R, Band::G, Band::B, Band::NIR}) {
    double sum = 0, lo = 1e9, hi = -1e9;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const double v = b == Band::NIR ? img.nir_at(x, y) : img.channel(x, y, static_cast<int>(b));
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    const auto st = band_stats(img, b);
    CHECK(st.mean == doctest::Approx(sum / img.pixel_count()).epsilon(1e-12));
    CHECK(st.min == lo);
    CHECK(st.max == hi);
  }
}

}  // TEST_SUITE
