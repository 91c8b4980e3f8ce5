#include "hfcloud/raster.hpp"

#include <algorithm>
#include <filesystem>
#include <limits>

#include <nlohmann/json.hpp>

#include "hfcloud/binio.hpp"
#include "hfcloud/error.hpp"
#include "hfcloud/image_io.hpp"

namespace hfcloud {

namespace fs = std::filesystem;
using nlohmann::json;

MultiBandImage::MultiBandImage(int w, int h, std::uint16_t nir_ceiling)
    : width(w), height(h), nir_max(nir_ceiling) {
  if (w < 0 || h < 0) throw Error(Errc::invalid_argument, "negative image size");
  rgb.assign(pixel_count() * 3, 0);
  nir.assign(pixel_count(), 0);
}

void MultiBandImage::validate() const {
  if (width < 0 || height < 0) throw Error(Errc::invalid_argument, "negative image size");
  if (rgb.size() != pixel_count() * 3 || nir.size() != pixel_count())
    throw Error(Errc::dimension_mismatch, "band buffers do not match width*height");
  for (auto v : nir)
    if (v > nir_max) throw Error(Errc::invalid_argument, "NIR sample above nir_max");
}

const char* band_name(Band band) {
  switch (band) {
    case Band::R: return "R";
    case Band::G: return "G";
    case Band::B: return "B";
    case Band::NIR: return "NIR";
  }
  return "?";
}

MultiBandImage load_image(const std::string& dir) {
  const fs::path root(dir);
  const auto meta_path = root / "meta.json";
  if (!fs::exists(meta_path)) throw Error(Errc::missing_file, meta_path.string());

  json meta;
  try {
    meta = json::parse(binio::read_text(meta_path.string()));
  } catch (const json::exception& e) {
    throw Error(Errc::corrupt_metadata, std::string("meta.json: ") + e.what());
  }
  int width = 0, height = 0;
  long nir_max = kDefaultNirMax;
  try {
    width = meta.at("width").get<int>();
    height = meta.at("height").get<int>();
    if (meta.contains("nir_max")) nir_max = meta.at("nir_max").get<long>();
    if (meta.contains("bands")) {
      auto bands = meta.at("bands").get<std::vector<std::string>>();
      if (bands != std::vector<std::string>{"R", "G", "B", "NIR"})
        throw Error(Errc::corrupt_metadata, "unexpected band list");
    }
  } catch (const json::exception& e) {
    throw Error(Errc::corrupt_metadata, std::string("meta.json: ") + e.what());
  }
  if (width <= 0 || height <= 0 || nir_max <= 0 || nir_max > 65535)
    throw Error(Errc::corrupt_metadata, "meta.json: bad dimensions or nir_max");

  const auto rgb = image_io::read_png((root / "rgb.png").string());
  const auto nir = image_io::read_png((root / "nir.png").string());
  if (rgb.channels != 3 || rgb.bit_depth != 8)
    throw Error(Errc::corrupt_metadata, "rgb.png must be 8-bit 3-channel");
  if (nir.channels != 1) throw Error(Errc::corrupt_metadata, "nir.png must be single-channel");
  if (rgb.width != width || rgb.height != height || nir.width != width || nir.height != height)
    throw Error(Errc::dimension_mismatch, "band raster sizes disagree with meta.json");

  MultiBandImage img(width, height, static_cast<std::uint16_t>(nir_max));
  std::transform(rgb.samples.begin(), rgb.samples.end(), img.rgb.begin(),
                 [](std::uint16_t v) { return static_cast<std::uint8_t>(v); });
  std::transform(nir.samples.begin(), nir.samples.end(), img.nir.begin(), [&](std::uint16_t v) {
    return static_cast<std::uint16_t>(std::min<long>(v, nir_max));
  });
  return img;
}

void save_image(const MultiBandImage& img, const std::string& dir) {
  img.validate();
  fs::create_directories(dir);
  json meta = {{"width", img.width},
               {"height", img.height},
               {"nir_max", img.nir_max},
               {"bands", {"R", "G", "B", "NIR"}}};
  binio::write_text((fs::path(dir) / "meta.json").string(), meta.dump(2) + "\n");
  image_io::write_rgb8((fs::path(dir) / "rgb.png").string(), img.width, img.height, img.rgb);
  image_io::write_gray16((fs::path(dir) / "nir.png").string(), img.width, img.height, img.nir);
}

std::vector<Tile> crop_tiles(const MultiBandImage& img, int tile_size, const std::string& source_id) {
  if (tile_size < 32) throw Error(Errc::invalid_argument, "tile_size must be >= 32");
  std::vector<Tile> tiles;
  const int nx = img.width / tile_size;
  const int ny = img.height / tile_size;
  tiles.reserve(static_cast<std::size_t>(nx) * ny);
  for (int ty = 0; ty < ny; ++ty) {
    for (int tx = 0; tx < nx; ++tx) {
      Tile t;
      t.source_id = source_id;
      t.offset_x = tx * tile_size;
      t.offset_y = ty * tile_size;
      t.image = MultiBandImage(tile_size, tile_size, img.nir_max);
      for (int y = 0; y < tile_size; ++y) {
        const std::size_t src = img.index(t.offset_x, t.offset_y + y);
        const std::size_t dst = t.image.index(0, y);
        std::copy_n(img.rgb.begin() + src * 3, tile_size * 3, t.image.rgb.begin() + dst * 3);
        std::copy_n(img.nir.begin() + src, tile_size, t.image.nir.begin() + dst);
      }
      tiles.push_back(std::move(t));
    }
  }
  return tiles;
}

BandStats band_stats(const MultiBandImage& img, Band band) {
  BandStats s;
  s.band = band;
  const std::size_t n = img.pixel_count();
  if (n == 0) return s;
  double sum = 0;
  double lo = std::numeric_limits<double>::max();
  double hi = std::numeric_limits<double>::lowest();
  for (std::size_t i = 0; i < n; ++i) {
    double v = band == Band::NIR ? img.nir[i] : img.rgb[i * 3 + static_cast<int>(band)];
    sum += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  s.mean = sum / static_cast<double>(n);
  s.min = lo;
  s.max = hi;
  return s;
}

}  // namespace hfcloud
