#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hfcloud {

inline constexpr std::uint16_t kDefaultNirMax = 1023;

enum class Band { R, G, B, NIR };

/// Four-band tile: interleaved 8-bit RGB plus a NIR plane in raw digital
/// numbers. Immutable by convention once loaded.
struct MultiBandImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;   // width*height*3, interleaved R,G,B
  std::vector<std::uint16_t> nir;  // width*height
  std::uint16_t nir_max = kDefaultNirMax;

  MultiBandImage() = default;
  MultiBandImage(int w, int h, std::uint16_t nir_ceiling = kDefaultNirMax);

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }

  std::uint8_t channel(int x, int y, int c) const { return rgb[index(x, y) * 3 + c]; }
  std::uint8_t& channel(int x, int y, int c) { return rgb[index(x, y) * 3 + c]; }
  std::uint16_t nir_at(int x, int y) const { return nir[index(x, y)]; }

  /// Throws Errc::dimension_mismatch / Errc::invalid_argument when the
  /// buffer-size or NIR-ceiling invariants are broken.
  void validate() const;

  bool operator==(const MultiBandImage&) const = default;
};

struct Tile {
  std::string source_id;
  int offset_x = 0;
  int offset_y = 0;
  MultiBandImage image;
};

struct BandStats {
  Band band = Band::R;
  double mean = 0;
  double min = 0;
  double max = 0;
};

// Image container: a directory holding meta.json, rgb.png (8-bit RGB) and
// nir.png (16-bit gray).
MultiBandImage load_image(const std::string& dir);
void save_image(const MultiBandImage& img, const std::string& dir);

/// Row-major grid of full tiles; partial strips at the right/bottom are dropped.
std::vector<Tile> crop_tiles(const MultiBandImage& img, int tile_size, const std::string& source_id = "");

BandStats band_stats(const MultiBandImage& img, Band band);

const char* band_name(Band band);

}  // namespace hfcloud
