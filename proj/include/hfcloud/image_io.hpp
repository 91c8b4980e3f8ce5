#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hfcloud::image_io {

/// Decoded PNG. Samples are interleaved and widened to 16 bits;
/// `bit_depth` records what the file carried (8 or 16).
struct PngData {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
};

PngData read_png(const std::string& path);

void write_rgb8(const std::string& path, int width, int height, std::span<const std::uint8_t> rgb);
void write_gray8(const std::string& path, int width, int height, std::span<const std::uint8_t> gray);
void write_gray16(const std::string& path, int width, int height, std::span<const std::uint16_t> gray);

}  // namespace hfcloud::image_io
