#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hfcloud {

inline constexpr int kPatchSize = 32;
inline constexpr int kPatchChannels = 3;
inline constexpr int kNumClasses = 4;

enum class ClassLabel : std::uint8_t {
  thick_cloud = 0,
  cirrus_cloud = 1,
  building = 2,
  other_culture = 3,
};

inline constexpr std::array<ClassLabel, kNumClasses> kAllClasses = {
    ClassLabel::thick_cloud, ClassLabel::cirrus_cloud, ClassLabel::building, ClassLabel::other_culture};

const char* class_name(ClassLabel c);
std::optional<ClassLabel> class_from_int(long v);
std::optional<ClassLabel> class_from_name(std::string_view name);
inline int to_int(ClassLabel c) { return static_cast<int>(c); }

/// Classifier input: a 32x32 RGB crop stored planar (CHW) with values in
/// [0,1], plus the region's mean NIR which travels alongside the pixels.
struct Patch {
  std::vector<float> pixels = std::vector<float>(kPatchChannels * kPatchSize * kPatchSize, 0.0f);
  double mean_nir = 0;
  std::string tile_id;
  std::uint32_t region_id = 0;

  float at(int c, int y, int x) const { return pixels[(c * kPatchSize + y) * kPatchSize + x]; }
  float& at(int c, int y, int x) { return pixels[(c * kPatchSize + y) * kPatchSize + x]; }
};

}  // namespace hfcloud
