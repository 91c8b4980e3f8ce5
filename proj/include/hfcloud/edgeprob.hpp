#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hfcloud/raster.hpp"

namespace hfcloud {

struct EdgeMap {
  int width = 0;
  int height = 0;
  std::vector<float> prob;  // row-major, values in [0,1]

  float at(int x, int y) const { return prob[static_cast<std::size_t>(y) * width + x]; }
};

enum class EdgeDetector { gradient_multiscale, external };

inline constexpr int kEdgeScales[] = {1, 2, 4};

/// Per-pixel edge probability. `gradient_multiscale` takes the maximum over
/// scales {1,2,4} of the Scharr gradient magnitude of (R+G+B)/3 and divides
/// by the map maximum. `external` validates and returns the supplied map.
EdgeMap edge_probability(const MultiBandImage& img,
                         EdgeDetector detector = EdgeDetector::gradient_multiscale,
                         const std::optional<EdgeMap>& external = std::nullopt);

// 16-bit gray PNG, 65535 <-> 1.0.
EdgeMap load_edge_map(const std::string& path);
void save_edge_map(const EdgeMap& map, const std::string& path);

namespace reference {
/// Unoptimised serial version of the multi-scale gradient detector: explicit
/// 3x3 kernels with replicated borders. Kept for tests and benchmarks.
EdgeMap gradient_multiscale(const MultiBandImage& img);
}  // namespace reference

}  // namespace hfcloud
