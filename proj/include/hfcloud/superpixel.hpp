#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hfcloud/edgeprob.hpp"
#include "hfcloud/patch.hpp"
#include "hfcloud/raster.hpp"

namespace hfcloud {

/// Dense per-pixel region ids in [0, n_regions).
struct SuperPixelMap {
  int width = 0;
  int height = 0;
  std::uint32_t n_regions = 0;
  std::vector<std::uint32_t> label;

  std::uint32_t at(int x, int y) const { return label[static_cast<std::size_t>(y) * width + x]; }
  std::size_t pixel_count() const { return label.size(); }

  bool operator==(const SuperPixelMap&) const = default;
};

struct RegionStats {
  std::uint32_t id = 0;
  std::size_t area = 0;
  double cx = 0;
  double cy = 0;
  std::array<double, 3> mean_rgb{};
  double mean_nir = 0;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive bounding box
};

/// Sorted neighbour lists, one per region.
using RegionGraph = std::vector<std::vector<std::uint32_t>>;

struct SegmentParams {
  int n_superpixels = 600;
  double compactness = 10.0;
  int iterations = 10;
  double edge_weight = 10.0;
};

/// Grid initialisation followed by boundary-pixel exchange sweeps. A pixel
/// moves to a 4-adjacent region only when the exact change in total
/// energy (see segmentation_energy) is negative and the move keeps its
/// current region non-empty and 4-connected. If `energy_trace` is given it
/// receives the energy after initialisation and after every sweep.
SuperPixelMap segment(const MultiBandImage& img, const EdgeMap& edges, const SegmentParams& params,
                      std::vector<double>* energy_trace = nullptr);

/// Initial SLIC-style grid of exactly `n_superpixels` rectangles.
SuperPixelMap grid_init(int width, int height, int n_superpixels);

/// Total energy: squared distance of every pixel's (R,G,B, c*x, c*y)
/// feature to its region mean, with c = compactness / sqrt(W*H/K), plus
/// edge_weight * (1 - mean edge probability) for every 4-adjacent pixel
/// pair that straddles a region boundary.
double segmentation_energy(const MultiBandImage& img, const EdgeMap& edges, const SuperPixelMap& map,
                           const SegmentParams& params);

/// Splits every region into its 4-connected components, merges components
/// smaller than `min_area` into the neighbour sharing the longest boundary
/// (ties: lower id) and renumbers ids by first appearance in raster order.
SuperPixelMap enforce_connectivity(const SuperPixelMap& map, std::size_t min_area);

std::vector<RegionStats> region_stats(const SuperPixelMap& map, const MultiBandImage& img);
RegionGraph adjacency(const SuperPixelMap& map);

/// 32x32 (by default) crop centred on the region's bounding-box centre,
/// shifted to stay inside the image; replicated edges when the image is
/// smaller than the patch.
Patch extract_patch(const MultiBandImage& img, const RegionStats& region, int size = kPatchSize);

/// Top-left corner of the crop extract_patch takes (may be negative only
/// when the image is smaller than the patch).
std::array<int, 2> patch_origin(int width, int height, const RegionStats& region, int size = kPatchSize);

void validate(const SuperPixelMap& map);

std::vector<std::uint8_t> encode_spxm(const SuperPixelMap& map);
SuperPixelMap decode_spxm(std::span<const std::uint8_t> bytes);
void save_spxm(const SuperPixelMap& map, const std::string& path);
SuperPixelMap load_spxm(const std::string& path);

}  // namespace hfcloud
