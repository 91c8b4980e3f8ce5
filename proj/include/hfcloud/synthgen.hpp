#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hfcloud/raster.hpp"

namespace hfcloud {

struct NirRange {
  double lo = 0;
  double hi = 0;
};

struct SceneParams {
  std::uint64_t seed = 42;
  int tile_size = 500;
  int n_thick_blobs = 3;
  int n_cirrus_halos = 3;  // the first n thick blobs get a halo
  int n_buildings = 14;
  double blob_sigma_min = 16;  // pixels at tile_size 500, scaled linearly
  double blob_sigma_max = 30;
  double thick_level = 0.5;  // mixture field above this is thick cloud
  double halo_level = 0.2;   // halo between halo_level and thick_level
  int building_min = 10;
  int building_max = 26;
  NirRange nir_thick{1005, 1023};
  NirRange nir_cirrus{700, 990};
  NirRange nir_building{200, 500};
  NirRange nir_terrain{100, 400};
  double terrain_texture = 30;   // RGB amplitude of low-frequency terrain noise
  double building_texture = 28;  // RGB amplitude of the periodic roof pattern
  double pixel_noise = 3;

  void validate() const;
};

struct BlobComponent {
  double x = 0, y = 0, sigma = 0;
};

struct BuildingRect {
  int x0 = 0, y0 = 0, width = 0, height = 0, period = 0;
};

struct Scene {
  MultiBandImage image;
  std::vector<std::uint8_t> ground_truth;  // per pixel ClassLabel id
  std::vector<std::vector<BlobComponent>> blobs;
  std::vector<BuildingRect> buildings;
  SceneParams params;
};

Scene generate_tile(const SceneParams& params);

/// Writes the image container plus gt.png and scene.json into `dir`.
void save_scene(const Scene& scene, const std::string& dir);
std::vector<std::uint8_t> load_ground_truth(const std::string& path, int width, int height);

}  // namespace hfcloud
