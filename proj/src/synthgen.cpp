#include "hfcloud/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <nlohmann/json.hpp>

#include "hfcloud/binio.hpp"
#include "hfcloud/error.hpp"
#include "hfcloud/image_io.hpp"
#include "hfcloud/patch.hpp"
#include "hfcloud/rng.hpp"

namespace hfcloud {

using nlohmann::json;

void SceneParams::validate() const {
  if (tile_size < 32) throw Error(Errc::invalid_argument, "tile_size must be >= 32");
  if (n_thick_blobs < 0 || n_buildings < 0 || n_cirrus_halos < 0) throw Error(Errc::invalid_argument, "counts must be >= 0");
  if (n_cirrus_halos > n_thick_blobs) throw Error(Errc::invalid_argument, "every cirrus halo needs a thick blob");
  if (!(halo_level > 0 && halo_level < thick_level)) throw Error(Errc::invalid_argument, "need 0 < halo_level < thick_level");
  if (blob_sigma_min <= 0 || blob_sigma_max < blob_sigma_min) throw Error(Errc::invalid_argument, "invalid blob sigma range");
  if (building_min < 4 || building_max < building_min) throw Error(Errc::invalid_argument, "invalid building size range");
  for (const auto& r : {nir_thick, nir_cirrus, nir_building, nir_terrain})
    if (r.lo < 0 || r.hi < r.lo || r.hi > kDefaultNirMax) throw Error(Errc::invalid_argument, "NIR range outside [0, nir_max]");
}

namespace {

/// Smooth value noise in [0,1]: bilinear interpolation of a random lattice.
class ValueNoise {
 public:
  ValueNoise(int width, int height, double cell, Rng& rng)
      : cell_(cell), nx_(static_cast<int>(width / cell) + 2), ny_(static_cast<int>(height / cell) + 2),
        lattice_(static_cast<std::size_t>(nx_) * ny_) {
    for (auto& v : lattice_) v = uniform01(rng);
  }

  double operator()(double x, double y) const {
    const double gx = x / cell_, gy = y / cell_;
    const int ix = static_cast<int>(gx), iy = static_cast<int>(gy);
    const double fx = smooth(gx - ix), fy = smooth(gy - iy);
    const double a = at(ix, iy), b = at(ix + 1, iy), c = at(ix, iy + 1), d = at(ix + 1, iy + 1);
    return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy;
  }

 private:
  static double smooth(double t) { return t * t * (3 - 2 * t); }
  double at(int x, int y) const { return lattice_[static_cast<std::size_t>(y) * nx_ + x]; }

  double cell_;
  int nx_, ny_;
  std::vector<double> lattice_;
};

double mixture(const std::vector<BlobComponent>& blob, double x, double y) {
  double f = 0;
  for (const auto& c : blob) {
    const double dx = x - c.x, dy = y - c.y;
    f += std::exp(-(dx * dx + dy * dy) / (2 * c.sigma * c.sigma));
  }
  return f;
}

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

std::uint16_t to_nir(double v, double hi) {
  return static_cast<std::uint16_t>(std::clamp(std::lround(v), 0L, std::lround(hi)));
}

}  // namespace

Scene generate_tile(const SceneParams& params) {
  params.validate();
  const int n = params.tile_size;
  Scene scene;
  scene.params = params;
  scene.image = MultiBandImage(n, n);
  scene.ground_truth.assign(static_cast<std::size_t>(n) * n, static_cast<std::uint8_t>(ClassLabel::other_culture));

  Rng layout(derive_seed(params.seed, 1));
  Rng texture(derive_seed(params.seed, 2));
  Rng grain(derive_seed(params.seed, 3));

  // Cloud blobs: small Gaussian mixtures, sized relative to a 500 px tile.
  const double blob_scale = n / 500.0;
  for (int b = 0; b < params.n_thick_blobs; ++b) {
    const double cx = uniform(layout, 0.1 * n, 0.9 * n), cy = uniform(layout, 0.1 * n, 0.9 * n);
    const int k = 2 + static_cast<int>(below(layout, 3));
    std::vector<BlobComponent> blob;
    for (int i = 0; i < k; ++i) {
      const double sigma = blob_scale * uniform(layout, params.blob_sigma_min, params.blob_sigma_max);
      blob.push_back({cx + normal(layout) * sigma * 0.6, cy + normal(layout) * sigma * 0.6, sigma});
    }
    scene.blobs.push_back(std::move(blob));
  }

  std::vector<float> field_all(scene.ground_truth.size(), 0.0f), field_halo(scene.ground_truth.size(), 0.0f);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double all = 0, halo = 0;
      for (int b = 0; b < params.n_thick_blobs; ++b) {
        const double f = mixture(scene.blobs[b], x, y);
        all += f;
        if (b < params.n_cirrus_halos) halo += f;
      }
      field_all[static_cast<std::size_t>(y) * n + x] = static_cast<float>(all);
      field_halo[static_cast<std::size_t>(y) * n + x] = static_cast<float>(halo);
    }

  // Buildings: rectangles clear of clouds and halos, with a margin.
  const double keep_out = params.halo_level * 0.5;
  for (int b = 0; b < params.n_buildings; ++b) {
    bool placed = false;
    for (int attempt = 0; attempt < 500 && !placed; ++attempt) {
      BuildingRect r;
      r.width = params.building_min + static_cast<int>(below(layout, params.building_max - params.building_min + 1));
      r.height = params.building_min + static_cast<int>(below(layout, params.building_max - params.building_min + 1));
      if (r.width + 4 > n || r.height + 4 > n) break;
      r.x0 = 2 + static_cast<int>(below(layout, n - r.width - 3));
      r.y0 = 2 + static_cast<int>(below(layout, n - r.height - 3));
      r.period = 3 + static_cast<int>(below(layout, 4));
      bool clear = true;
      for (int y = r.y0 - 2; y < r.y0 + r.height + 2 && clear; ++y)
        for (int x = r.x0 - 2; x < r.x0 + r.width + 2 && clear; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * n + x;
          clear = field_all[i] < keep_out && scene.ground_truth[i] != static_cast<std::uint8_t>(ClassLabel::building);
        }
      if (!clear) continue;
      for (int y = r.y0; y < r.y0 + r.height; ++y)
        for (int x = r.x0; x < r.x0 + r.width; ++x)
          scene.ground_truth[static_cast<std::size_t>(y) * n + x] = static_cast<std::uint8_t>(ClassLabel::building);
      scene.buildings.push_back(r);
      placed = true;
    }
    if (!placed) throw Error(Errc::invalid_argument, "scene too crowded to place building " + std::to_string(b));
  }

  const ValueNoise coarse(n, n, 96, texture), medium(n, n, 24, texture), tone(n, n, 64, texture),
      nir_noise(n, n, 48, texture), cloud_noise(n, n, 20, texture);
  std::vector<std::array<double, 3>> building_tint;
  for (std::size_t b = 0; b < scene.buildings.size(); ++b)
    building_tint.push_back({uniform(texture, 205, 235), uniform(texture, 205, 235), uniform(texture, 205, 235)});
  std::vector<double> building_nir;
  for (std::size_t b = 0; b < scene.buildings.size(); ++b)
    building_nir.push_back(uniform(texture, params.nir_building.lo + 40, params.nir_building.hi - 40));

  auto& img = scene.image;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * n + x;
      // Terrain: vegetation/soil mixture with low-frequency variation.
      const double t = coarse(x, y) * 0.7 + medium(x, y) * 0.3;
      const double m = tone(x, y);
      double r = 55 + 60 * m + params.terrain_texture * (t - 0.5);
      double g = 80 + 30 * m + params.terrain_texture * (t - 0.5);
      double bl = 50 + 35 * m + params.terrain_texture * (t - 0.5);
      double nir = params.nir_terrain.lo + (params.nir_terrain.hi - params.nir_terrain.lo) * (0.6 * nir_noise(x, y) + 0.4 * t);

      if (scene.ground_truth[i] == static_cast<std::uint8_t>(ClassLabel::building)) {
        std::size_t b = 0;
        for (; b < scene.buildings.size(); ++b) {
          const auto& rc = scene.buildings[b];
          if (x >= rc.x0 && x < rc.x0 + rc.width && y >= rc.y0 && y < rc.y0 + rc.height) break;
        }
        const auto& rc = scene.buildings[b];
        const bool stripe = ((x - rc.x0) / rc.period + (y - rc.y0) / rc.period) % 2 == 0;
        const double s = stripe ? params.building_texture / 2 : -params.building_texture / 2;
        r = building_tint[b][0] + s;
        g = building_tint[b][1] + s;
        bl = building_tint[b][2] + s;
        nir = building_nir[b] + (stripe ? 20 : -20);
      }

      const double fa = field_all[i], fh = field_halo[i];
      if (fa > params.thick_level) {
        scene.ground_truth[i] = static_cast<std::uint8_t>(ClassLabel::thick_cloud);
        const double c = cloud_noise(x, y);
        const double v = 232 + 18 * c;
        r = v;
        g = v;
        bl = v + 3;
        nir = params.nir_thick.lo + (params.nir_thick.hi - params.nir_thick.lo) * c;
      } else if (fh > params.halo_level) {
        scene.ground_truth[i] = static_cast<std::uint8_t>(ClassLabel::cirrus_cloud);
        const double a = (fh - params.halo_level) / (params.thick_level - params.halo_level);
        const double beta = 0.3 + 0.4 * a;
        r = r * (1 - beta) + 238 * beta;
        g = g * (1 - beta) + 238 * beta;
        bl = bl * (1 - beta) + 244 * beta;
        nir = params.nir_cirrus.lo + (params.nir_cirrus.hi - params.nir_cirrus.lo) * a;
      }
      r += normal(grain) * params.pixel_noise;
      g += normal(grain) * params.pixel_noise;
      bl += normal(grain) * params.pixel_noise;
      nir += normal(grain) * params.pixel_noise;
      img.rgb[i * 3 + 0] = to_u8(r);
      img.rgb[i * 3 + 1] = to_u8(g);
      img.rgb[i * 3 + 2] = to_u8(bl);
      img.nir[i] = to_nir(nir, img.nir_max);
    }
  return scene;
}

void save_scene(const Scene& scene, const std::string& dir) {
  save_image(scene.image, dir);
  const auto root = std::filesystem::path(dir);
  image_io::write_gray8((root / "gt.png").string(), scene.image.width, scene.image.height, scene.ground_truth);
  const auto& p = scene.params;
  json blobs = json::array();
  for (std::size_t b = 0; b < scene.blobs.size(); ++b) {
    json comps = json::array();
    for (const auto& c : scene.blobs[b]) comps.push_back({{"x", c.x}, {"y", c.y}, {"sigma", c.sigma}});
    blobs.push_back({{"components", comps}, {"halo", static_cast<int>(b) < p.n_cirrus_halos}});
  }
  json buildings = json::array();
  for (const auto& r : scene.buildings)
    buildings.push_back({{"x0", r.x0}, {"y0", r.y0}, {"width", r.width}, {"height", r.height}, {"period", r.period}});
  const json doc = {{"seed", p.seed},
                    {"tile_size", p.tile_size},
                    {"n_thick_blobs", p.n_thick_blobs},
                    {"n_cirrus_halos", p.n_cirrus_halos},
                    {"n_buildings", p.n_buildings},
                    {"blobs", blobs},
                    {"buildings", buildings}};
  binio::write_text((root / "scene.json").string(), doc.dump(2) + "\n");
}

std::vector<std::uint8_t> load_ground_truth(const std::string& path, int width, int height) {
  const auto png = image_io::read_png(path);
  if (png.channels != 1 || png.bit_depth != 8) throw Error(Errc::corrupt_metadata, "ground truth must be 8-bit gray: " + path);
  if (png.width != width || png.height != height) throw Error(Errc::dimension_mismatch, "ground truth size differs from tile: " + path);
  std::vector<std::uint8_t> out(png.samples.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (png.samples[i] >= kNumClasses) throw Error(Errc::corrupt_metadata, "ground truth class out of range: " + path);
    out[i] = static_cast<std::uint8_t>(png.samples[i]);
  }
  return out;
}

}  // namespace hfcloud
