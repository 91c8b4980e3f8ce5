#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hfcloud/patch.hpp"
#include "hfcloud/raster.hpp"
#include "hfcloud/superpixel.hpp"
#include "hfcloud/tensor.hpp"

namespace hfcloud {

/// Annotation for one tile: region id -> class. Serialised as
/// {"labels":{"<region_id>":<class>,...},"tile_id":"..."}.
struct LabelFile {
  std::string tile_id;
  std::map<std::uint32_t, ClassLabel> labels;

  bool operator==(const LabelFile&) const = default;
};

std::string label_file_to_json(const LabelFile& lf);
/// Rejects duplicate region keys and class ids outside 0..3.
LabelFile label_file_from_json(const std::string& text);
LabelFile load_label_file(const std::string& path);
void save_label_file(const LabelFile& lf, const std::string& path);

struct ManifestEntry {
  std::string tile_id;
  std::uint32_t region_id = 0;
  ClassLabel label = ClassLabel::other_culture;
  std::string path;  // relative to Manifest::base_dir unless absolute
  double mean_nir = 0;

  bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
  std::string base_dir;
  std::vector<ManifestEntry> entries;

  std::array<std::size_t, kNumClasses> class_counts() const;
  std::size_t size() const { return entries.size(); }
  std::string resolve(const ManifestEntry& e) const;
};

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& m, const std::string& path);

struct DatasetTile {
  std::string tile_id;
  const MultiBandImage* image = nullptr;
  const SuperPixelMap* map = nullptr;
};

/// Extracts one patch per labelled region, writes patches/<tile>_<region>.png
/// and manifest.jsonl under `out_dir`, and returns the manifest.
Manifest build_dataset(std::span<const DatasetTile> tiles, std::span<const LabelFile> labels,
                       const std::string& out_dir);

/// Stratified split: per class, round(count * test_fraction) entries (at
/// least 1, at most count-1) go to the test side. Entry order is preserved.
std::pair<Manifest, Manifest> split(const Manifest& manifest, double test_fraction, std::uint64_t seed);

struct TensorBatch {
  Tensor<float> images;  // (B, 3, 32, 32), values in [0,1]
  std::vector<int> labels;
  std::vector<double> mean_nir;
};

TensorBatch load_batch(const Manifest& manifest, std::span<const std::size_t> indices);

void save_patch_png(const Patch& p, const std::string& path);
Patch load_patch_png(const std::string& path);

/// Copies patches into a (B,3,32,32) tensor in order.
Tensor<float> stack_patches(std::span<const Patch> patches);

}  // namespace hfcloud
