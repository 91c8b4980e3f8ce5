#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hfcloud/patch.hpp"
#include "hfcloud/raster.hpp"
#include "hfcloud/refine.hpp"
#include "hfcloud/superpixel.hpp"

namespace hfcloud {

struct EvalReport {
  double precision = 0;
  double recall = 0;
  double fmeasure = 0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Harmonic mean; 0 when p + r == 0.
double fmeasure(double precision, double recall);

/// Guarded ratios: with no positives predicted and none present, P = R = 1;
/// any other 0/0 is 0.
EvalReport report_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn = 0);

/// Region-level counts over per-region cloud flags.
EvalReport superpixel_prf(std::span<const std::uint8_t> pred_cloud, std::span<const std::uint8_t> gt_cloud);

/// Cloud = thick cloud (plus cirrus when `cirrus_is_cloud`).
std::vector<std::uint8_t> cloud_flags(std::span<const ClassLabel> labels, bool cirrus_is_cloud);

/// Region is cloud iff strictly more than half of its pixels are cloud.
std::vector<std::uint8_t> pixel_mask_to_regions(const CloudMask& mask, const SuperPixelMap& map);

/// Region is cloud iff its mean NIR is strictly above the threshold.
std::vector<std::uint8_t> nir_baseline(const MultiBandImage& img, const SuperPixelMap& map, double threshold = 1000);

/// Per-region majority class of a per-pixel class raster; ties go to the lower class id.
std::vector<ClassLabel> majority_labels(std::span<const std::uint8_t> class_raster, const SuperPixelMap& map);

struct TileEval {
  std::string tile_id;
  std::string method;
  EvalReport report;
};

/// Sums counts across tiles, then applies the guarded ratios.
EvalReport micro_average(std::span<const EvalReport> reports);

/// {"per_tile": [...], "micro_average": {method: {...}}}
std::string report_json(std::span<const TileEval> tiles);
std::string report_csv(std::span<const TileEval> tiles);

}  // namespace hfcloud
