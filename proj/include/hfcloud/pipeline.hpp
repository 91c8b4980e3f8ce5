#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hfcloud/edgeprob.hpp"
#include "hfcloud/gcforest.hpp"
#include "hfcloud/hfcnn.hpp"
#include "hfcloud/metrics.hpp"
#include "hfcloud/patchset.hpp"
#include "hfcloud/refine.hpp"
#include "hfcloud/superpixel.hpp"
#include "hfcloud/synthgen.hpp"

namespace hfcloud {

struct PipelineConfig {
  SceneParams synth;
  SegmentParams segment;
  std::size_t min_area = 10;
  double valid_fraction = 0.2;
  std::uint64_t split_seed = 7;
  TrainConfig hfcnn;
  GcForestConfig gcforest;
  RefineConfig refine;
  bool cirrus_is_cloud = true;
  int threads = 0;  // 0: OpenMP default

  void validate() const;
};

std::string config_to_json(const PipelineConfig& config);
/// Keys absent from the document keep their defaults; unknown keys are errors.
PipelineConfig config_from_json(const std::string& text, PipelineConfig base = {});
PipelineConfig load_config(const std::string& path, PipelineConfig base = {});
void save_config(const PipelineConfig& config, const std::string& dir);

/// Directory name of a tile container.
std::string tile_id_of(const std::string& tile_dir);

/// Edge map, segmentation, then removal of regions below min_area.
SuperPixelMap segment_tile(const MultiBandImage& img, const PipelineConfig& config, const EdgeMap* edges = nullptr);

/// Region label = majority ground-truth class.
LabelFile label_from_gt(const std::string& tile_id, const SuperPixelMap& map, std::span<const std::uint8_t> gt);

/// Patches for every region, in region-id order.
std::vector<Patch> region_patches(const MultiBandImage& img, const SuperPixelMap& map,
                                  const std::vector<RegionStats>& stats, const std::string& tile_id = "");

/// Unrefined ensemble predictions with fused features, indexed by region id.
std::vector<RegionPrediction> predict_tile(const MultiBandImage& img, const SuperPixelMap& map,
                                           const HfcnnModel& cnn, const CascadeModel& forest);

/// nir_filter then relabel_ambiguous.
std::vector<RegionPrediction> refine_tile(std::vector<RegionPrediction> preds, const MultiBandImage& img,
                                          const SuperPixelMap& map, const RefineConfig& config);

std::vector<ClassLabel> labels_of(std::span<const RegionPrediction> preds);

}  // namespace hfcloud
