#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hfcloud/patch.hpp"
#include "hfcloud/superpixel.hpp"

namespace hfcloud {

inline constexpr int kFusedFeatureDim = 144;  // 128 HFCNN + 16 cascade class-vector values

struct RegionPrediction {
  std::uint32_t region_id = 0;
  ClassLabel label = ClassLabel::other_culture;
  std::array<double, kNumClasses> probs_cnn{};
  std::array<double, kNumClasses> probs_forest{};
  std::vector<double> feature;
  bool relabeled = false;
  bool nir_demoted = false;
};

/// argmax of the mean of both probability vectors; ties go to the lower id.
ClassLabel ensemble_label(const std::array<double, kNumClasses>& cnn, const std::array<double, kNumClasses>& forest);

RegionPrediction make_prediction(std::uint32_t region_id, const std::array<double, kNumClasses>& probs_cnn,
                                 const std::array<double, kNumClasses>& probs_forest,
                                 std::span<const float> cnn_feature, std::span<const double> class_vectors);

enum class NeighborAggregation { min, mean };

enum class OtherGroup {
  non_cloud,      // building and other culture
  other_culture,  // other culture only
};

struct RefineConfig {
  double nir_threshold = 1000;
  int hops = 2;
  NeighborAggregation aggregation = NeighborAggregation::min;
  OtherGroup other_group = OtherGroup::other_culture;
};

/// Thick-cloud regions with mean NIR below the threshold become buildings.
/// `stats` is indexed by region id.
std::vector<RegionPrediction> nir_filter(std::vector<RegionPrediction> preds, std::span<const RegionStats> stats,
                                         double nir_threshold);

/// 1 - cosine similarity, in [0, 2].
double cosine_distance(std::span<const double> a, std::span<const double> b);

/// Regions reachable in 1..hops steps, sorted, excluding the region itself.
std::vector<std::vector<std::uint32_t>> neighborhoods(const RegionGraph& graph, int hops);

/// One simultaneous pass: a cirrus or building region becomes thick cloud
/// when its nearest thick neighbour is closer than its nearest neighbour
/// of the other group. `preds` is indexed by region id.
std::vector<RegionPrediction> relabel_ambiguous(std::vector<RegionPrediction> preds, const RegionGraph& graph,
                                                const RefineConfig& config = {});

std::vector<RegionPrediction> refine(std::vector<RegionPrediction> preds, std::span<const RegionStats> stats,
                                     const RegionGraph& graph, const RefineConfig& config = {});

struct CloudMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> cloud;  // 0 or 1

  bool at(int x, int y) const { return cloud[static_cast<std::size_t>(y) * width + x] != 0; }
  bool operator==(const CloudMask&) const = default;
};

/// Pixel is cloud iff its region is thick cloud.
CloudMask region_mask(const SuperPixelMap& map, std::span<const RegionPrediction> preds);
CloudMask close3x3(const CloudMask& mask);
/// region_mask followed by one 3x3 closing.
CloudMask binary_mask(const SuperPixelMap& map, std::span<const RegionPrediction> preds);

void save_mask(const CloudMask& mask, const std::string& path);
CloudMask load_mask(const std::string& path);

std::string predictions_to_jsonl(std::span<const RegionPrediction> preds);
std::vector<RegionPrediction> predictions_from_jsonl(const std::string& text);
void save_predictions(std::span<const RegionPrediction> preds, const std::string& path);
std::vector<RegionPrediction> load_predictions(const std::string& path);

}  // namespace hfcloud
