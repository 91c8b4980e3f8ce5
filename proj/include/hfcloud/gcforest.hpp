#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hfcloud/forest.hpp"
#include "hfcloud/patch.hpp"
#include "hfcloud/tensor.hpp"

namespace hfcloud {

struct ScanConfig {
  std::vector<int> windows{8, 16};  // ascending
  int stride = 4;
  int n_trees = 30;
  std::size_t max_instances_per_class = 20000;
};

struct CascadeConfig {
  int n_trees = 500;
  int max_levels = 8;
  int patience = 1;
};

struct GcForestConfig {
  ScanConfig scan;
  CascadeConfig cascade;
  int folds = 3;
  std::uint64_t seed = 1;

  void validate() const;
};

inline constexpr int kForestsPerLevel = 4;  // random, random, completely-random, completely-random
inline constexpr int kClassVectorDim = kForestsPerLevel * kNumClasses;

struct Scanner {
  int window = 0;
  Forest random;
  Forest completely_random;
};

struct CascadeLevel {
  std::array<Forest, kForestsPerLevel> forests;
  double valid_accuracy = 0;
};

struct CascadeModel {
  GcForestConfig config;
  std::size_t scan_dim = 0;        // level-0 input width
  std::vector<Scanner> scanners;   // empty when the cascade consumes raw features
  std::vector<CascadeLevel> levels;  // truncated after best_level
  std::vector<double> level_accuracy;  // every level evaluated, including dropped ones
  int best_level = -1;

  bool trained() const { return best_level >= 0 && !levels.empty(); }
  std::size_t level_input_dim(int level) const { return scan_dim + (level > 0 ? kClassVectorDim : 0); }
};

struct CascadePrediction {
  std::array<double, kNumClasses> probs{};
  std::array<double, kClassVectorDim> class_vectors{};
};

std::size_t scan_positions(int window, int stride, int size = kPatchSize);
std::size_t scan_feature_length(const ScanConfig& config);

/// One row per window position (raster order) of sample `b`, flattened
/// channel-major (c, y, x).
FeatureMatrix window_instances(const Tensor<float>& images, int b, int window, int stride);

/// Scan features for every image: per window (ascending), per forest
/// (random, completely-random), per position, the 4 class probabilities.
FeatureMatrix multi_grained_scan(const Tensor<float>& images, const std::vector<Scanner>& scanners, int stride);
std::vector<float> multi_grained_scan(const Patch& patch, const std::vector<Scanner>& scanners, int stride);

/// Trains the scan forests on all images. When `out_of_fold` is given it
/// receives scan features for the training images computed by forests that
/// never saw that image (k-fold cross-fitting).
std::vector<Scanner> train_scanners(const Tensor<float>& images, std::span<const int> labels,
                                    const GcForestConfig& config, FeatureMatrix* out_of_fold = nullptr);

/// Grows cascade levels on precomputed level-0 features. `model.config`
/// supplies the cascade settings; scanners are left untouched.
void train_cascade(CascadeModel& model, const FeatureMatrix& train_x, std::span<const int> train_y,
                   const FeatureMatrix& valid_x, std::span<const int> valid_y);

CascadeModel train_gcforest(const Tensor<float>& train_images, std::span<const int> train_labels,
                            const Tensor<float>& valid_images, std::span<const int> valid_labels,
                            const GcForestConfig& config);

std::vector<CascadePrediction> predict_from_features(const CascadeModel& model, const FeatureMatrix& level0);
std::vector<CascadePrediction> predict(const CascadeModel& model, const Tensor<float>& images);
CascadePrediction predict(const CascadeModel& model, const Patch& patch);

std::vector<std::uint8_t> serialize(const CascadeModel& model);
CascadeModel deserialize_gcforest(std::span<const std::uint8_t> bytes);
void save_gcforest(const CascadeModel& model, const std::string& path);
CascadeModel load_gcforest(const std::string& path);

}  // namespace hfcloud
