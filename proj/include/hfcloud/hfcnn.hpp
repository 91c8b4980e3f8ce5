#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hfcloud/nn_kernels.hpp"
#include "hfcloud/patchset.hpp"
#include "hfcloud/tensor.hpp"

namespace hfcloud {

struct TrainConfig {
  double lr = 0.001;
  double momentum = 0.9;
  int max_iterations = 10000;
  int batch_size = 64;
  std::uint64_t seed = 1;

  void validate() const;
};

inline constexpr std::array<const char*, 8> kHfcnnParamNames = {
    "conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias",
    "conv3.weight", "conv3.bias", "fc.weight",    "fc.bias"};

template <typename T>
struct HfcnnParams {
  std::vector<T> conv1_w, conv1_b, conv2_w, conv2_b, conv3_w, conv3_b, fc_w, fc_b;

  std::array<std::vector<T>*, 8> all() { return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &conv3_w, &conv3_b, &fc_w, &fc_b}; }
  std::array<const std::vector<T>*, 8> all() const {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &conv3_w, &conv3_b, &fc_w, &fc_b};
  }
  void zero();
  bool operator==(const HfcnnParams&) const = default;
};

/// Activations kept for the backward pass. f1/f2/f3 are the three fusion
/// taps: post-ReLU outputs of conv1 (32x32), conv2 (16x16), conv3 (8x8).
template <typename T>
struct HfcnnCache {
  Tensor<T> input, conv1, f1, pool1, conv2, f2, pool2, conv3, f3, fused, features, logits, probs;
  std::vector<std::int32_t> pool1_argmax;
};

/// Hierarchical fusion CNN on 32x32 RGB patches:
///   standardize input,
///   conv1 5x5x3->32 pad2, ReLU            -> f1 (32x32)
///   max-pool 3x3/2, conv2 5x5x32->32, ReLU -> f2 (16x16)
///   avg-pool 3x3/2, conv3 5x5x32->64, ReLU -> f3 (8x8)
///   fuse: [f1 | up2(f2) | up4(f3)] (128x32x32), global average pool,
///   linear 128->4, softmax.
template <typename T>
class Hfcnn {
 public:
  static constexpr nn::ConvSpec kConv1{3, 32, 5, 2};
  static constexpr nn::ConvSpec kConv2{32, 32, 5, 2};
  static constexpr nn::ConvSpec kConv3{32, 64, 5, 2};
  static constexpr nn::PoolSpec kPool{3, 2};
  static constexpr int kFeatureDim = 128;
  // Patch pixels in [0,1] enter conv1 as (x - kInputMean) / kInputStd.
  static constexpr double kInputMean = 0.5;
  static constexpr double kInputStd = 0.25;
  static constexpr int kClasses = 4;

  /// All parameters zero, correctly sized.
  Hfcnn();
  /// He-uniform weights, zero biases.
  static Hfcnn initialized(std::uint64_t seed);

  HfcnnParams<T> params;
  std::uint64_t seed = 0;
  std::uint64_t iterations = 0;

  struct Output {
    Tensor<T> probs;     // (B, 4, 1, 1)
    Tensor<T> features;  // (B, 128, 1, 1)
  };

  Output forward(const Tensor<T>& batch) const;
  void forward(const Tensor<T>& batch, HfcnnCache<T>& cache) const;

  /// Mean cross-entropy of the batch. `grads` is overwritten.
  T loss_and_gradients(const Tensor<T>& batch, std::span<const int> labels, HfcnnParams<T>& grads,
                       HfcnnCache<T>& cache) const;

  template <typename U>
  Hfcnn<U> cast() const {
    Hfcnn<U> out;
    auto dst = out.params.all();
    auto src = params.all();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->assign(src[i]->begin(), src[i]->end());
    out.seed = seed;
    out.iterations = iterations;
    return out;
  }
};

using HfcnnModel = Hfcnn<float>;

/// Nearest-neighbour upsampling of f2 (x2) and f3 (x4) to 32x32, then
/// channel concatenation [f1 | up(f2) | up(f3)].
template <typename T>
Tensor<T> fuse_features(const Tensor<T>& f1, const Tensor<T>& f2, const Tensor<T>& f3);
template <typename T>
void fuse_features_backward(const Tensor<T>& grad_fused, Tensor<T>& g1, Tensor<T>& g2, Tensor<T>& g3);

struct SgdState {
  HfcnnParams<float> velocity;
  HfcnnParams<float> grads;
  HfcnnCache<float> cache;
};

SgdState make_sgd_state(const HfcnnModel& model);

/// One momentum-SGD step: v <- momentum*v - lr*g; theta <- theta + v.
/// Throws Errc::divergence on a non-finite loss (parameters untouched).
float train_step(HfcnnModel& model, SgdState& state, const Tensor<float>& batch, std::span<const int> labels,
                 const TrainConfig& config);

struct TrainHistory {
  std::vector<float> loss;
  std::vector<float> accuracy;  // batch accuracy at each iteration
};

using TrainProgress = std::function<void(int iteration, float loss, float accuracy)>;

/// Runs exactly config.max_iterations steps over batches drawn from a
/// seeded permutation that is reshuffled at every epoch boundary.
TrainHistory train(HfcnnModel& model, const TensorBatch& data, const TrainConfig& config,
                   const TrainProgress& progress = {});

int argmax4(const float* p);
double accuracy(const HfcnnModel& model, const TensorBatch& data, int chunk = 256);

/// Runs forward in chunks to bound memory.
HfcnnModel::Output predict_chunked(const HfcnnModel& model, const Tensor<float>& images, int chunk = 256);

inline constexpr std::uint8_t kHfcnnFormatVersion = 1;

// "HFCN", u8 version, u32 header length, JSON header, then f32 LE blobs.
std::vector<std::uint8_t> serialize(const HfcnnModel& model);
HfcnnModel deserialize_hfcnn(std::span<const std::uint8_t> bytes);
void save_hfcnn(const HfcnnModel& model, const std::string& path);
HfcnnModel load_hfcnn(const std::string& path);

}  // namespace hfcloud
