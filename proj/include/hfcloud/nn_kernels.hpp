#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hfcloud/tensor.hpp"

namespace hfcloud::nn {

/// Stride-1 convolution, weights laid out (out_c, in_c, k, k).
struct ConvSpec {
  int in_c;
  int out_c;
  int k;
  int pad;

  std::size_t weight_count() const { return static_cast<std::size_t>(out_c) * in_c * k * k; }
  int out_size(int in) const { return in + 2 * pad - k + 1; }
};

/// 3x3/stride-2 pooling without padding, output size rounded up and the
/// last window clipped to the input.
struct PoolSpec {
  int k = 3;
  int stride = 2;

  int out_size(int in) const { return (in - k + stride - 1) / stride + 1; }
};

// All kernels parallelise over the batch; gradient reductions over the
// batch are summed in sample order, so results do not depend on the
// number of threads.

template <typename T>
void conv2d_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias, const ConvSpec& spec,
                    Tensor<T>& out);

/// Accumulates (+=) into grad_weight / grad_bias. grad_in may be null.
template <typename T>
void conv2d_backward(const Tensor<T>& in, std::span<const T> weight, const ConvSpec& spec, const Tensor<T>& grad_out,
                     Tensor<T>* grad_in, std::span<T> grad_weight, std::span<T> grad_bias);

template <typename T>
void relu_forward(const Tensor<T>& in, Tensor<T>& out);
template <typename T>
void relu_backward(const Tensor<T>& out, const Tensor<T>& grad_out, Tensor<T>& grad_in);

template <typename T>
void maxpool_forward(const Tensor<T>& in, const PoolSpec& spec, Tensor<T>& out, std::vector<std::int32_t>& argmax);
template <typename T>
void maxpool_backward(const Tensor<T>& grad_out, const std::vector<std::int32_t>& argmax, Tensor<T>& grad_in);

template <typename T>
void avgpool_forward(const Tensor<T>& in, const PoolSpec& spec, Tensor<T>& out);
template <typename T>
void avgpool_backward(const Tensor<T>& grad_out, const PoolSpec& spec, Tensor<T>& grad_in);

/// Nearest-neighbour upsampling by an integer factor: out[y][x] = in[y/f][x/f].
template <typename T>
void upsample_nearest_forward(const Tensor<T>& in, int factor, Tensor<T>& out);
template <typename T>
void upsample_nearest_backward(const Tensor<T>& grad_out, int factor, Tensor<T>& grad_in);

/// Channel concatenation of equally sized maps, in argument order.
template <typename T>
void concat_channels_forward(std::span<const Tensor<T>* const> parts, Tensor<T>& out);
template <typename T>
void concat_channels_backward(const Tensor<T>& grad_out, std::span<Tensor<T>* const> grad_parts);

/// Global average pool to (B, C, 1, 1).
template <typename T>
void gap_forward(const Tensor<T>& in, Tensor<T>& out);
template <typename T>
void gap_backward(const Tensor<T>& grad_out, Tensor<T>& grad_in);

/// y = x W^T + b with x (B, in, 1, 1), W (out, in).
template <typename T>
void linear_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias, int out_features,
                    Tensor<T>& out);
template <typename T>
void linear_backward(const Tensor<T>& in, std::span<const T> weight, int out_features, const Tensor<T>& grad_out,
                     Tensor<T>* grad_in, std::span<T> grad_weight, std::span<T> grad_bias);

/// Row-wise softmax.
template <typename T>
void softmax(const Tensor<T>& logits, Tensor<T>& probs);

/// Mean cross-entropy over the batch; writes d(loss)/d(logits).
template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels, Tensor<T>& probs, Tensor<T>& grad_logits);

}  // namespace hfcloud::nn
