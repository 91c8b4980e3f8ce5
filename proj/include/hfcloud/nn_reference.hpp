#pragma once

#include "hfcloud/nn_kernels.hpp"

namespace hfcloud::nn::reference {

// Direct nested-loop, single-threaded forward passes. Used as oracles in
// tests and as the baseline in bench_kernels.

template <typename T>
Tensor<T> conv2d(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias, const ConvSpec& spec);

template <typename T>
Tensor<T> maxpool(const Tensor<T>& in, const PoolSpec& spec);

template <typename T>
Tensor<T> avgpool(const Tensor<T>& in, const PoolSpec& spec);

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& in, int factor);

}  // namespace hfcloud::nn::reference
