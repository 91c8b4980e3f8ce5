#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "hfcloud/error.hpp"

namespace hfcloud {

/// Dense NCHW tensor.
template <typename T>
struct Tensor {
  std::array<int, 4> shape{0, 0, 0, 0};
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n, int c, int h, int w) : shape{n, c, h, w}, data(static_cast<std::size_t>(n) * c * h * w, T(0)) {}

  int n() const { return shape[0]; }
  int c() const { return shape[1]; }
  int h() const { return shape[2]; }
  int w() const { return shape[3]; }
  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(shape[2]) * shape[3]; }
  std::size_t sample_size() const { return static_cast<std::size_t>(shape[1]) * plane(); }

  T* sample(int b) { return data.data() + b * sample_size(); }
  const T* sample(int b) const { return data.data() + b * sample_size(); }

  T& at(int b, int ch, int y, int x) { return data[((static_cast<std::size_t>(b) * shape[1] + ch) * shape[2] + y) * shape[3] + x]; }
  const T& at(int b, int ch, int y, int x) const {
    return data[((static_cast<std::size_t>(b) * shape[1] + ch) * shape[2] + y) * shape[3] + x];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

template <typename T>
void require_shape(const Tensor<T>& t, std::array<int, 4> expected, const char* what) {
  for (int i = 0; i < 4; ++i) {
    if (expected[i] >= 0 && t.shape[i] != expected[i])
      throw Error(Errc::shape_mismatch, std::string(what) + ": unexpected tensor shape");
  }
  if (t.data.size() != static_cast<std::size_t>(t.shape[0]) * t.shape[1] * t.shape[2] * t.shape[3])
    throw Error(Errc::shape_mismatch, std::string(what) + ": data length does not match shape");
}

}  // namespace hfcloud
