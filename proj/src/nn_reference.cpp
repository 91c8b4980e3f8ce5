#include "hfcloud/nn_reference.hpp"

#include <algorithm>
#include <limits>

namespace hfcloud::nn::reference {

template <typename T>
Tensor<T> conv2d(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias, const ConvSpec& s) {
  const int oh = s.out_size(in.h()), ow = s.out_size(in.w());
  Tensor<T> out(in.n(), s.out_c, oh, ow);
  for (int b = 0; b < in.n(); ++b)
    for (int o = 0; o < s.out_c; ++o)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          T acc = bias[o];
          for (int c = 0; c < s.in_c; ++c)
            for (int ky = 0; ky < s.k; ++ky)
              for (int kx = 0; kx < s.k; ++kx) {
                const int iy = y + ky - s.pad, ix = x + kx - s.pad;
                if (iy < 0 || ix < 0 || iy >= in.h() || ix >= in.w()) continue;
                acc += weight[((static_cast<std::size_t>(o) * s.in_c + c) * s.k + ky) * s.k + kx] * in.at(b, c, iy, ix);
              }
          out.at(b, o, y, x) = acc;
        }
  return out;
}

template <typename T>
Tensor<T> maxpool(const Tensor<T>& in, const PoolSpec& s) {
  Tensor<T> out(in.n(), in.c(), s.out_size(in.h()), s.out_size(in.w()));
  for (int b = 0; b < in.n(); ++b)
    for (int c = 0; c < in.c(); ++c)
      for (int y = 0; y < out.h(); ++y)
        for (int x = 0; x < out.w(); ++x) {
          T m = -std::numeric_limits<T>::infinity();
          for (int yy = y * s.stride; yy < std::min(y * s.stride + s.k, in.h()); ++yy)
            for (int xx = x * s.stride; xx < std::min(x * s.stride + s.k, in.w()); ++xx) m = std::max(m, in.at(b, c, yy, xx));
          out.at(b, c, y, x) = m;
        }
  return out;
}

template <typename T>
Tensor<T> avgpool(const Tensor<T>& in, const PoolSpec& s) {
  Tensor<T> out(in.n(), in.c(), s.out_size(in.h()), s.out_size(in.w()));
  for (int b = 0; b < in.n(); ++b)
    for (int c = 0; c < in.c(); ++c)
      for (int y = 0; y < out.h(); ++y)
        for (int x = 0; x < out.w(); ++x) {
          T sum = 0;
          int count = 0;
          for (int yy = y * s.stride; yy < std::min(y * s.stride + s.k, in.h()); ++yy)
            for (int xx = x * s.stride; xx < std::min(x * s.stride + s.k, in.w()); ++xx) {
              sum += in.at(b, c, yy, xx);
              ++count;
            }
          out.at(b, c, y, x) = sum / static_cast<T>(count);
        }
  return out;
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& in, int f) {
  Tensor<T> out(in.n(), in.c(), in.h() * f, in.w() * f);
  for (int b = 0; b < in.n(); ++b)
    for (int c = 0; c < in.c(); ++c)
      for (int y = 0; y < out.h(); ++y)
        for (int x = 0; x < out.w(); ++x) out.at(b, c, y, x) = in.at(b, c, y / f, x / f);
  return out;
}

template Tensor<float> conv2d<float>(const Tensor<float>&, std::span<const float>, std::span<const float>, const ConvSpec&);
template Tensor<double> conv2d<double>(const Tensor<double>&, std::span<const double>, std::span<const double>, const ConvSpec&);
template Tensor<float> maxpool<float>(const Tensor<float>&, const PoolSpec&);
template Tensor<double> maxpool<double>(const Tensor<double>&, const PoolSpec&);
template Tensor<float> avgpool<float>(const Tensor<float>&, const PoolSpec&);
template Tensor<double> avgpool<double>(const Tensor<double>&, const PoolSpec&);
template Tensor<float> upsample_nearest<float>(const Tensor<float>&, int);
template Tensor<double> upsample_nearest<double>(const Tensor<double>&, int);

}  // namespace hfcloud::nn::reference
