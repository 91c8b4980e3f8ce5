#include "hfcloud/nn_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

namespace hfcloud::nn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const RowMat<T>>;

// Unfolds one CHW sample into a (C*k*k, H*W) matrix for a stride-1 "same"
// style convolution.
template <typename T>
void im2col(const T* x, int c, int h, int w, const ConvSpec& s, int oh, int ow, T* col) {
  const std::size_t hw = static_cast<std::size_t>(oh) * ow;
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < s.k; ++ky) {
      for (int kx = 0; kx < s.k; ++kx) {
        T* row = col + (static_cast<std::size_t>(ch * s.k + ky) * s.k + kx) * hw;
        for (int y = 0; y < oh; ++y) {
          const int iy = y + ky - s.pad;
          T* dst = row + static_cast<std::size_t>(y) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(ch) * h + iy) * w;
          for (int xo = 0; xo < ow; ++xo) {
            const int ix = xo + kx - s.pad;
            dst[xo] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int c, int h, int w, const ConvSpec& s, int oh, int ow, T* x) {
  const std::size_t hw = static_cast<std::size_t>(oh) * ow;
  std::fill(x, x + static_cast<std::size_t>(c) * h * w, T(0));
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < s.k; ++ky) {
      for (int kx = 0; kx < s.k; ++kx) {
        const T* row = col + (static_cast<std::size_t>(ch * s.k + ky) * s.k + kx) * hw;
        for (int y = 0; y < oh; ++y) {
          const int iy = y + ky - s.pad;
          if (iy < 0 || iy >= h) continue;
          T* dst = x + (static_cast<std::size_t>(ch) * h + iy) * w;
          const T* src = row + static_cast<std::size_t>(y) * ow;
          for (int xo = 0; xo < ow; ++xo) {
            const int ix = xo + kx - s.pad;
            if (ix >= 0 && ix < w) dst[ix] += src[xo];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv2d_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias, const ConvSpec& spec,
                    Tensor<T>& out) {
  require_shape(in, {-1, spec.in_c, -1, -1}, "conv2d input");
  if (weight.size() != spec.weight_count() || bias.size() != static_cast<std::size_t>(spec.out_c))
    throw Error(Errc::shape_mismatch, "conv2d parameter size");
  const int b_n = in.n(), h = in.h(), w = in.w();
  const int oh = spec.out_size(h), ow = spec.out_size(w);
  if (!(out.shape == std::array<int, 4>{b_n, spec.out_c, oh, ow})) out = Tensor<T>(b_n, spec.out_c, oh, ow);
  const int kdim = spec.in_c * spec.k * spec.k;
  const int hw = oh * ow;
  MapConstMat<T> wm(weight.data(), spec.out_c, kdim);

#pragma omp parallel
  {
    std::vector<T> col(static_cast<std::size_t>(kdim) * hw);
#pragma omp for schedule(static)
    for (int b = 0; b < b_n; ++b) {
      im2col(in.sample(b), spec.in_c, h, w, spec, oh, ow, col.data());
      MapMat<T> om(out.sample(b), spec.out_c, hw);
      om.noalias() = wm * MapConstMat<T>(col.data(), kdim, hw);
      for (int o = 0; o < spec.out_c; ++o) om.row(o).array() += bias[o];
    }
  }
}

template <typename T>
void conv2d_backward(const Tensor<T>& in, std::span<const T> weight, const ConvSpec& spec, const Tensor<T>& grad_out,
                     Tensor<T>* grad_in, std::span<T> grad_weight, std::span<T> grad_bias) {
  const int b_n = in.n(), h = in.h(), w = in.w();
  const int oh = spec.out_size(h), ow = spec.out_size(w);
  require_shape(grad_out, {b_n, spec.out_c, oh, ow}, "conv2d grad_out");
  if (grad_weight.size() != spec.weight_count() || grad_bias.size() != static_cast<std::size_t>(spec.out_c))
    throw Error(Errc::shape_mismatch, "conv2d gradient size");
  if (grad_in && !grad_in->same_shape(in)) *grad_in = Tensor<T>(in.n(), in.c(), in.h(), in.w());
  const int kdim = spec.in_c * spec.k * spec.k;
  const int hw = oh * ow;
  const std::size_t wsize = spec.weight_count();
  MapConstMat<T> wm(weight.data(), spec.out_c, kdim);

  std::vector<T> partial_w(wsize * b_n);
  std::vector<T> partial_b(static_cast<std::size_t>(spec.out_c) * b_n);

#pragma omp parallel
  {
    std::vector<T> col(static_cast<std::size_t>(kdim) * hw);
    std::vector<T> gcol(grad_in ? static_cast<std::size_t>(kdim) * hw : 0);
#pragma omp for schedule(static)
    for (int b = 0; b < b_n; ++b) {
      im2col(in.sample(b), spec.in_c, h, w, spec, oh, ow, col.data());
      MapConstMat<T> gm(grad_out.sample(b), spec.out_c, hw);
      MapMat<T>(partial_w.data() + wsize * b, spec.out_c, kdim).noalias() =
          gm * MapConstMat<T>(col.data(), kdim, hw).transpose();
      for (int o = 0; o < spec.out_c; ++o) {
        const T* g = grad_out.sample(b) + static_cast<std::size_t>(o) * hw;
        T sum = 0;
        for (int i = 0; i < hw; ++i) sum += g[i];
        partial_b[static_cast<std::size_t>(b) * spec.out_c + o] = sum;
      }
      if (grad_in) {
        MapMat<T>(gcol.data(), kdim, hw).noalias() = wm.transpose() * gm;
        col2im(gcol.data(), spec.in_c, h, w, spec, oh, ow, grad_in->sample(b));
      }
    }
  }
  for (int b = 0; b < b_n; ++b) {
    const T* pw = partial_w.data() + wsize * b;
    for (std::size_t i = 0; i < wsize; ++i) grad_weight[i] += pw[i];
    for (int o = 0; o < spec.out_c; ++o) grad_bias[o] += partial_b[static_cast<std::size_t>(b) * spec.out_c + o];
  }
}

template <typename T>
void relu_forward(const Tensor<T>& in, Tensor<T>& out) {
  if (!out.same_shape(in)) out = Tensor<T>(in.n(), in.c(), in.h(), in.w());
  const std::size_t n = in.size();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) out.data[i] = in.data[i] > T(0) ? in.data[i] : T(0);
}

template <typename T>
void relu_backward(const Tensor<T>& out, const Tensor<T>& grad_out, Tensor<T>& grad_in) {
  if (!grad_in.same_shape(out)) grad_in = Tensor<T>(out.n(), out.c(), out.h(), out.w());
  const std::size_t n = out.size();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    grad_in.data[i] = out.data[i] > T(0) ? grad_out.data[i] : T(0);
}

template <typename T>
void maxpool_forward(const Tensor<T>& in, const PoolSpec& spec, Tensor<T>& out, std::vector<std::int32_t>& argmax) {
  const int b_n = in.n(), c = in.c(), h = in.h(), w = in.w();
  const int oh = spec.out_size(h), ow = spec.out_size(w);
  if (!(out.shape == std::array<int, 4>{b_n, c, oh, ow})) out = Tensor<T>(b_n, c, oh, ow);
  argmax.assign(out.size(), 0);
#pragma omp parallel for schedule(static)
  for (int plane = 0; plane < b_n * c; ++plane) {
    const T* src = in.data.data() + static_cast<std::size_t>(plane) * h * w;
    T* dst = out.data.data() + static_cast<std::size_t>(plane) * oh * ow;
    std::int32_t* am = argmax.data() + static_cast<std::size_t>(plane) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const int ys = y * spec.stride, ye = std::min(ys + spec.k, h);
      for (int x = 0; x < ow; ++x) {
        const int xs = x * spec.stride, xe = std::min(xs + spec.k, w);
        T best = -std::numeric_limits<T>::infinity();
        std::int32_t best_i = ys * w + xs;
        for (int yy = ys; yy < ye; ++yy)
          for (int xx = xs; xx < xe; ++xx)
            if (src[yy * w + xx] > best) {
              best = src[yy * w + xx];
              best_i = yy * w + xx;
            }
        dst[y * ow + x] = best;
        am[y * ow + x] = best_i;
      }
    }
  }
}

template <typename T>
void maxpool_backward(const Tensor<T>& grad_out, const std::vector<std::int32_t>& argmax, Tensor<T>& grad_in) {
  const int planes = grad_out.n() * grad_out.c();
  const std::size_t in_plane = grad_in.plane();
  const std::size_t out_plane = grad_out.plane();
  std::fill(grad_in.data.begin(), grad_in.data.end(), T(0));
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    T* dst = grad_in.data.data() + p * in_plane;
    for (std::size_t i = 0; i < out_plane; ++i) dst[argmax[p * out_plane + i]] += grad_out.data[p * out_plane + i];
  }
}

template <typename T>
void avgpool_forward(const Tensor<T>& in, const PoolSpec& spec, Tensor<T>& out) {
  const int b_n = in.n(), c = in.c(), h = in.h(), w = in.w();
  const int oh = spec.out_size(h), ow = spec.out_size(w);
  if (!(out.shape == std::array<int, 4>{b_n, c, oh, ow})) out = Tensor<T>(b_n, c, oh, ow);
#pragma omp parallel for schedule(static)
  for (int plane = 0; plane < b_n * c; ++plane) {
    const T* src = in.data.data() + static_cast<std::size_t>(plane) * h * w;
    T* dst = out.data.data() + static_cast<std::size_t>(plane) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const int ys = y * spec.stride, ye = std::min(ys + spec.k, h);
      for (int x = 0; x < ow; ++x) {
        const int xs = x * spec.stride, xe = std::min(xs + spec.k, w);
        T sum = 0;
        for (int yy = ys; yy < ye; ++yy)
          for (int xx = xs; xx < xe; ++xx) sum += src[yy * w + xx];
        dst[y * ow + x] = sum / static_cast<T>((ye - ys) * (xe - xs));
      }
    }
  }
}

template <typename T>
void avgpool_backward(const Tensor<T>& grad_out, const PoolSpec& spec, Tensor<T>& grad_in) {
  const int h = grad_in.h(), w = grad_in.w();
  const int oh = grad_out.h(), ow = grad_out.w();
  const int planes = grad_out.n() * grad_out.c();
  std::fill(grad_in.data.begin(), grad_in.data.end(), T(0));
#pragma omp parallel for schedule(static)
  for (int plane = 0; plane < planes; ++plane) {
    const T* src = grad_out.data.data() + static_cast<std::size_t>(plane) * oh * ow;
    T* dst = grad_in.data.data() + static_cast<std::size_t>(plane) * h * w;
    for (int y = 0; y < oh; ++y) {
      const int ys = y * spec.stride, ye = std::min(ys + spec.k, h);
      for (int x = 0; x < ow; ++x) {
        const int xs = x * spec.stride, xe = std::min(xs + spec.k, w);
        const T g = src[y * ow + x] / static_cast<T>((ye - ys) * (xe - xs));
        for (int yy = ys; yy < ye; ++yy)
          for (int xx = xs; xx < xe; ++xx) dst[yy * w + xx] += g;
      }
    }
  }
}

template <typename T>
void upsample_nearest_forward(const Tensor<T>& in, int f, Tensor<T>& out) {
  const int b_n = in.n(), c = in.c(), h = in.h(), w = in.w();
  if (!(out.shape == std::array<int, 4>{b_n, c, h * f, w * f})) out = Tensor<T>(b_n, c, h * f, w * f);
  const int oh = h * f, ow = w * f;
#pragma omp parallel for schedule(static)
  for (int plane = 0; plane < b_n * c; ++plane) {
    const T* src = in.data.data() + static_cast<std::size_t>(plane) * h * w;
    T* dst = out.data.data() + static_cast<std::size_t>(plane) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) dst[y * ow + x] = src[(y / f) * w + x / f];
  }
}

template <typename T>
void upsample_nearest_backward(const Tensor<T>& grad_out, int f, Tensor<T>& grad_in) {
  const int b_n = grad_out.n(), c = grad_out.c();
  const int h = grad_out.h() / f, w = grad_out.w() / f;
  if (!(grad_in.shape == std::array<int, 4>{b_n, c, h, w})) grad_in = Tensor<T>(b_n, c, h, w);
  const int oh = grad_out.h(), ow = grad_out.w();
#pragma omp parallel for schedule(static)
  for (int plane = 0; plane < b_n * c; ++plane) {
    const T* src = grad_out.data.data() + static_cast<std::size_t>(plane) * oh * ow;
    T* dst = grad_in.data.data() + static_cast<std::size_t>(plane) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        T sum = 0;
        for (int dy = 0; dy < f; ++dy)
          for (int dx = 0; dx < f; ++dx) sum += src[(y * f + dy) * ow + x * f + dx];
        dst[y * w + x] = sum;
      }
    }
  }
}

template <typename T>
void concat_channels_forward(std::span<const Tensor<T>* const> parts, Tensor<T>& out) {
  if (parts.empty()) throw Error(Errc::shape_mismatch, "concat of nothing");
  const int b_n = parts[0]->n(), h = parts[0]->h(), w = parts[0]->w();
  int c_total = 0;
  for (const auto* p : parts) {
    require_shape(*p, {b_n, -1, h, w}, "concat part");
    c_total += p->c();
  }
  if (!(out.shape == std::array<int, 4>{b_n, c_total, h, w})) out = Tensor<T>(b_n, c_total, h, w);
#pragma omp parallel for schedule(static)
  for (int b = 0; b < b_n; ++b) {
    T* dst = out.sample(b);
    for (const auto* p : parts) dst = std::copy(p->sample(b), p->sample(b) + p->sample_size(), dst);
  }
}

template <typename T>
void concat_channels_backward(const Tensor<T>& grad_out, std::span<Tensor<T>* const> grad_parts) {
  const int b_n = grad_out.n();
#pragma omp parallel for schedule(static)
  for (int b = 0; b < b_n; ++b) {
    const T* src = grad_out.sample(b);
    for (auto* p : grad_parts) {
      std::copy(src, src + p->sample_size(), p->sample(b));
      src += p->sample_size();
    }
  }
}

template <typename T>
void gap_forward(const Tensor<T>& in, Tensor<T>& out) {
  const int b_n = in.n(), c = in.c();
  if (!(out.shape == std::array<int, 4>{b_n, c, 1, 1})) out = Tensor<T>(b_n, c, 1, 1);
  const std::size_t plane = in.plane();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < b_n * c; ++i) {
    const T* src = in.data.data() + static_cast<std::size_t>(i) * plane;
    T sum = 0;
    for (std::size_t k = 0; k < plane; ++k) sum += src[k];
    out.data[i] = sum / static_cast<T>(plane);
  }
}

template <typename T>
void gap_backward(const Tensor<T>& grad_out, Tensor<T>& grad_in) {
  const std::size_t plane = grad_in.plane();
  const int n = grad_out.n() * grad_out.c();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const T g = grad_out.data[i] / static_cast<T>(plane);
    std::fill_n(grad_in.data.data() + static_cast<std::size_t>(i) * plane, plane, g);
  }
}

template <typename T>
void linear_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias, int out_features,
                    Tensor<T>& out) {
  const int b_n = in.n();
  const int d = static_cast<int>(in.sample_size());
  if (weight.size() != static_cast<std::size_t>(out_features) * d || bias.size() != static_cast<std::size_t>(out_features))
    throw Error(Errc::shape_mismatch, "linear parameter size");
  if (!(out.shape == std::array<int, 4>{b_n, out_features, 1, 1})) out = Tensor<T>(b_n, out_features, 1, 1);
  for (int b = 0; b < b_n; ++b) {
    const T* x = in.sample(b);
    for (int o = 0; o < out_features; ++o) {
      const T* wr = weight.data() + static_cast<std::size_t>(o) * d;
      T acc = bias[o];
      for (int k = 0; k < d; ++k) acc += wr[k] * x[k];
      out.at(b, o, 0, 0) = acc;
    }
  }
}

template <typename T>
void linear_backward(const Tensor<T>& in, std::span<const T> weight, int out_features, const Tensor<T>& grad_out,
                     Tensor<T>* grad_in, std::span<T> grad_weight, std::span<T> grad_bias) {
  const int b_n = in.n();
  const int d = static_cast<int>(in.sample_size());
  if (grad_in && !grad_in->same_shape(in)) *grad_in = Tensor<T>(in.n(), in.c(), in.h(), in.w());
  for (int b = 0; b < b_n; ++b) {
    const T* x = in.sample(b);
    for (int o = 0; o < out_features; ++o) {
      const T g = grad_out.at(b, o, 0, 0);
      grad_bias[o] += g;
      T* gw = grad_weight.data() + static_cast<std::size_t>(o) * d;
      for (int k = 0; k < d; ++k) gw[k] += g * x[k];
    }
    if (grad_in) {
      T* gx = grad_in->sample(b);
      for (int k = 0; k < d; ++k) {
        T acc = 0;
        for (int o = 0; o < out_features; ++o) acc += grad_out.at(b, o, 0, 0) * weight[static_cast<std::size_t>(o) * d + k];
        gx[k] = acc;
      }
    }
  }
}

template <typename T>
void softmax(const Tensor<T>& logits, Tensor<T>& probs) {
  const int b_n = logits.n(), k = logits.c();
  if (!probs.same_shape(logits)) probs = Tensor<T>(b_n, k, 1, 1);
  for (int b = 0; b < b_n; ++b) {
    const T* z = logits.sample(b);
    T* p = probs.sample(b);
    const T zmax = *std::max_element(z, z + k);
    T sum = 0;
    for (int i = 0; i < k; ++i) {
      p[i] = std::exp(z[i] - zmax);
      sum += p[i];
    }
    for (int i = 0; i < k; ++i) p[i] /= sum;
  }
}

template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels, Tensor<T>& probs, Tensor<T>& grad_logits) {
  const int b_n = logits.n(), k = logits.c();
  if (labels.size() != static_cast<std::size_t>(b_n)) throw Error(Errc::shape_mismatch, "labels/batch size");
  softmax(logits, probs);
  if (!grad_logits.same_shape(logits)) grad_logits = Tensor<T>(b_n, k, 1, 1);
  T loss = 0;
  const T inv_b = T(1) / static_cast<T>(b_n);
  for (int b = 0; b < b_n; ++b) {
    const T* z = logits.sample(b);
    const T zmax = *std::max_element(z, z + k);
    T sum = 0;
    for (int i = 0; i < k; ++i) sum += std::exp(z[i] - zmax);
    const int y = labels[b];
    if (y < 0 || y >= k) throw Error(Errc::invalid_argument, "label out of range");
    loss += (std::log(sum) + zmax - z[y]);
    for (int i = 0; i < k; ++i) grad_logits.at(b, i, 0, 0) = (probs.at(b, i, 0, 0) - (i == y ? T(1) : T(0))) * inv_b;
  }
  return loss * inv_b;
}

#define HFCLOUD_INSTANTIATE(T)                                                                                      \
  template void conv2d_forward<T>(const Tensor<T>&, std::span<const T>, std::span<const T>, const ConvSpec&,         \
                                  Tensor<T>&);                                                                      \
  template void conv2d_backward<T>(const Tensor<T>&, std::span<const T>, const ConvSpec&, const Tensor<T>&,          \
                                   Tensor<T>*, std::span<T>, std::span<T>);                                         \
  template void relu_forward<T>(const Tensor<T>&, Tensor<T>&);                                                      \
  template void relu_backward<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);                                   \
  template void maxpool_forward<T>(const Tensor<T>&, const PoolSpec&, Tensor<T>&, std::vector<std::int32_t>&);     \
  template void maxpool_backward<T>(const Tensor<T>&, const std::vector<std::int32_t>&, Tensor<T>&);                \
  template void avgpool_forward<T>(const Tensor<T>&, const PoolSpec&, Tensor<T>&);                                  \
  template void avgpool_backward<T>(const Tensor<T>&, const PoolSpec&, Tensor<T>&);                                 \
  template void upsample_nearest_forward<T>(const Tensor<T>&, int, Tensor<T>&);                                     \
  template void upsample_nearest_backward<T>(const Tensor<T>&, int, Tensor<T>&);                                    \
  template void concat_channels_forward<T>(std::span<const Tensor<T>* const>, Tensor<T>&);                          \
  template void concat_channels_backward<T>(const Tensor<T>&, std::span<Tensor<T>* const>);                         \
  template void gap_forward<T>(const Tensor<T>&, Tensor<T>&);                                                       \
  template void gap_backward<T>(const Tensor<T>&, Tensor<T>&);                                                      \
  template void linear_forward<T>(const Tensor<T>&, std::span<const T>, std::span<const T>, int, Tensor<T>&);       \
  template void linear_backward<T>(const Tensor<T>&, std::span<const T>, int, const Tensor<T>&, Tensor<T>*,         \
                                   std::span<T>, std::span<T>);                                                     \
  template void softmax<T>(const Tensor<T>&, Tensor<T>&);                                                           \
  template T softmax_cross_entropy<T>(const Tensor<T>&, std::span<const int>, Tensor<T>&, Tensor<T>&);

HFCLOUD_INSTANTIATE(float)
HFCLOUD_INSTANTIATE(double)

#undef HFCLOUD_INSTANTIATE

}  // namespace hfcloud::nn
