#include "hfcloud/edgeprob.hpp"

#include <algorithm>
#include <cmath>

#include "hfcloud/error.hpp"
#include "hfcloud/image_io.hpp"

namespace hfcloud {
namespace {

constexpr double kFlatEpsilon = 1e-12;

std::vector<double> luminance(const MultiBandImage& img) {
  std::vector<double> lum(img.pixel_count());
  for (std::size_t i = 0; i < lum.size(); ++i)
    lum[i] = (static_cast<double>(img.rgb[i * 3]) + img.rgb[i * 3 + 1] + img.rgb[i * 3 + 2]) / 3.0;
  return lum;
}

EdgeMap normalise(int w, int h, const std::vector<double>& mag) {
  const double peak = mag.empty() ? 0.0 : *std::max_element(mag.begin(), mag.end());
  const double denom = std::max(kFlatEpsilon, peak);
  EdgeMap out{w, h, std::vector<float>(mag.size())};
  for (std::size_t i = 0; i < mag.size(); ++i)
    out.prob[i] = static_cast<float>(std::clamp(mag[i] / denom, 0.0, 1.0));
  return out;
}

}  // namespace

EdgeMap edge_probability(const MultiBandImage& img, EdgeDetector detector,
                         const std::optional<EdgeMap>& external) {
  if (detector == EdgeDetector::external) {
    if (!external) throw Error(Errc::invalid_argument, "external detector needs a precomputed map");
    if (external->width != img.width || external->height != img.height)
      throw Error(Errc::dimension_mismatch, "external edge map size differs from image");
    EdgeMap out = *external;
    for (auto& p : out.prob) p = std::clamp(p, 0.0f, 1.0f);
    return out;
  }

  const int w = img.width;
  const int h = img.height;
  const auto lum = luminance(img);
  std::vector<double> mag(lum.size(), 0.0);

  // Scharr is separable: [3,10,3] smoothing across the derivative axis,
  // central difference along it. Scale s spaces the taps s pixels apart.
  for (int s : kEdgeScales) {
    const double norm = 1.0 / (32.0 * s);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
      const int ym = std::max(y - s, 0);
      const int yp = std::min(y + s, h - 1);
      const double* rm = lum.data() + static_cast<std::size_t>(ym) * w;
      const double* r0 = lum.data() + static_cast<std::size_t>(y) * w;
      const double* rp = lum.data() + static_cast<std::size_t>(yp) * w;
      for (int x = 0; x < w; ++x) {
        const int xm = std::max(x - s, 0);
        const int xp = std::min(x + s, w - 1);
        const double gx = 3.0 * (rm[xp] - rm[xm]) + 10.0 * (r0[xp] - r0[xm]) + 3.0 * (rp[xp] - rp[xm]);
        const double gy = 3.0 * (rp[xm] - rm[xm]) + 10.0 * (rp[x] - rm[x]) + 3.0 * (rp[xp] - rm[xp]);
        const double m = std::sqrt(gx * gx + gy * gy) * norm;
        double& dst = mag[static_cast<std::size_t>(y) * w + x];
        dst = std::max(dst, m);
      }
    }
  }
  return normalise(w, h, mag);
}

EdgeMap load_edge_map(const std::string& path) {
  const auto png = image_io::read_png(path);
  if (png.channels != 1) throw Error(Errc::corrupt_metadata, "edge map must be single-channel");
  const double full = png.bit_depth == 16 ? 65535.0 : 255.0;
  EdgeMap out{png.width, png.height, std::vector<float>(png.samples.size())};
  for (std::size_t i = 0; i < png.samples.size(); ++i)
    out.prob[i] = static_cast<float>(png.samples[i] / full);
  return out;
}

void save_edge_map(const EdgeMap& map, const std::string& path) {
  std::vector<std::uint16_t> q(map.prob.size());
  for (std::size_t i = 0; i < q.size(); ++i)
    q[i] = static_cast<std::uint16_t>(std::lround(std::clamp(map.prob[i], 0.0f, 1.0f) * 65535.0));
  image_io::write_gray16(path, map.width, map.height, q);
}

namespace reference {

EdgeMap gradient_multiscale(const MultiBandImage& img) {
  const int w = img.width;
  const int h = img.height;
  auto lum_at = [&](int x, int y) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return (static_cast<double>(img.channel(x, y, 0)) + img.channel(x, y, 1) + img.channel(x, y, 2)) / 3.0;
  };
  static constexpr double kx[3][3] = {{-3, 0, 3}, {-10, 0, 10}, {-3, 0, 3}};
  static constexpr double ky[3][3] = {{-3, -10, -3}, {0, 0, 0}, {3, 10, 3}};

  std::vector<double> mag(img.pixel_count(), 0.0);
  for (int s : kEdgeScales) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double gx = 0, gy = 0;
        for (int j = -1; j <= 1; ++j) {
          for (int i = -1; i <= 1; ++i) {
            const double v = lum_at(x + i * s, y + j * s);
            gx += kx[j + 1][i + 1] * v;
            gy += ky[j + 1][i + 1] * v;
          }
        }
        const double m = std::sqrt(gx * gx + gy * gy) / (32.0 * s);
        auto& dst = mag[static_cast<std::size_t>(y) * w + x];
        dst = std::max(dst, m);
      }
    }
  }
  return normalise(w, h, mag);
}

}  // namespace reference
}  // namespace hfcloud
