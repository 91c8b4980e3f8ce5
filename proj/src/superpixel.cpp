#include "hfcloud/superpixel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "hfcloud/binio.hpp"
#include "hfcloud/error.hpp"

namespace hfcloud {
namespace {

constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
constexpr int kDx[4] = {1, -1, 0, 0};
constexpr int kDy[4] = {0, 0, 1, -1};
constexpr double kMoveTolerance = 1e-9;

struct Feature {
  double v[5];
};

// Running sums for one region in the joint colour/space feature.
struct RegionSum {
  double n = 0;
  double s[5] = {0, 0, 0, 0, 0};

  void add(const Feature& f) {
    n += 1;
    for (int k = 0; k < 5; ++k) s[k] += f.v[k];
  }
  void remove(const Feature& f) {
    n -= 1;
    for (int k = 0; k < 5; ++k) s[k] -= f.v[k];
  }
  double dist2(const Feature& f) const {
    double d = 0;
    for (int k = 0; k < 5; ++k) {
      const double e = f.v[k] - s[k] / n;
      d += e * e;
    }
    return d;
  }
};

double spatial_weight(int w, int h, const SegmentParams& p) {
  const double step = std::sqrt(static_cast<double>(w) * h / p.n_superpixels);
  return p.compactness / step;
}

std::vector<Feature> features(const MultiBandImage& img, double c) {
  std::vector<Feature> f(img.pixel_count());
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      auto& v = f[img.index(x, y)].v;
      v[0] = img.channel(x, y, 0);
      v[1] = img.channel(x, y, 1);
      v[2] = img.channel(x, y, 2);
      v[3] = c * x;
      v[4] = c * y;
    }
  }
  return f;
}

double pair_weight(const EdgeMap& e, std::size_t a, std::size_t b) {
  return 1.0 - 0.5 * (double{e.prob[a]} + e.prob[b]);
}

// True when removing the centre pixel cannot split `region`: every
// 4-neighbour in the region is reachable from the others along the 8-ring.
bool removal_keeps_connected(const std::vector<std::uint32_t>& label, int w, int h, int x, int y,
                             std::uint32_t region) {
  static constexpr int rx[8] = {-1, 0, 1, 1, 1, 0, -1, -1};
  static constexpr int ry[8] = {-1, -1, -1, 0, 1, 1, 1, 0};
  bool in[8];
  int n4 = 0;
  for (int k = 0; k < 8; ++k) {
    const int xx = x + rx[k], yy = y + ry[k];
    in[k] = xx >= 0 && yy >= 0 && xx < w && yy < h && label[static_cast<std::size_t>(yy) * w + xx] == region;
    if ((k & 1) && in[k]) ++n4;
  }
  if (n4 <= 1) return true;

  // Ring positions 1,3,5,7 are the 4-neighbours; count the runs of
  // consecutive in-region ring cells that contain at least one of them.
  int start = -1;
  for (int k = 0; k < 8; ++k)
    if (!in[k]) {
      start = k;
      break;
    }
  if (start < 0) return true;
  int runs_with_edge = 0;
  bool in_run = false, run_has_edge = false;
  for (int i = 1; i <= 8; ++i) {
    const int k = (start + i) % 8;
    if (in[k]) {
      if (!in_run) {
        in_run = true;
        run_has_edge = false;
      }
      if (k & 1) run_has_edge = true;
    } else if (in_run) {
      in_run = false;
      if (run_has_edge) ++runs_with_edge;
    }
  }
  return runs_with_edge <= 1;
}

}  // namespace

void validate(const SuperPixelMap& map) {
  if (map.width < 0 || map.height < 0 ||
      map.label.size() != static_cast<std::size_t>(map.width) * map.height)
    throw Error(Errc::dimension_mismatch, "label raster size");
  std::vector<char> seen(map.n_regions, 0);
  for (auto l : map.label) {
    if (l >= map.n_regions) throw Error(Errc::invalid_argument, "region id out of range");
    seen[l] = 1;
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end())
    throw Error(Errc::invalid_argument, "region ids are not dense");
}

SuperPixelMap grid_init(int width, int height, int n_superpixels) {
  if (n_superpixels < 1) throw Error(Errc::invalid_argument, "n_superpixels must be >= 1");
  if (static_cast<long long>(n_superpixels) > static_cast<long long>(width) * height)
    throw Error(Errc::invalid_argument, "more super-pixels than pixels");
  const int k = n_superpixels;
  int nx = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k) * width / height)));
  nx = std::clamp(nx, 1, std::min(k, width));
  const int ny = (k + nx - 1) / nx;
  const int base = k / ny;
  const int extra = k % ny;

  SuperPixelMap map{width, height, static_cast<std::uint32_t>(k),
                    std::vector<std::uint32_t>(static_cast<std::size_t>(width) * height)};
  std::uint32_t first = 0;
  for (int row = 0; row < ny; ++row) {
    const int cols = base + (row < extra ? 1 : 0);
    const int y0 = static_cast<int>(static_cast<long long>(row) * height / ny);
    const int y1 = static_cast<int>(static_cast<long long>(row + 1) * height / ny);
    for (int y = y0; y < y1; ++y) {
      for (int x = 0; x < width; ++x) {
        const int col = static_cast<int>(static_cast<long long>(x) * cols / width);
        map.label[static_cast<std::size_t>(y) * width + x] = first + col;
      }
    }
    first += cols;
  }
  return map;
}

double segmentation_energy(const MultiBandImage& img, const EdgeMap& edges, const SuperPixelMap& map,
                           const SegmentParams& params) {
  const int w = img.width, h = img.height;
  const auto f = features(img, spatial_weight(w, h, params));
  std::vector<RegionSum> sums(map.n_regions);
  for (std::size_t i = 0; i < f.size(); ++i) sums[map.label[i]].add(f[i]);
  double e = 0;
  for (std::size_t i = 0; i < f.size(); ++i) e += sums[map.label[i]].dist2(f[i]);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = img.index(x, y);
      if (x + 1 < w && map.label[i] != map.label[i + 1]) e += params.edge_weight * pair_weight(edges, i, i + 1);
      if (y + 1 < h && map.label[i] != map.label[i + w]) e += params.edge_weight * pair_weight(edges, i, i + w);
    }
  }
  return e;
}

SuperPixelMap segment(const MultiBandImage& img, const EdgeMap& edges, const SegmentParams& params,
                      std::vector<double>* energy_trace) {
  img.validate();
  if (params.iterations < 1) throw Error(Errc::invalid_argument, "iterations must be >= 1");
  if (edges.width != img.width || edges.height != img.height)
    throw Error(Errc::dimension_mismatch, "edge map size differs from image");
  const int w = img.width, h = img.height;
  SuperPixelMap map = grid_init(w, h, params.n_superpixels);
  if (energy_trace) {
    energy_trace->clear();
    energy_trace->push_back(segmentation_energy(img, edges, map, params));
  }

  const auto f = features(img, spatial_weight(w, h, params));
  std::vector<RegionSum> sums(map.n_regions);
  for (std::size_t i = 0; i < f.size(); ++i) sums[map.label[i]].add(f[i]);
  auto& label = map.label;
  const double lambda = params.edge_weight;

  for (int sweep = 0; sweep < params.iterations; ++sweep) {
    std::size_t moves = 0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const std::uint32_t from = label[i];

        std::uint32_t cand[4];
        std::size_t nbr[4];
        int nn = 0, nc = 0;
        for (int d = 0; d < 4; ++d) {
          const int xx = x + kDx[d], yy = y + kDy[d];
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          const std::size_t j = static_cast<std::size_t>(yy) * w + xx;
          nbr[nn++] = j;
          const std::uint32_t l = label[j];
          if (l != from && std::find(cand, cand + nc, l) == cand + nc) cand[nc++] = l;
        }
        if (nc == 0) continue;
        const RegionSum& src = sums[from];
        if (src.n < 2) continue;

        const double leave = src.n / (src.n - 1) * src.dist2(f[i]);
        double boundary_from = 0;
        for (int k = 0; k < nn; ++k)
          if (label[nbr[k]] != from) boundary_from += pair_weight(edges, i, nbr[k]);

        double best = -kMoveTolerance;
        std::uint32_t best_to = kNone;
        for (int c = 0; c < nc; ++c) {
          const std::uint32_t to = cand[c];
          const RegionSum& dst = sums[to];
          double boundary_to = 0;
          for (int k = 0; k < nn; ++k)
            if (label[nbr[k]] != to) boundary_to += pair_weight(edges, i, nbr[k]);
          const double delta = dst.n / (dst.n + 1) * dst.dist2(f[i]) - leave + lambda * (boundary_to - boundary_from);
          if (delta < best || (delta == best && best_to != kNone && to < best_to)) {
            best = delta;
            best_to = to;
          }
        }
        if (best_to == kNone) continue;
        if (!removal_keeps_connected(label, w, h, x, y, from)) continue;

        sums[from].remove(f[i]);
        sums[best_to].add(f[i]);
        label[i] = best_to;
        ++moves;
      }
    }
    if (energy_trace) energy_trace->push_back(segmentation_energy(img, edges, map, params));
    if (moves == 0 && !energy_trace) break;
  }
  return map;
}

SuperPixelMap enforce_connectivity(const SuperPixelMap& in, std::size_t min_area) {
  validate(in);
  const int w = in.width, h = in.height;
  const std::size_t n = in.pixel_count();

  // Connected components of the input labels, numbered by first appearance.
  std::vector<std::uint32_t> comp(n, kNone);
  std::uint32_t n_comp = 0;
  std::vector<std::size_t> stack;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] != kNone) continue;
    const std::uint32_t id = n_comp++;
    comp[s] = id;
    stack.assign(1, s);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(p % w), y = static_cast<int>(p / w);
      for (int d = 0; d < 4; ++d) {
        const int xx = x + kDx[d], yy = y + kDy[d];
        if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
        const std::size_t q = static_cast<std::size_t>(yy) * w + xx;
        if (comp[q] == kNone && in.label[q] == in.label[p]) {
          comp[q] = id;
          stack.push_back(q);
        }
      }
    }
  }

  // Merge passes: each pass merges disjoint (small, target) pairs, so
  // region membership only changes between passes.
  while (true) {
    std::vector<std::size_t> area(n_comp, 0);
    for (auto c : comp) ++area[c];
    std::vector<std::map<std::uint32_t, std::size_t>> border(n_comp);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (x + 1 < w && comp[i] != comp[i + 1]) {
          ++border[comp[i]][comp[i + 1]];
          ++border[comp[i + 1]][comp[i]];
        }
        if (y + 1 < h && comp[i] != comp[i + w]) {
          ++border[comp[i]][comp[i + w]];
          ++border[comp[i + w]][comp[i]];
        }
      }
    }
    std::vector<std::uint32_t> target(n_comp);
    std::iota(target.begin(), target.end(), 0u);
    std::vector<char> touched(n_comp, 0);
    bool merged = false;
    for (std::uint32_t c = 0; c < n_comp; ++c) {
      if (area[c] >= min_area || border[c].empty() || touched[c]) continue;
      std::uint32_t best = kNone;
      std::size_t best_len = 0;
      for (const auto& [nb, len] : border[c])
        if (len > best_len) {  // std::map iterates ids ascending, so ties keep the lower id
          best = nb;
          best_len = len;
        }
      if (touched[best]) continue;
      target[c] = best;
      touched[c] = touched[best] = 1;
      merged = true;
    }
    if (!merged) break;
    for (auto& c : comp) c = target[c];
    // Compact ids again in first-appearance order.
    std::vector<std::uint32_t> remap(n_comp, kNone);
    std::uint32_t next = 0;
    for (auto& c : comp) {
      if (remap[c] == kNone) remap[c] = next++;
      c = remap[c];
    }
    n_comp = next;
  }

  return SuperPixelMap{w, h, n_comp, std::move(comp)};
}

std::vector<RegionStats> region_stats(const SuperPixelMap& map, const MultiBandImage& img) {
  if (map.width != img.width || map.height != img.height)
    throw Error(Errc::dimension_mismatch, "super-pixel map and image sizes differ");
  std::vector<RegionStats> out(map.n_regions);
  std::vector<std::array<double, 6>> acc(map.n_regions, {0, 0, 0, 0, 0, 0});
  for (std::uint32_t r = 0; r < map.n_regions; ++r) {
    out[r].id = r;
    out[r].x0 = map.width;
    out[r].y0 = map.height;
    out[r].x1 = -1;
    out[r].y1 = -1;
  }
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const std::size_t i = img.index(x, y);
      auto& s = out[map.label[i]];
      auto& a = acc[map.label[i]];
      ++s.area;
      a[0] += x;
      a[1] += y;
      a[2] += img.rgb[i * 3];
      a[3] += img.rgb[i * 3 + 1];
      a[4] += img.rgb[i * 3 + 2];
      a[5] += img.nir[i];
      s.x0 = std::min(s.x0, x);
      s.y0 = std::min(s.y0, y);
      s.x1 = std::max(s.x1, x);
      s.y1 = std::max(s.y1, y);
    }
  }
  for (std::uint32_t r = 0; r < map.n_regions; ++r) {
    auto& s = out[r];
    if (s.area == 0) throw Error(Errc::invalid_argument, "empty region " + std::to_string(r));
    const double n = static_cast<double>(s.area);
    s.cx = acc[r][0] / n;
    s.cy = acc[r][1] / n;
    s.mean_rgb = {acc[r][2] / n, acc[r][3] / n, acc[r][4] / n};
    s.mean_nir = acc[r][5] / n;
  }
  return out;
}

RegionGraph adjacency(const SuperPixelMap& map) {
  RegionGraph g(map.n_regions);
  const int w = map.width, h = map.height;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto a = map.at(x, y);
      if (x + 1 < w) {
        const auto b = map.at(x + 1, y);
        if (a != b) {
          g[a].push_back(b);
          g[b].push_back(a);
        }
      }
      if (y + 1 < h) {
        const auto b = map.at(x, y + 1);
        if (a != b) {
          g[a].push_back(b);
          g[b].push_back(a);
        }
      }
    }
  }
  for (auto& nb : g) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return g;
}

std::array<int, 2> patch_origin(int width, int height, const RegionStats& region, int size) {
  const int cx = (region.x0 + region.x1) / 2;
  const int cy = (region.y0 + region.y1) / 2;
  auto place = [size](int centre, int extent) {
    if (extent <= size) return extent == size ? 0 : centre - size / 2;
    return std::clamp(centre - size / 2, 0, extent - size);
  };
  return {place(cx, width), place(cy, height)};
}

Patch extract_patch(const MultiBandImage& img, const RegionStats& region, int size) {
  if (size != kPatchSize) throw Error(Errc::invalid_argument, "patches are fixed at 32x32");
  const auto [ox, oy] = patch_origin(img.width, img.height, region, size);
  Patch p;
  p.region_id = region.id;
  p.mean_nir = region.mean_nir;
  for (int y = 0; y < size; ++y) {
    const int sy = std::clamp(oy + y, 0, img.height - 1);
    for (int x = 0; x < size; ++x) {
      const int sx = std::clamp(ox + x, 0, img.width - 1);
      for (int c = 0; c < 3; ++c) p.at(c, y, x) = img.channel(sx, sy, c) / 255.0f;
    }
  }
  return p;
}

std::vector<std::uint8_t> encode_spxm(const SuperPixelMap& map) {
  validate(map);
  binio::Writer w;
  w.bytes("SPXM");
  w.u8(1);
  w.u32(static_cast<std::uint32_t>(map.width));
  w.u32(static_cast<std::uint32_t>(map.height));
  w.u32(map.n_regions);
  for (auto l : map.label) w.u32(l);
  return std::move(w).data();
}

SuperPixelMap decode_spxm(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  if (r.bytes(4) != "SPXM") throw Error(Errc::bad_magic, "not an SPXM file");
  const auto version = r.u8();
  if (version != 1) throw Error(Errc::unsupported_version, "SPXM version " + std::to_string(version));
  SuperPixelMap map;
  map.width = static_cast<int>(r.u32());
  map.height = static_cast<int>(r.u32());
  map.n_regions = r.u32();
  const std::size_t n = static_cast<std::size_t>(map.width) * map.height;
  if (r.remaining() < n * 4) throw Error(Errc::truncated, "SPXM label payload");
  map.label.resize(n);
  for (auto& l : map.label) l = r.u32();
  validate(map);
  return map;
}

void save_spxm(const SuperPixelMap& map, const std::string& path) { binio::write_file(path, encode_spxm(map)); }

SuperPixelMap load_spxm(const std::string& path) { return decode_spxm(binio::read_file(path)); }

}  // namespace hfcloud
