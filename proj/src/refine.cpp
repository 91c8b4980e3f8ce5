#include "hfcloud/refine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "hfcloud/binio.hpp"
#include "hfcloud/error.hpp"
#include "hfcloud/image_io.hpp"

namespace hfcloud {

using nlohmann::json;

ClassLabel ensemble_label(const std::array<double, kNumClasses>& cnn, const std::array<double, kNumClasses>& forest) {
  int best = 0;
  double best_v = -1;
  for (int c = 0; c < kNumClasses; ++c) {
    const double v = (cnn[c] + forest[c]) / 2;
    if (v > best_v) {
      best_v = v;
      best = c;
    }
  }
  return static_cast<ClassLabel>(best);
}

RegionPrediction make_prediction(std::uint32_t region_id, const std::array<double, kNumClasses>& probs_cnn,
                                 const std::array<double, kNumClasses>& probs_forest,
                                 std::span<const float> cnn_feature, std::span<const double> class_vectors) {
  if (cnn_feature.size() + class_vectors.size() != kFusedFeatureDim)
    throw Error(Errc::shape_mismatch, "fused feature must have 144 entries");
  RegionPrediction p;
  p.region_id = region_id;
  p.probs_cnn = probs_cnn;
  p.probs_forest = probs_forest;
  p.label = ensemble_label(probs_cnn, probs_forest);
  p.feature.assign(cnn_feature.begin(), cnn_feature.end());
  p.feature.insert(p.feature.end(), class_vectors.begin(), class_vectors.end());
  return p;
}

namespace {

void require_indexed(std::span<const RegionPrediction> preds) {
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i].region_id != i) throw Error(Errc::invalid_argument, "predictions must be indexed by region id");
}

}  // namespace

std::vector<RegionPrediction> nir_filter(std::vector<RegionPrediction> preds, std::span<const RegionStats> stats,
                                         double nir_threshold) {
  for (auto& p : preds) {
    if (p.region_id >= stats.size() || stats[p.region_id].id != p.region_id)
      throw Error(Errc::not_found, "no region statistics for region " + std::to_string(p.region_id));
    if (p.label == ClassLabel::thick_cloud && stats[p.region_id].mean_nir < nir_threshold) {
      p.label = ClassLabel::building;
      p.nir_demoted = true;
    }
  }
  return preds;
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::shape_mismatch, "cosine_distance length mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) throw Error(Errc::invalid_argument, "cosine similarity undefined for a zero vector");
  const double cos = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
  return 1.0 - cos;
}

std::vector<std::vector<std::uint32_t>> neighborhoods(const RegionGraph& graph, int hops) {
  if (hops < 1) throw Error(Errc::config, "hop order must be >= 1");
  std::vector<std::vector<std::uint32_t>> out(graph.size());
  std::vector<int> depth(graph.size(), -1);
  std::vector<std::uint32_t> frontier, next, touched;
  for (std::uint32_t s = 0; s < graph.size(); ++s) {
    frontier.assign(1, s);
    touched.assign(1, s);
    depth[s] = 0;
    for (int d = 1; d <= hops && !frontier.empty(); ++d) {
      next.clear();
      for (auto u : frontier)
        for (auto v : graph[u])
          if (depth[v] < 0) {
            depth[v] = d;
            next.push_back(v);
            touched.push_back(v);
          }
      frontier.swap(next);
    }
    for (auto v : touched) {
      if (v != s) out[s].push_back(v);
      depth[v] = -1;
    }
    std::sort(out[s].begin(), out[s].end());
  }
  return out;
}

std::vector<RegionPrediction> relabel_ambiguous(std::vector<RegionPrediction> preds, const RegionGraph& graph,
                                                const RefineConfig& config) {
  require_indexed(preds);
  if (graph.size() != preds.size()) throw Error(Errc::shape_mismatch, "graph and predictions cover different regions");
  const auto hood = neighborhoods(graph, config.hops);
  auto in_other = [&](ClassLabel l) {
    return l == ClassLabel::other_culture || (config.other_group == OtherGroup::non_cloud && l == ClassLabel::building);
  };
  std::vector<std::uint8_t> promote(preds.size(), 0);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(preds.size()); ++s) {
    const auto& p = preds[s];
    if (p.label != ClassLabel::cirrus_cloud && p.label != ClassLabel::building) continue;
    double thick = std::numeric_limits<double>::infinity(), other = thick;
    double thick_sum = 0, other_sum = 0;
    int n_thick = 0, n_other = 0;
    for (auto t : hood[s]) {
      const auto& q = preds[t];
      const bool is_thick = q.label == ClassLabel::thick_cloud;
      if (!is_thick && !in_other(q.label)) continue;
      const double d = cosine_distance(q.feature, p.feature);
      if (is_thick) {
        thick = std::min(thick, d);
        thick_sum += d;
        ++n_thick;
      } else {
        other = std::min(other, d);
        other_sum += d;
        ++n_other;
      }
    }
    if (n_thick == 0 || n_other == 0) continue;
    if (config.aggregation == NeighborAggregation::mean) {
      thick = thick_sum / n_thick;
      other = other_sum / n_other;
    }
    promote[s] = thick < other;
  }
  for (std::size_t s = 0; s < preds.size(); ++s)
    if (promote[s]) {
      preds[s].label = ClassLabel::thick_cloud;
      preds[s].relabeled = true;
    }
  return preds;
}

std::vector<RegionPrediction> refine(std::vector<RegionPrediction> preds, std::span<const RegionStats> stats,
                                     const RegionGraph& graph, const RefineConfig& config) {
  return relabel_ambiguous(nir_filter(std::move(preds), stats, config.nir_threshold), graph, config);
}

CloudMask region_mask(const SuperPixelMap& map, std::span<const RegionPrediction> preds) {
  require_indexed(preds);
  if (preds.size() != map.n_regions) throw Error(Errc::not_found, "predictions do not cover every region");
  CloudMask m{map.width, map.height, std::vector<std::uint8_t>(map.pixel_count(), 0)};
  for (std::size_t i = 0; i < m.cloud.size(); ++i) m.cloud[i] = preds[map.label[i]].label == ClassLabel::thick_cloud;
  return m;
}

CloudMask close3x3(const CloudMask& mask) {
  const int w = mask.width, h = mask.height;
  auto pass = [&](const CloudMask& in, bool dilate) {
    CloudMask out{w, h, std::vector<std::uint8_t>(in.cloud.size(), 0)};
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        bool v = !dilate;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = x + dx, yy = y + dy;
            // Outside pixels count as clear for dilation and cloud for erosion.
            const bool s = (xx < 0 || yy < 0 || xx >= w || yy >= h) ? !dilate : in.at(xx, yy);
            v = dilate ? (v || s) : (v && s);
          }
        out.cloud[static_cast<std::size_t>(y) * w + x] = v;
      }
    return out;
  };
  return pass(pass(mask, true), false);
}

CloudMask binary_mask(const SuperPixelMap& map, std::span<const RegionPrediction> preds) {
  return close3x3(region_mask(map, preds));
}

void save_mask(const CloudMask& mask, const std::string& path) {
  std::vector<std::uint8_t> px(mask.cloud.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask.cloud[i] ? 255 : 0;
  image_io::write_gray8(path, mask.width, mask.height, px);
}

CloudMask load_mask(const std::string& path) {
  const auto png = image_io::read_png(path);
  if (png.channels != 1) throw Error(Errc::corrupt_metadata, "mask must be single-channel: " + path);
  CloudMask m{png.width, png.height, std::vector<std::uint8_t>(png.samples.size())};
  for (std::size_t i = 0; i < m.cloud.size(); ++i) m.cloud[i] = png.samples[i] > 127;
  return m;
}

std::string predictions_to_jsonl(std::span<const RegionPrediction> preds) {
  std::string out;
  for (const auto& p : preds) {
    json j;
    j["region_id"] = p.region_id;
    j["class"] = class_name(p.label);
    j["probs_cnn"] = p.probs_cnn;
    j["probs_forest"] = p.probs_forest;
    j["relabeled"] = p.relabeled;
    j["nir_demoted"] = p.nir_demoted;
    j["feature"] = p.feature;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<RegionPrediction> predictions_from_jsonl(const std::string& text) {
  std::vector<RegionPrediction> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      RegionPrediction p;
      p.region_id = j.at("region_id").get<std::uint32_t>();
      const auto label = class_from_name(j.at("class").get<std::string>());
      if (!label) throw Error(Errc::corrupt_metadata, "prediction line " + std::to_string(lineno) + ": unknown class");
      p.label = *label;
      p.probs_cnn = j.at("probs_cnn").get<std::array<double, kNumClasses>>();
      p.probs_forest = j.at("probs_forest").get<std::array<double, kNumClasses>>();
      p.relabeled = j.value("relabeled", false);
      p.nir_demoted = j.value("nir_demoted", false);
      p.feature = j.value("feature", std::vector<double>{});
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw Error(Errc::corrupt_metadata, "prediction line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_predictions(std::span<const RegionPrediction> preds, const std::string& path) {
  binio::write_text(path, predictions_to_jsonl(preds));
}

std::vector<RegionPrediction> load_predictions(const std::string& path) {
  return predictions_from_jsonl(binio::read_text(path));
}

}  // namespace hfcloud
