#include "hfcloud/metrics.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <nlohmann/json.hpp>

#include "hfcloud/error.hpp"

namespace hfcloud {

using nlohmann::json;

double fmeasure(double precision, double recall) {
  const double s = precision + recall;
  return s > 0 ? 2 * precision * recall / s : 0.0;
}

EvalReport report_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  EvalReport r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.tn = tn;
  const bool nothing = tp + fp == 0 && tp + fn == 0;
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : (nothing ? 1.0 : 0.0);
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : (nothing ? 1.0 : 0.0);
  r.fmeasure = fmeasure(r.precision, r.recall);
  return r;
}

EvalReport superpixel_prf(std::span<const std::uint8_t> pred_cloud, std::span<const std::uint8_t> gt_cloud) {
  if (pred_cloud.size() != gt_cloud.size()) throw Error(Errc::dimension_mismatch, "prediction and ground truth cover different regions");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < pred_cloud.size(); ++i) {
    const bool p = pred_cloud[i] != 0, g = gt_cloud[i] != 0;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
    tn += !p && !g;
  }
  return report_from_counts(tp, fp, fn, tn);
}

std::vector<std::uint8_t> cloud_flags(std::span<const ClassLabel> labels, bool cirrus_is_cloud) {
  std::vector<std::uint8_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    out[i] = labels[i] == ClassLabel::thick_cloud || (cirrus_is_cloud && labels[i] == ClassLabel::cirrus_cloud);
  return out;
}

std::vector<std::uint8_t> pixel_mask_to_regions(const CloudMask& mask, const SuperPixelMap& map) {
  if (mask.width != map.width || mask.height != map.height) throw Error(Errc::dimension_mismatch, "mask and map sizes differ");
  std::vector<std::size_t> area(map.n_regions, 0), cloud(map.n_regions, 0);
  for (std::size_t i = 0; i < map.label.size(); ++i) {
    ++area[map.label[i]];
    cloud[map.label[i]] += mask.cloud[i] != 0;
  }
  std::vector<std::uint8_t> out(map.n_regions);
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = 2 * cloud[r] > area[r];
  return out;
}

std::vector<std::uint8_t> nir_baseline(const MultiBandImage& img, const SuperPixelMap& map, double threshold) {
  const auto stats = region_stats(map, img);
  std::vector<std::uint8_t> out(stats.size());
  for (std::size_t r = 0; r < stats.size(); ++r) out[r] = stats[r].mean_nir > threshold;
  return out;
}

std::vector<ClassLabel> majority_labels(std::span<const std::uint8_t> class_raster, const SuperPixelMap& map) {
  if (class_raster.size() != map.pixel_count()) throw Error(Errc::dimension_mismatch, "class raster and map sizes differ");
  std::vector<std::array<std::size_t, kNumClasses>> counts(map.n_regions, std::array<std::size_t, kNumClasses>{});
  for (std::size_t i = 0; i < class_raster.size(); ++i) {
    if (class_raster[i] >= kNumClasses) throw Error(Errc::corrupt_metadata, "class raster value out of range");
    ++counts[map.label[i]][class_raster[i]];
  }
  std::vector<ClassLabel> out(map.n_regions);
  for (std::size_t r = 0; r < out.size(); ++r)
    out[r] = static_cast<ClassLabel>(std::max_element(counts[r].begin(), counts[r].end()) - counts[r].begin());
  return out;
}

EvalReport micro_average(std::span<const EvalReport> reports) {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& r : reports) {
    tp += r.tp;
    fp += r.fp;
    fn += r.fn;
    tn += r.tn;
  }
  return report_from_counts(tp, fp, fn, tn);
}

namespace {

json to_json(const EvalReport& r) {
  return {{"precision", r.precision}, {"recall", r.recall}, {"fmeasure", r.fmeasure},
          {"tp", r.tp},               {"fp", r.fp},         {"fn", r.fn},
          {"tn", r.tn}};
}

std::map<std::string, std::vector<EvalReport>> by_method(std::span<const TileEval> tiles) {
  std::map<std::string, std::vector<EvalReport>> out;
  for (const auto& t : tiles) out[t.method].push_back(t.report);
  return out;
}

}  // namespace

std::string report_json(std::span<const TileEval> tiles) {
  json per_tile = json::array();
  for (const auto& t : tiles) {
    json j = to_json(t.report);
    j["tile_id"] = t.tile_id;
    j["method"] = t.method;
    per_tile.push_back(j);
  }
  json micro = json::object();
  for (const auto& [method, reports] : by_method(tiles)) micro[method] = to_json(micro_average(reports));
  return json{{"per_tile", per_tile}, {"micro_average", micro}}.dump(2) + "\n";
}

std::string report_csv(std::span<const TileEval> tiles) {
  std::string out = "tile_id,method,precision,recall,fmeasure,tp,fp,fn\n";
  char buf[256];
  auto row = [&](const std::string& tile, const std::string& method, const EvalReport& r) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.2f,%.2f,%.2f,%zu,%zu,%zu\n", tile.c_str(), method.c_str(), r.precision,
                  r.recall, r.fmeasure, r.tp, r.fp, r.fn);
    out += buf;
  };
  for (const auto& t : tiles) row(t.tile_id, t.method, t.report);
  for (const auto& [method, reports] : by_method(tiles)) row("micro_average", method, micro_average(reports));
  return out;
}

}  // namespace hfcloud
