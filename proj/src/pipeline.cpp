#include "hfcloud/pipeline.hpp"

#include <filesystem>
#include <nlohmann/json.hpp>
#include <set>

#include "hfcloud/binio.hpp"
#include "hfcloud/error.hpp"

namespace hfcloud {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Reads the keys of one config section, rejecting unknown ones.
class Section {
 public:
  Section(const json& doc, const char* name) : name_(name) {
    if (doc.contains(name)) {
      node_ = &doc.at(name);
      if (!node_->is_object()) throw Error(Errc::config, std::string("config section '") + name + "' must be an object");
    }
  }

  template <typename T>
  Section& get(const char* key, T& value) {
    seen_.insert(key);
    if (node_ && node_->contains(key)) {
      try {
        value = node_->at(key).get<T>();
      } catch (const json::exception& e) {
        throw Error(Errc::config, name_ + "." + key + ": " + e.what());
      }
    }
    return *this;
  }

  Section& range(const char* key, NirRange& value) {
    std::array<double, 2> pair{value.lo, value.hi};
    get(key, pair);
    value = {pair[0], pair[1]};
    return *this;
  }

  void finish() const {
    if (!node_) return;
    for (const auto& [key, _] : node_->items())
      if (!seen_.count(key)) throw Error(Errc::config, "unknown config key '" + name_ + "." + key + "'");
  }

 private:
  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> seen_;
};

const char* aggregation_name(NeighborAggregation a) { return a == NeighborAggregation::min ? "min" : "mean"; }
const char* group_name(OtherGroup g) { return g == OtherGroup::non_cloud ? "non_cloud" : "other_culture"; }

}  // namespace

void PipelineConfig::validate() const {
  synth.validate();
  if (segment.n_superpixels < 1 || segment.iterations < 1 || segment.compactness < 0 || segment.edge_weight < 0)
    throw Error(Errc::config, "segmentation parameters out of range");
  if (!(valid_fraction > 0 && valid_fraction < 1)) throw Error(Errc::config, "valid_fraction must be in (0,1)");
  hfcnn.validate();
  gcforest.validate();
  if (refine.hops < 1) throw Error(Errc::config, "hop order must be >= 1");
  if (threads < 0) throw Error(Errc::config, "threads must be >= 0");
}

std::string config_to_json(const PipelineConfig& c) {
  const auto& s = c.synth;
  auto range = [](const NirRange& r) { return json::array({r.lo, r.hi}); };
  json doc;
  doc["synth"] = {{"seed", s.seed},
                  {"tile_size", s.tile_size},
                  {"n_thick_blobs", s.n_thick_blobs},
                  {"n_cirrus_halos", s.n_cirrus_halos},
                  {"n_buildings", s.n_buildings},
                  {"blob_sigma_min", s.blob_sigma_min},
                  {"blob_sigma_max", s.blob_sigma_max},
                  {"thick_level", s.thick_level},
                  {"halo_level", s.halo_level},
                  {"building_min", s.building_min},
                  {"building_max", s.building_max},
                  {"nir_thick", range(s.nir_thick)},
                  {"nir_cirrus", range(s.nir_cirrus)},
                  {"nir_building", range(s.nir_building)},
                  {"nir_terrain", range(s.nir_terrain)},
                  {"terrain_texture", s.terrain_texture},
                  {"building_texture", s.building_texture},
                  {"pixel_noise", s.pixel_noise}};
  doc["segment"] = {{"n_superpixels", c.segment.n_superpixels},
                    {"compactness", c.segment.compactness},
                    {"iterations", c.segment.iterations},
                    {"edge_weight", c.segment.edge_weight},
                    {"min_area", c.min_area}};
  doc["split"] = {{"valid_fraction", c.valid_fraction}, {"seed", c.split_seed}};
  doc["hfcnn"] = {{"lr", c.hfcnn.lr},
                  {"momentum", c.hfcnn.momentum},
                  {"max_iterations", c.hfcnn.max_iterations},
                  {"batch_size", c.hfcnn.batch_size},
                  {"seed", c.hfcnn.seed}};
  const auto& g = c.gcforest;
  doc["gcforest"] = {{"windows", g.scan.windows},
                     {"stride", g.scan.stride},
                     {"scan_trees", g.scan.n_trees},
                     {"max_instances_per_class", g.scan.max_instances_per_class},
                     {"cascade_trees", g.cascade.n_trees},
                     {"max_levels", g.cascade.max_levels},
                     {"patience", g.cascade.patience},
                     {"folds", g.folds},
                     {"seed", g.seed}};
  doc["refine"] = {{"nir_threshold", c.refine.nir_threshold},
                   {"hops", c.refine.hops},
                   {"aggregation", aggregation_name(c.refine.aggregation)},
                   {"other_group", group_name(c.refine.other_group)}};
  doc["evaluate"] = {{"cirrus_is_cloud", c.cirrus_is_cloud}};
  doc["threads"] = c.threads;
  return doc.dump(2) + "\n";
}

PipelineConfig config_from_json(const std::string& text, PipelineConfig c) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::config, std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(Errc::config, "config must be a JSON object");
  static const std::set<std::string> sections = {"synth", "segment", "split", "hfcnn", "gcforest", "refine", "evaluate", "threads"};
  for (const auto& [key, _] : doc.items())
    if (!sections.count(key)) throw Error(Errc::config, "unknown config section '" + key + "'");

  auto& s = c.synth;
  Section(doc, "synth")
      .get("seed", s.seed)
      .get("tile_size", s.tile_size)
      .get("n_thick_blobs", s.n_thick_blobs)
      .get("n_cirrus_halos", s.n_cirrus_halos)
      .get("n_buildings", s.n_buildings)
      .get("blob_sigma_min", s.blob_sigma_min)
      .get("blob_sigma_max", s.blob_sigma_max)
      .get("thick_level", s.thick_level)
      .get("halo_level", s.halo_level)
      .get("building_min", s.building_min)
      .get("building_max", s.building_max)
      .range("nir_thick", s.nir_thick)
      .range("nir_cirrus", s.nir_cirrus)
      .range("nir_building", s.nir_building)
      .range("nir_terrain", s.nir_terrain)
      .get("terrain_texture", s.terrain_texture)
      .get("building_texture", s.building_texture)
      .get("pixel_noise", s.pixel_noise)
      .finish();
  Section(doc, "segment")
      .get("n_superpixels", c.segment.n_superpixels)
      .get("compactness", c.segment.compactness)
      .get("iterations", c.segment.iterations)
      .get("edge_weight", c.segment.edge_weight)
      .get("min_area", c.min_area)
      .finish();
  Section(doc, "split").get("valid_fraction", c.valid_fraction).get("seed", c.split_seed).finish();
  Section(doc, "hfcnn")
      .get("lr", c.hfcnn.lr)
      .get("momentum", c.hfcnn.momentum)
      .get("max_iterations", c.hfcnn.max_iterations)
      .get("batch_size", c.hfcnn.batch_size)
      .get("seed", c.hfcnn.seed)
      .finish();
  auto& g = c.gcforest;
  Section(doc, "gcforest")
      .get("windows", g.scan.windows)
      .get("stride", g.scan.stride)
      .get("scan_trees", g.scan.n_trees)
      .get("max_instances_per_class", g.scan.max_instances_per_class)
      .get("cascade_trees", g.cascade.n_trees)
      .get("max_levels", g.cascade.max_levels)
      .get("patience", g.cascade.patience)
      .get("folds", g.folds)
      .get("seed", g.seed)
      .finish();
  std::string aggregation = aggregation_name(c.refine.aggregation), group = group_name(c.refine.other_group);
  Section(doc, "refine")
      .get("nir_threshold", c.refine.nir_threshold)
      .get("hops", c.refine.hops)
      .get("aggregation", aggregation)
      .get("other_group", group)
      .finish();
  if (aggregation != "min" && aggregation != "mean") throw Error(Errc::config, "refine.aggregation must be min or mean");
  if (group != "non_cloud" && group != "other_culture") throw Error(Errc::config, "refine.other_group must be non_cloud or other_culture");
  c.refine.aggregation = aggregation == "min" ? NeighborAggregation::min : NeighborAggregation::mean;
  c.refine.other_group = group == "non_cloud" ? OtherGroup::non_cloud : OtherGroup::other_culture;
  Section(doc, "evaluate").get("cirrus_is_cloud", c.cirrus_is_cloud).finish();
  if (doc.contains("threads")) {
    if (!doc["threads"].is_number_integer()) throw Error(Errc::config, "threads must be an integer");
    c.threads = doc["threads"].get<int>();
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::string& path, PipelineConfig base) {
  if (!fs::exists(path)) throw Error(Errc::missing_file, "config file not found: " + path);
  return config_from_json(binio::read_text(path), std::move(base));
}

void save_config(const PipelineConfig& config, const std::string& dir) {
  binio::write_text((fs::path(dir) / "config.json").string(), config_to_json(config));
}

std::string tile_id_of(const std::string& tile_dir) {
  fs::path p(tile_dir);
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

SuperPixelMap segment_tile(const MultiBandImage& img, const PipelineConfig& config, const EdgeMap* edges) {
  const EdgeMap computed = edges ? edge_probability(img, EdgeDetector::external, *edges) : edge_probability(img);
  return enforce_connectivity(segment(img, computed, config.segment), config.min_area);
}

LabelFile label_from_gt(const std::string& tile_id, const SuperPixelMap& map, std::span<const std::uint8_t> gt) {
  const auto labels = majority_labels(gt, map);
  LabelFile lf;
  lf.tile_id = tile_id;
  for (std::uint32_t r = 0; r < labels.size(); ++r) lf.labels[r] = labels[r];
  return lf;
}

std::vector<Patch> region_patches(const MultiBandImage& img, const SuperPixelMap& map,
                                  const std::vector<RegionStats>& stats, const std::string& tile_id) {
  if (stats.size() != map.n_regions) throw Error(Errc::shape_mismatch, "region statistics do not match map");
  std::vector<Patch> patches(stats.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(stats.size()); ++r) {
    patches[r] = extract_patch(img, stats[r]);
    patches[r].tile_id = tile_id;
  }
  return patches;
}

std::vector<RegionPrediction> predict_tile(const MultiBandImage& img, const SuperPixelMap& map,
                                           const HfcnnModel& cnn, const CascadeModel& forest) {
  const auto stats = region_stats(map, img);
  const auto patches = region_patches(img, map, stats);
  const Tensor<float> images = stack_patches(patches);
  const auto cnn_out = predict_chunked(cnn, images);
  const auto forest_out = predict(forest, images);
  std::vector<RegionPrediction> preds(patches.size());
  for (std::size_t r = 0; r < patches.size(); ++r) {
    std::array<double, kNumClasses> pc{};
    for (int c = 0; c < kNumClasses; ++c) pc[c] = cnn_out.probs.at(static_cast<int>(r), c, 0, 0);
    const std::span<const float> feat(cnn_out.features.sample(static_cast<int>(r)), HfcnnModel::kFeatureDim);
    preds[r] = make_prediction(static_cast<std::uint32_t>(r), pc, forest_out[r].probs, feat, forest_out[r].class_vectors);
  }
  return preds;
}

std::vector<RegionPrediction> refine_tile(std::vector<RegionPrediction> preds, const MultiBandImage& img,
                                          const SuperPixelMap& map, const RefineConfig& config) {
  return refine(std::move(preds), region_stats(map, img), adjacency(map), config);
}

std::vector<ClassLabel> labels_of(std::span<const RegionPrediction> preds) {
  std::vector<ClassLabel> out;
  out.reserve(preds.size());
  for (const auto& p : preds) out.push_back(p.label);
  return out;
}

}  // namespace hfcloud
