#include "hfcloud/patchset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hfcloud/binio.hpp"
#include "hfcloud/error.hpp"
#include "hfcloud/image_io.hpp"
#include "hfcloud/rng.hpp"

namespace hfcloud {

namespace fs = std::filesystem;
using nlohmann::json;

const char* class_name(ClassLabel c) {
  switch (c) {
    case ClassLabel::thick_cloud: return "thick_cloud";
    case ClassLabel::cirrus_cloud: return "cirrus_cloud";
    case ClassLabel::building: return "building";
    case ClassLabel::other_culture: return "other_culture";
  }
  return "?";
}

std::optional<ClassLabel> class_from_int(long v) {
  if (v < 0 || v >= kNumClasses) return std::nullopt;
  return static_cast<ClassLabel>(v);
}

std::optional<ClassLabel> class_from_name(std::string_view name) {
  for (auto c : kAllClasses)
    if (name == class_name(c)) return c;
  return std::nullopt;
}

std::string label_file_to_json(const LabelFile& lf) {
  json labels = json::object();
  for (const auto& [rid, cls] : lf.labels) labels[std::to_string(rid)] = to_int(cls);
  json doc = {{"tile_id", lf.tile_id}, {"labels", labels}};
  return doc.dump() + "\n";
}

LabelFile label_file_from_json(const std::string& text) {
  // Duplicate keys are legal JSON but ambiguous labels; catch them while parsing.
  std::set<std::string> seen;
  std::string duplicate;
  json::parser_callback_t cb = [&](int depth, json::parse_event_t event, json& parsed) {
    if (event == json::parse_event_t::key && depth == 2) {
      const auto key = parsed.get<std::string>();
      if (!seen.insert(key).second && duplicate.empty()) duplicate = key;
    }
    return true;
  };
  json doc;
  try {
    doc = json::parse(text, cb);
  } catch (const json::exception& e) {
    throw Error(Errc::corrupt_metadata, std::string("label file: ") + e.what());
  }
  LabelFile lf;
  try {
    lf.tile_id = doc.at("tile_id").get<std::string>();
    if (!duplicate.empty())
      throw Error(Errc::duplicate, "label for (" + lf.tile_id + ", " + duplicate + ") given twice");
    for (const auto& [key, value] : doc.at("labels").items()) {
      std::size_t used = 0;
      const unsigned long rid = std::stoul(key, &used);
      if (used != key.size()) throw Error(Errc::corrupt_metadata, "region id '" + key + "'");
      auto cls = class_from_int(value.get<long>());
      if (!cls) throw Error(Errc::corrupt_metadata, "class id out of range for region " + key);
      lf.labels[static_cast<std::uint32_t>(rid)] = *cls;
    }
  } catch (const json::exception& e) {
    throw Error(Errc::corrupt_metadata, std::string("label file: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw Error(Errc::corrupt_metadata, "label file: non-numeric region id");
  }
  return lf;
}

LabelFile load_label_file(const std::string& path) { return label_file_from_json(binio::read_text(path)); }

void save_label_file(const LabelFile& lf, const std::string& path) {
  binio::write_text(path, label_file_to_json(lf));
}

std::array<std::size_t, kNumClasses> Manifest::class_counts() const {
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& e : entries) ++counts[to_int(e.label)];
  return counts;
}

std::string Manifest::resolve(const ManifestEntry& e) const {
  const fs::path p(e.path);
  if (p.is_absolute() || base_dir.empty()) return p.string();
  return (fs::path(base_dir) / p).string();
}

Manifest load_manifest(const std::string& path) {
  Manifest m;
  m.base_dir = fs::path(path).parent_path().string();
  std::istringstream in(binio::read_text(path));
  std::string line;
  std::set<std::pair<std::string, std::uint32_t>> keys;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      ManifestEntry e;
      e.tile_id = j.at("tile_id").get<std::string>();
      e.region_id = j.at("region_id").get<std::uint32_t>();
      auto cls = class_from_int(j.at("label").get<long>());
      if (!cls) throw Error(Errc::corrupt_metadata, "manifest line " + std::to_string(lineno) + ": bad label");
      e.label = *cls;
      e.path = j.at("path").get<std::string>();
      e.mean_nir = j.value("mean_nir", 0.0);
      if (!keys.emplace(e.tile_id, e.region_id).second)
        throw Error(Errc::duplicate, "manifest repeats (" + e.tile_id + ", " + std::to_string(e.region_id) + ")");
      m.entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw Error(Errc::corrupt_metadata, "manifest line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
  std::string out;
  for (const auto& e : m.entries) {
    json j = {{"tile_id", e.tile_id},
              {"region_id", e.region_id},
              {"label", to_int(e.label)},
              {"path", e.path},
              {"mean_nir", e.mean_nir}};
    out += j.dump();
    out += '\n';
  }
  binio::write_text(path, out);
}

void save_patch_png(const Patch& p, const std::string& path) {
  std::vector<std::uint8_t> rgb(kPatchSize * kPatchSize * 3);
  for (int y = 0; y < kPatchSize; ++y)
    for (int x = 0; x < kPatchSize; ++x)
      for (int c = 0; c < 3; ++c)
        rgb[(y * kPatchSize + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(std::clamp(p.at(c, y, x), 0.0f, 1.0f) * 255.0f));
  image_io::write_rgb8(path, kPatchSize, kPatchSize, rgb);
}

Patch load_patch_png(const std::string& path) {
  const auto png = image_io::read_png(path);
  if (png.width != kPatchSize || png.height != kPatchSize || png.channels != 3 || png.bit_depth != 8)
    throw Error(Errc::dimension_mismatch, "patch file must be 32x32 8-bit RGB: " + path);
  Patch p;
  for (int y = 0; y < kPatchSize; ++y)
    for (int x = 0; x < kPatchSize; ++x)
      for (int c = 0; c < 3; ++c) p.at(c, y, x) = png.samples[(y * kPatchSize + x) * 3 + c] / 255.0f;
  return p;
}

Manifest build_dataset(std::span<const DatasetTile> tiles, std::span<const LabelFile> labels,
                       const std::string& out_dir) {
  Manifest m;
  m.base_dir = out_dir;
  std::set<std::pair<std::string, std::uint32_t>> done;
  for (const auto& lf : labels) {
    const auto tile = std::find_if(tiles.begin(), tiles.end(), [&](const DatasetTile& t) { return t.tile_id == lf.tile_id; });
    if (tile == tiles.end()) throw Error(Errc::not_found, "no tile named " + lf.tile_id);
    const auto stats = region_stats(*tile->map, *tile->image);
    for (const auto& [rid, cls] : lf.labels) {
      if (rid >= stats.size())
        throw Error(Errc::not_found, "label for nonexistent region (" + lf.tile_id + ", " + std::to_string(rid) + ")");
      if (!done.emplace(lf.tile_id, rid).second)
        throw Error(Errc::duplicate, "duplicate label for (" + lf.tile_id + ", " + std::to_string(rid) + ")");
      Patch p = extract_patch(*tile->image, stats[rid]);
      p.tile_id = lf.tile_id;
      ManifestEntry e;
      e.tile_id = lf.tile_id;
      e.region_id = rid;
      e.label = cls;
      e.mean_nir = stats[rid].mean_nir;
      e.path = "patches/" + lf.tile_id + "_" + std::to_string(rid) + ".png";
      save_patch_png(p, m.resolve(e));
      m.entries.push_back(std::move(e));
    }
  }
  save_manifest(m, (fs::path(out_dir) / "manifest.jsonl").string());
  return m;
}

std::pair<Manifest, Manifest> split(const Manifest& manifest, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw Error(Errc::invalid_argument, "test_fraction must lie in (0,1)");
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    by_class[to_int(manifest.entries[i].label)].push_back(i);

  std::vector<char> is_test(manifest.entries.size(), 0);
  for (int c = 0; c < kNumClasses; ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    if (idx.size() < 2)
      throw Error(Errc::invalid_argument,
                  std::string("class ") + class_name(static_cast<ClassLabel>(c)) + " has fewer than 2 entries");
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    shuffle(idx, rng);
    const auto n = static_cast<std::ptrdiff_t>(idx.size());
    const auto n_test = std::clamp<std::ptrdiff_t>(std::lround(static_cast<double>(n) * test_fraction), 1, n - 1);
    for (std::ptrdiff_t k = 0; k < n_test; ++k) is_test[idx[k]] = 1;
  }
  Manifest train, test;
  train.base_dir = test.base_dir = manifest.base_dir;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    (is_test[i] ? test : train).entries.push_back(manifest.entries[i]);
  return {std::move(train), std::move(test)};
}

Tensor<float> stack_patches(std::span<const Patch> patches) {
  Tensor<float> t(static_cast<int>(patches.size()), kPatchChannels, kPatchSize, kPatchSize);
  for (std::size_t b = 0; b < patches.size(); ++b)
    std::copy(patches[b].pixels.begin(), patches[b].pixels.end(), t.sample(static_cast<int>(b)));
  return t;
}

TensorBatch load_batch(const Manifest& manifest, std::span<const std::size_t> indices) {
  TensorBatch batch;
  batch.images = Tensor<float>(static_cast<int>(indices.size()), kPatchChannels, kPatchSize, kPatchSize);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= manifest.entries.size())
      throw Error(Errc::invalid_argument, "batch index " + std::to_string(indices[k]) + " out of range");
    const auto& e = manifest.entries[indices[k]];
    const Patch p = load_patch_png(manifest.resolve(e));
    std::copy(p.pixels.begin(), p.pixels.end(), batch.images.sample(static_cast<int>(k)));
    batch.labels.push_back(to_int(e.label));
    batch.mean_nir.push_back(e.mean_nir);
  }
  return batch;
}

}  // namespace hfcloud
