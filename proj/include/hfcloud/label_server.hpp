#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "hfcloud/superpixel.hpp"

namespace hfcloud {

/// File-backed store behind the label server. A tile `id` is a directory
/// `<tiles_root>/<id>` holding an image container, with its segmentation at
/// `<spxm_dir>/<id>.spxm`; labels live at `<labels_dir>/<id>.labels.json`.
class LabelStore {
 public:
  LabelStore(std::string tiles_root, std::string spxm_dir, std::string labels_dir);

  struct TileInfo {
    std::string tile_id;
    std::size_t labeled_count = 0;
    std::uint32_t n_regions = 0;
  };

  std::vector<TileInfo> tiles() const;
  std::string image_png(const std::string& id) const;
  std::string superpixels_json(const std::string& id) const;

  struct Labels {
    std::string body;  // label-file JSON
    std::string etag;
  };
  Labels get_labels(const std::string& id) const;

  struct PutResult {
    bool conflict = false;
    std::string etag;  // new etag, or the current one on conflict
  };
  /// Validates and atomically replaces the label file when `expected_etag`
  /// matches the stored version (or is empty).
  PutResult put_labels(const std::string& id, const std::string& body, const std::string& expected_etag);

  static std::string etag_of(const std::string& bytes);

 private:
  std::string tile_dir(const std::string& id) const;
  std::string labels_path(const std::string& id) const;
  SuperPixelMap load_map(const std::string& id) const;

  std::string tiles_root_, spxm_dir_, labels_dir_;
  mutable std::mutex mutex_;
};

/// Run-length encoding of the row-major label raster: [[value, run], ...].
std::vector<std::pair<std::uint32_t, std::uint32_t>> run_length_encode(const SuperPixelMap& map);

class LabelServer {
 public:
  explicit LabelServer(LabelStore& store);
  ~LabelServer();

  /// Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host, int port);
  /// Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
};

}  // namespace hfcloud
