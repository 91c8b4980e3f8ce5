#include "hfcloud/label_server.hpp"

#include <httplib.h>

#include <cstdio>
#include <filesystem>
#include <nlohmann/json.hpp>

#include "hfcloud/binio.hpp"
#include "hfcloud/error.hpp"
#include "hfcloud/patchset.hpp"

namespace hfcloud {

namespace fs = std::filesystem;
using nlohmann::json;

LabelStore::LabelStore(std::string tiles_root, std::string spxm_dir, std::string labels_dir)
    : tiles_root_(std::move(tiles_root)), spxm_dir_(std::move(spxm_dir)), labels_dir_(std::move(labels_dir)) {}

std::string LabelStore::etag_of(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string LabelStore::tile_dir(const std::string& id) const {
  if (id.empty() || id.find('/') != std::string::npos || id.find("..") != std::string::npos)
    throw Error(Errc::not_found, "invalid tile id");
  const auto dir = fs::path(tiles_root_) / id;
  if (!fs::exists(dir / "meta.json") || !fs::exists(fs::path(spxm_dir_) / (id + ".spxm")))
    throw Error(Errc::not_found, "unknown tile " + id);
  return dir.string();
}

std::string LabelStore::labels_path(const std::string& id) const {
  return (fs::path(labels_dir_) / (id + ".labels.json")).string();
}

SuperPixelMap LabelStore::load_map(const std::string& id) const {
  tile_dir(id);
  return load_spxm((fs::path(spxm_dir_) / (id + ".spxm")).string());
}

std::vector<LabelStore::TileInfo> LabelStore::tiles() const {
  std::vector<TileInfo> out;
  if (!fs::is_directory(tiles_root_)) return out;
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(tiles_root_))
    if (e.is_directory() && fs::exists(e.path() / "meta.json") &&
        fs::exists(fs::path(spxm_dir_) / (e.path().filename().string() + ".spxm")))
      ids.push_back(e.path().filename().string());
  std::sort(ids.begin(), ids.end());
  for (const auto& id : ids) {
    TileInfo info;
    info.tile_id = id;
    info.n_regions = load_map(id).n_regions;
    if (fs::exists(labels_path(id))) info.labeled_count = load_label_file(labels_path(id)).labels.size();
    out.push_back(info);
  }
  return out;
}

std::string LabelStore::image_png(const std::string& id) const {
  return binio::read_text((fs::path(tile_dir(id)) / "rgb.png").string());
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> run_length_encode(const SuperPixelMap& map) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> runs;
  for (auto v : map.label) {
    if (!runs.empty() && runs.back().first == v)
      ++runs.back().second;
    else
      runs.emplace_back(v, 1);
  }
  return runs;
}

std::string LabelStore::superpixels_json(const std::string& id) const {
  const auto map = load_map(id);
  json rle = json::array();
  for (const auto& [v, n] : run_length_encode(map)) rle.push_back({v, n});
  const json doc = {{"tile_id", id},        {"width", map.width}, {"height", map.height},
                    {"n_regions", map.n_regions}, {"rle", rle},   {"adjacency", adjacency(map)}};
  return doc.dump();
}

LabelStore::Labels LabelStore::get_labels(const std::string& id) const {
  std::lock_guard lock(mutex_);
  tile_dir(id);
  const auto path = labels_path(id);
  if (!fs::exists(path)) return {label_file_to_json(LabelFile{id, {}}), etag_of("")};
  const auto body = binio::read_text(path);
  return {body, etag_of(body)};
}

LabelStore::PutResult LabelStore::put_labels(const std::string& id, const std::string& body,
                                             const std::string& expected_etag) {
  LabelFile lf = label_file_from_json(body);
  if (lf.tile_id != id) throw Error(Errc::invalid_argument, "label file tile_id does not match the URL");
  const auto n_regions = load_map(id).n_regions;
  for (const auto& [rid, _] : lf.labels)
    if (rid >= n_regions) throw Error(Errc::invalid_argument, "region " + std::to_string(rid) + " out of range");

  std::lock_guard lock(mutex_);
  const auto path = labels_path(id);
  const std::string current = fs::exists(path) ? etag_of(binio::read_text(path)) : etag_of("");
  if (!expected_etag.empty() && expected_etag != current) return {true, current};
  const std::string text = label_file_to_json(lf);
  const std::string tmp = path + ".tmp";
  binio::write_text(tmp, text);
  fs::rename(tmp, path);
  return {false, etag_of(text)};
}

struct LabelServer::Impl {
  LabelStore& store;
  httplib::Server server;
};

namespace {

void send_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", message}}.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      const int status = e.code() == Errc::not_found ? 404
                         : (e.code() == Errc::corrupt_metadata || e.code() == Errc::invalid_argument ||
                            e.code() == Errc::duplicate)
                             ? 400
                             : 500;
      send_error(res, status, e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  };
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

}  // namespace

LabelServer::LabelServer(LabelStore& store) : impl_(new Impl{store, {}}) {
  auto& srv = impl_->server;
  LabelStore& st = store;
  srv.Get("/api/tiles", guarded([&st](const httplib::Request&, httplib::Response& res) {
            json out = json::array();
            for (const auto& t : st.tiles())
              out.push_back({{"tile_id", t.tile_id}, {"labeled_count", t.labeled_count}, {"n_regions", t.n_regions}});
            res.set_content(out.dump(), "application/json");
          }));
  srv.Get(R"(/api/tiles/([^/]+)/image\.png)", guarded([&st](const httplib::Request& req, httplib::Response& res) {
            res.set_content(st.image_png(req.matches[1]), "image/png");
          }));
  srv.Get(R"(/api/tiles/([^/]+)/superpixels\.json)", guarded([&st](const httplib::Request& req, httplib::Response& res) {
            res.set_content(st.superpixels_json(req.matches[1]), "application/json");
          }));
  srv.Get(R"(/api/tiles/([^/]+)/labels)", guarded([&st](const httplib::Request& req, httplib::Response& res) {
            const auto labels = st.get_labels(req.matches[1]);
            res.set_header("ETag", "\"" + labels.etag + "\"");
            res.set_content(labels.body, "application/json");
          }));
  srv.Put(R"(/api/tiles/([^/]+)/labels)", guarded([&st](const httplib::Request& req, httplib::Response& res) {
            // Expected version from If-Match, else from an "etag" field in the body.
            std::string expected = unquote(req.get_header_value("If-Match"));
            std::string body = req.body;
            label_file_from_json(body);
            json doc;
            try {
              doc = json::parse(body);
            } catch (const json::exception& e) {
              throw Error(Errc::corrupt_metadata, std::string("label JSON: ") + e.what());
            }
            if (doc.is_object() && doc.contains("etag")) {
              if (expected.empty() && doc["etag"].is_string()) expected = doc["etag"].get<std::string>();
              doc.erase("etag");
              body = doc.dump();
            }
            const auto result = st.put_labels(req.matches[1], body, expected);
            res.set_header("ETag", "\"" + result.etag + "\"");
            if (result.conflict) {
              res.status = 409;
              res.set_content(json{{"error", "label file changed on the server"}, {"etag", result.etag}}.dump(),
                              "application/json");
              return;
            }
            res.set_content(json{{"etag", result.etag}}.dump(), "application/json");
          }));
}

LabelServer::~LabelServer() { stop(); }

int LabelServer::start(const std::string& host, int port) {
  auto& srv = impl_->server;
  const int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(Errc::io, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([&srv] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  return bound;
}

void LabelServer::run(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw Error(Errc::io, "cannot listen on " + host + ":" + std::to_string(port));
}

void LabelServer::stop() {
  if (impl_) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace hfcloud
