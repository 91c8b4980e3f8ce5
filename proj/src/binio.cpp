#include "hfcloud/binio.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>

namespace hfcloud {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::missing_file: return "missing file";
    case Errc::dimension_mismatch: return "dimension mismatch";
    case Errc::corrupt_metadata: return "corrupt metadata";
    case Errc::invalid_argument: return "invalid argument";
    case Errc::shape_mismatch: return "shape mismatch";
    case Errc::bad_magic: return "bad magic";
    case Errc::unsupported_version: return "unsupported version";
    case Errc::truncated: return "truncated";
    case Errc::divergence: return "divergence";
    case Errc::not_found: return "not found";
    case Errc::duplicate: return "duplicate";
    case Errc::config: return "configuration error";
    case Errc::untrained: return "untrained model";
    case Errc::io: return "i/o error";
  }
  return "unknown";
}

namespace binio {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::missing_file, path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> data) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

void write_text(const std::string& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string read_text(const std::string& path) {
  auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

}  // namespace binio
}  // namespace hfcloud
