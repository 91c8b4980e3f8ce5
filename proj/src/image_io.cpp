#include "hfcloud/image_io.hpp"

#include <filesystem>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "hfcloud/error.hpp"

namespace hfcloud::image_io {
namespace {

void ensure_parent(const std::string& path) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

void write_mat(const std::string& path, const cv::Mat& m) {
  ensure_parent(path);
  if (!cv::imwrite(path, m)) throw Error(Errc::io, "cannot write " + path);
}

}  // namespace

PngData read_png(const std::string& path) {
  if (!std::filesystem::exists(path)) throw Error(Errc::missing_file, path);
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (m.empty()) throw Error(Errc::corrupt_metadata, "undecodable image " + path);

  PngData out;
  out.width = m.cols;
  out.height = m.rows;
  out.channels = m.channels();
  if (m.depth() == CV_8U) {
    out.bit_depth = 8;
  } else if (m.depth() == CV_16U) {
    out.bit_depth = 16;
  } else {
    throw Error(Errc::corrupt_metadata, "unsupported sample type in " + path);
  }
  out.samples.resize(static_cast<std::size_t>(m.total()) * out.channels);

  // OpenCV stores colour as BGR(A); hand back RGB(A).
  std::size_t k = 0;
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      for (int c = 0; c < out.channels; ++c) {
        int src = (out.channels >= 3 && c < 3) ? 2 - c : c;
        std::uint16_t v = out.bit_depth == 8
                              ? m.ptr<std::uint8_t>(y)[x * out.channels + src]
                              : m.ptr<std::uint16_t>(y)[x * out.channels + src];
        out.samples[k++] = v;
      }
    }
  }
  return out;
}

void write_rgb8(const std::string& path, int width, int height, std::span<const std::uint8_t> rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3)
    throw Error(Errc::dimension_mismatch, "rgb buffer size");
  cv::Mat m(height, width, CV_8UC3);
  for (int y = 0; y < height; ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < width; ++x) {
      std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
      row[x * 3 + 0] = rgb[i + 2];
      row[x * 3 + 1] = rgb[i + 1];
      row[x * 3 + 2] = rgb[i + 0];
    }
  }
  write_mat(path, m);
}

void write_gray8(const std::string& path, int width, int height, std::span<const std::uint8_t> gray) {
  if (gray.size() != static_cast<std::size_t>(width) * height)
    throw Error(Errc::dimension_mismatch, "gray buffer size");
  cv::Mat m(height, width, CV_8UC1, const_cast<std::uint8_t*>(gray.data()));
  write_mat(path, m);
}

void write_gray16(const std::string& path, int width, int height, std::span<const std::uint16_t> gray) {
  if (gray.size() != static_cast<std::size_t>(width) * height)
    throw Error(Errc::dimension_mismatch, "gray buffer size");
  cv::Mat m(height, width, CV_16UC1, const_cast<std::uint16_t*>(gray.data()));
  write_mat(path, m);
}

}  // namespace hfcloud::image_io
