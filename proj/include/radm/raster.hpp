#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace radm {

/// Interleaved float raster (row-major, channel-last), values nominally in [0,1].
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  Raster() = default;
  Raster(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  bool empty() const { return width <= 0 || height <= 0 || channels <= 0 || data.empty(); }

  float& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  friend bool operator==(const Raster&, const Raster&) = default;
};

/// Rounds every value to the nearest 8-bit level so that PNG round trips are lossless.
inline void quantize8(Raster& r) {
  for (auto& v : r.data) v = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f;
}

inline Raster toGray(const Raster& rgb) {
  if (rgb.channels == 1) return rgb;
  Raster g(rgb.width, rgb.height, 1);
  for (int y = 0; y < rgb.height; ++y)
    for (int x = 0; x < rgb.width; ++x)
      g.at(x, y) = 0.299f * rgb.at(x, y, 0) + 0.587f * rgb.at(x, y, 1) + 0.114f * rgb.at(x, y, 2);
  return g;
}

/// Bilinear resize using pixel-center alignment and edge replication.
inline Raster resizeBilinear(const Raster& src, int out_w, int out_h) {
  if (src.empty()) throw std::invalid_argument("resize: empty raster");
  if (src.width == out_w && src.height == out_h) return src;
  Raster dst(out_w, out_h, src.channels);
  const double sx = static_cast<double>(src.width) / out_w;
  const double sy = static_cast<double>(src.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, src.height - 1);
    double ty = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, src.width - 1);
      double tx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        double top = src.at(x0, y0, c) * (1 - tx) + src.at(x1, y0, c) * tx;
        double bot = src.at(x0, y1, c) * (1 - tx) + src.at(x1, y1, c) * tx;
        dst.at(x, y, c) = static_cast<float>(top * (1 - ty) + bot * ty);
      }
    }
  }
  return dst;
}

/// Sobel gradient magnitude of a single-channel raster (replicated borders, unnormalized kernels).
inline Raster sobelMagnitude(const Raster& gray) {
  Raster out(gray.width, gray.height, 1);
  auto px = [&](int x, int y) {
    x = std::clamp(x, 0, gray.width - 1);
    y = std::clamp(y, 0, gray.height - 1);
    return static_cast<double>(gray.at(x, y));
  };
  for (int y = 0; y < gray.height; ++y)
    for (int x = 0; x < gray.width; ++x) {
      double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                  (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
      double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                  (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
      out.at(x, y) = static_cast<float>(std::sqrt(gx * gx + gy * gy));
    }
  return out;
}

/// Writes an 8-bit gray (1 channel) or RGB (3 channel) PNG.
inline void writePng(const Raster& r, const std::filesystem::path& path) {
  if (r.empty() || (r.channels != 1 && r.channels != 3))
    throw std::invalid_argument("writePng: need a 1- or 3-channel raster");
  std::vector<std::uint8_t> bytes(r.data.size());
  std::transform(r.data.begin(), r.data.end(), bytes.begin(), [](float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  });
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(r.width);
  img.height = static_cast<png_uint_32>(r.height);
  img.format = r.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, bytes.data(), 0, nullptr))
    throw std::runtime_error("writePng(" + path.string() + "): " + img.message);
}

/// Reads a PNG as gray (channels = 1) or RGB (channels = 3).
inline Raster readPng(const std::filesystem::path& path, int channels = 3) {
  if (channels != 1 && channels != 3) throw std::invalid_argument("readPng: channels must be 1 or 3");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw std::runtime_error("readPng(" + path.string() + "): " + img.message);
  img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&img);
    throw std::runtime_error("readPng(" + path.string() + "): " + img.message);
  }
  Raster r(static_cast<int>(img.width), static_cast<int>(img.height), channels);
  std::transform(bytes.begin(), bytes.end(), r.data.begin(), [](std::uint8_t b) { return b / 255.0f; });
  return r;
}

}  // namespace radm
