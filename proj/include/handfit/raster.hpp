#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace handfit {

/// Dense row-major image with an arbitrary channel count.
template <class T>
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<T> data;

  Raster() = default;
  Raster(int h, int w, int c, T fill = T{})
      : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, fill) {
    if (h < 0 || w < 0 || c <= 0) throw std::invalid_argument("raster: bad dimensions");
  }

  bool in_bounds(int r, int c) const { return r >= 0 && r < height && c >= 0 && c < width; }

  T& at(int r, int c, int ch = 0) { return data[(static_cast<size_t>(r) * width + c) * channels + ch]; }
  const T& at(int r, int c, int ch = 0) const {
    return data[(static_cast<size_t>(r) * width + c) * channels + ch];
  }

  size_t size() const { return data.size(); }
  bool same_shape(const Raster& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

struct MapFormatError : std::runtime_error {
  explicit MapFormatError(const std::string& what) : std::runtime_error(what) {}
};

// R2HM container: magic "R2HM", u32 version=1, u32 height, u32 width,
// u32 channels, u8 dtype (0 = f32 LE, 1 = u8), row-major payload.
void save_map(const std::filesystem::path& path, const Raster<float>& raster);
void save_map(const std::filesystem::path& path, const Raster<std::uint8_t>& raster);
Raster<float> load_map_f32(const std::filesystem::path& path);
Raster<std::uint8_t> load_map_u8(const std::filesystem::path& path);

}  // namespace handfit
