#include "handfit/raster.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

namespace handfit {
namespace {

constexpr char kMagic[4] = {'R', '2', 'H', 'M'};
constexpr std::uint32_t kVersion = 1;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_u32(std::FILE* f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  if (std::fwrite(b, 1, 4, f) != 4) throw MapFormatError("map write failed");
}

std::uint32_t read_u32(std::FILE* f, const std::string& path) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) throw MapFormatError("truncated map file: " + path);
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

void write_header(std::FILE* f, int h, int w, int c, std::uint8_t dtype) {
  if (std::fwrite(kMagic, 1, 4, f) != 4) throw MapFormatError("map write failed");
  write_u32(f, kVersion);
  write_u32(f, static_cast<std::uint32_t>(h));
  write_u32(f, static_cast<std::uint32_t>(w));
  write_u32(f, static_cast<std::uint32_t>(c));
  if (std::fwrite(&dtype, 1, 1, f) != 1) throw MapFormatError("map write failed");
}

struct Header {
  int height, width, channels;
  std::uint8_t dtype;
};

Header read_header(std::FILE* f, const std::string& path) {
  char magic[4];
  if (std::fread(magic, 1, 4, f) != 4) throw MapFormatError("truncated map file: " + path);
  if (std::memcmp(magic, kMagic, 4) != 0) throw MapFormatError("bad magic in map file: " + path);
  const std::uint32_t version = read_u32(f, path);
  if (version != kVersion) throw MapFormatError("unsupported map version in " + path);
  Header hd{};
  hd.height = static_cast<int>(read_u32(f, path));
  hd.width = static_cast<int>(read_u32(f, path));
  hd.channels = static_cast<int>(read_u32(f, path));
  std::uint8_t dtype = 0;
  if (std::fread(&dtype, 1, 1, f) != 1) throw MapFormatError("truncated map file: " + path);
  hd.dtype = dtype;
  if (hd.height < 0 || hd.width < 0 || hd.channels <= 0)
    throw MapFormatError("bad dimensions in map file: " + path);
  return hd;
}

template <class T>
void save_impl(const std::filesystem::path& path, const Raster<T>& raster, std::uint8_t dtype) {
  FilePtr f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw MapFormatError("cannot open map file for writing: " + path.string());
  write_header(f.get(), raster.height, raster.width, raster.channels, dtype);
  // Payload is stored little-endian; this writer assumes an LE host.
  if (!raster.data.empty() &&
      std::fwrite(raster.data.data(), sizeof(T), raster.data.size(), f.get()) != raster.data.size())
    throw MapFormatError("map write failed: " + path.string());
}

template <class T>
Raster<T> load_impl(const std::filesystem::path& path, std::uint8_t expected_dtype) {
  FilePtr f(std::fopen(path.string().c_str(), "rb"));
  if (!f) throw MapFormatError("cannot open map file: " + path.string());
  const Header hd = read_header(f.get(), path.string());
  if (hd.dtype != expected_dtype)
    throw MapFormatError("unexpected dtype " + std::to_string(hd.dtype) + " in map file: " + path.string());
  Raster<T> raster(hd.height, hd.width, hd.channels);
  if (!raster.data.empty() &&
      std::fread(raster.data.data(), sizeof(T), raster.data.size(), f.get()) != raster.data.size())
    throw MapFormatError("truncated map payload: " + path.string());
  // Any trailing bytes mean the file does not match its own header.
  unsigned char probe;
  if (std::fread(&probe, 1, 1, f.get()) == 1)
    throw MapFormatError("trailing bytes in map file: " + path.string());
  return raster;
}

}  // namespace

void save_map(const std::filesystem::path& path, const Raster<float>& raster) {
  save_impl(path, raster, 0);
}

void save_map(const std::filesystem::path& path, const Raster<std::uint8_t>& raster) {
  save_impl(path, raster, 1);
}

Raster<float> load_map_f32(const std::filesystem::path& path) { return load_impl<float>(path, 0); }

Raster<std::uint8_t> load_map_u8(const std::filesystem::path& path) {
  return load_impl<std::uint8_t>(path, 1);
}

}  // namespace handfit
