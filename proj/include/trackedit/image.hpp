#pragma once

// Video/raster containers plus PNG and raw depth I/O.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "trackedit/error.hpp"

namespace trackedit {

/// F×H×W×3 frames, values in [0, 1].
struct VideoClip {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  VideoClip() = default;
  VideoClip(int f, int h, int w, double fill = 0.0)
      : frames(f), height(h), width(w), data(static_cast<std::size_t>(f) * h * w * 3, fill) {}

  std::size_t index(int f, int r, int c, int ch = 0) const {
    return ((static_cast<std::size_t>(f) * height + r) * width + c) * 3 + ch;
  }
  double& at(int f, int r, int c, int ch) { return data[index(f, r, c, ch)]; }
  double at(int f, int r, int c, int ch) const { return data[index(f, r, c, ch)]; }
  std::size_t frame_size() const { return static_cast<std::size_t>(height) * width * 3; }
  bool same_shape(const VideoClip& o) const {
    return frames == o.frames && height == o.height && width == o.width;
  }
  bool operator==(const VideoClip&) const = default;
};

/// Single-channel F×H×W raster (depth in meters, labels, coverage).
template <typename T>
struct Volume {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Volume() = default;
  Volume(int f, int h, int w, T fill = T{})
      : frames(f), height(h), width(w), data(static_cast<std::size_t>(f) * h * w, fill) {}

  std::size_t index(int f, int r, int c) const {
    return (static_cast<std::size_t>(f) * height + r) * width + c;
  }
  T& at(int f, int r, int c) { return data[index(f, r, c)]; }
  const T& at(int f, int r, int c) const { return data[index(f, r, c)]; }
  bool operator==(const Volume&) const = default;
};

using DepthVideo = Volume<double>;
using LabelVideo = Volume<int>;
using CoverageVideo = Volume<std::uint8_t>;

inline std::uint8_t to_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

// ---------------------------------------------------------------------------
// PNG

struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  int bit_depth = 8;  // 8 or 16
  std::vector<std::uint16_t> samples;  // row-major, interleaved
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

inline PngImage read_png(const std::filesystem::path& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw Error(ErrorCode::MissingFile, "cannot open", path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::IoError, "corrupt PNG", path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (depth == 16) png_set_swap(png);  // little-endian host order
  png_read_update_info(png, info);

  PngImage img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = png_get_channels(png, info);
  img.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> buf(rowbytes * img.height);
  std::vector<png_bytep> rows(img.height);
  for (int r = 0; r < img.height; ++r) rows[r] = buf.data() + r * rowbytes;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.samples.resize(n);
  if (img.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint16_t v;
      std::memcpy(&v, buf.data() + 2 * i, 2);
      img.samples[i] = v;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) img.samples[i] = buf[i];
  }
  return img;
}

namespace detail {

inline void png_write_to_vector(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}
inline void png_flush_noop(png_structp) {}

}  // namespace detail

/// Encodes deterministically (fixed compression settings, no timestamps).
inline std::vector<unsigned char> encode_png(const PngImage& img) {
  std::vector<unsigned char> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoError, "PNG encoding failed");
  }
  png_set_write_fn(png, &out, detail::png_write_to_vector, detail::png_flush_noop);
  png_set_compression_level(png, 6);
  const int color = img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, img.width, img.height, img.bit_depth, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (img.bit_depth == 16) png_set_swap(png);
  const std::size_t bps = img.bit_depth == 16 ? 2 : 1;
  const std::size_t rowbytes = static_cast<std::size_t>(img.width) * img.channels * bps;
  std::vector<unsigned char> row(rowbytes);
  for (int r = 0; r < img.height; ++r) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(img.width) * img.channels; ++i) {
      const std::uint16_t v = img.samples[r * static_cast<std::size_t>(img.width) * img.channels + i];
      if (bps == 2)
        std::memcpy(row.data() + 2 * i, &v, 2);
      else
        row[i] = static_cast<unsigned char>(v);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot write", path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline void write_png(const std::filesystem::path& path, const PngImage& img) {
  write_file(path, encode_png(img));
}

inline PngImage frame_to_png(const VideoClip& v, int f) {
  PngImage img{v.width, v.height, 3, 8, {}};
  img.samples.resize(v.frame_size());
  const std::size_t off = v.index(f, 0, 0, 0);
  for (std::size_t i = 0; i < img.samples.size(); ++i) img.samples[i] = to_byte(v.data[off + i]);
  return img;
}

template <typename T>
PngImage volume_frame_to_png(const Volume<T>& v, int f, int bit_depth, double scale = 1.0) {
  PngImage img{v.width, v.height, 1, bit_depth, {}};
  const double max = bit_depth == 16 ? 65535.0 : 255.0;
  img.samples.resize(static_cast<std::size_t>(v.width) * v.height);
  for (int r = 0; r < v.height; ++r)
    for (int c = 0; c < v.width; ++c) {
      const double x = std::clamp(std::round(static_cast<double>(v.at(f, r, c)) * scale), 0.0, max);
      img.samples[static_cast<std::size_t>(r) * v.width + c] = static_cast<std::uint16_t>(x);
    }
  return img;
}

inline std::string frame_name(int index, std::string_view ext = ".png") {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return std::string(buf) + std::string(ext);
}

// ---------------------------------------------------------------------------
// Raw float32 depth rasters: "TFDEPTH1", u32 width, u32 height, then
// width*height little-endian float32 meters, row-major.

inline constexpr char kDepthMagic[8] = {'T', 'F', 'D', 'E', 'P', 'T', 'H', '1'};

struct DepthRaster {
  int width = 0;
  int height = 0;
  std::vector<float> meters;
};

inline DepthRaster read_depth_raw(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::MissingFile, "cannot open", path.string());
  char magic[8];
  std::uint32_t w = 0, h = 0;
  f.read(magic, 8);
  f.read(reinterpret_cast<char*>(&w), 4);
  f.read(reinterpret_cast<char*>(&h), 4);
  if (!f || std::memcmp(magic, kDepthMagic, 8) != 0)
    throw Error(ErrorCode::SchemaViolation, "bad depth header", path.string(), "magic");
  DepthRaster d{static_cast<int>(w), static_cast<int>(h), std::vector<float>(std::size_t{w} * h)};
  f.read(reinterpret_cast<char*>(d.meters.data()), static_cast<std::streamsize>(d.meters.size() * 4));
  if (!f) throw Error(ErrorCode::ShapeMismatch, "truncated depth raster", path.string());
  return d;
}

inline void write_depth_raw(const std::filesystem::path& path, const DepthRaster& d) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot write", path.string());
  const std::uint32_t w = static_cast<std::uint32_t>(d.width), h = static_cast<std::uint32_t>(d.height);
  f.write(kDepthMagic, 8);
  f.write(reinterpret_cast<const char*>(&w), 4);
  f.write(reinterpret_cast<const char*>(&h), 4);
  f.write(reinterpret_cast<const char*>(d.meters.data()), static_cast<std::streamsize>(d.meters.size() * 4));
}

}  // namespace trackedit
