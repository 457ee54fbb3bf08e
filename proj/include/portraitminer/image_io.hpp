#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "portraitminer/error.hpp"
#include "portraitminer/image.hpp"

namespace portraitminer {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& p, const char* mode) {
  FilePtr f(std::fopen(p.c_str(), mode));
  if (!f) throw DataError("cannot open " + p.string());
  return f;
}

[[noreturn]] inline void png_error_fn(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

// Combines channels of one pixel into luminance in [0,1].
inline float to_gray(const std::vector<double>& ch) {
  double v;
  if (ch.size() >= 3)
    v = luminance(ch[0], ch[1], ch[2]);
  else
    v = ch[0];
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

inline float quantize_to(double v, double maxval) {
  return static_cast<float>(std::round(std::clamp(v, 0.0, 1.0) * maxval));
}

}  // namespace detail

inline Raster read_png(const std::filesystem::path& path) {
  auto fp = detail::open_file(path, "rb");
  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, detail::png_error_fn,
                                           detail::png_warning_fn);
  if (!png) throw DataError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows;
  std::vector<unsigned char> data;
  png_uint_32 width = 0, height = 0;
  int channels = 0, depth = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("invalid PNG " + path.string() + ": " + error);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (png_get_bit_depth(png, info) == 16) png_set_swap(png);  // native little-endian words
  png_read_update_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  channels = png_get_channels(png, info);
  depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  data.resize(stride * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = data.data() + y * stride;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Raster out(static_cast<int>(width), static_cast<int>(height));
  const double maxval = depth == 16 ? 65535.0 : 255.0;
  std::vector<double> ch(static_cast<std::size_t>(channels));
  for (png_uint_32 y = 0; y < height; ++y) {
    for (png_uint_32 x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        if (depth == 16) {
          std::uint16_t w;
          std::memcpy(&w, rows[y] + (x * channels + c) * 2, 2);
          ch[c] = w / maxval;
        } else {
          ch[c] = rows[y][x * channels + c] / maxval;
        }
      }
      out.at(static_cast<int>(x), static_cast<int>(y)) = detail::to_gray(ch);
    }
  }
  return out;
}

// Binary (P5/P6) and ASCII (P2/P3) netpbm gray/color maps, 8 or 16 bit.
inline Raster read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  const bool binary = magic == "P5" || magic == "P6";
  const int channels = (magic == "P3" || magic == "P6") ? 3 : 1;
  if (magic != "P2" && magic != "P3" && magic != "P5" && magic != "P6")
    throw DataError("unsupported netpbm type in " + path.string());
  auto next_int = [&]() {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string line;
      std::getline(in, line);
      in >> std::ws;
    }
    long v = -1;
    in >> v;
    if (!in) throw DataError("truncated netpbm header in " + path.string());
    return v;
  };
  const long width = next_int();
  const long height = next_int();
  const long maxval = next_int();
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535)
    throw DataError("bad netpbm header in " + path.string());
  in.get();  // single whitespace before raster
  Raster out(static_cast<int>(width), static_cast<int>(height));
  const bool wide = maxval > 255;
  std::vector<double> ch(channels);
  for (long y = 0; y < height; ++y) {
    for (long x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        long v;
        if (binary) {
          unsigned char b[2] = {0, 0};
          in.read(reinterpret_cast<char*>(b), wide ? 2 : 1);
          v = wide ? (b[0] << 8) | b[1] : b[0];
        } else {
          in >> v;
        }
        if (!in) throw DataError("truncated netpbm raster in " + path.string());
        ch[c] = static_cast<double>(v) / maxval;
      }
      out.at(static_cast<int>(x), static_cast<int>(y)) = detail::to_gray(ch);
    }
  }
  return out;
}

inline Raster read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("image file not found: " + path.string());
  unsigned char sig[8] = {0};
  in.read(reinterpret_cast<char*>(sig), 8);
  in.close();
  static constexpr unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (std::equal(sig, sig + 8, kPngSig)) return read_png(path);
  if (sig[0] == 'P' && sig[1] >= '2' && sig[1] <= '6') return read_pnm(path);
  throw DataError("unrecognized image format: " + path.string());
}

// 8-bit grayscale PNG; values clamped to [0,1]. No timestamp chunks, so the
// byte stream depends only on pixel content.
inline void write_png(const std::filesystem::path& path, const Raster& img) {
  auto fp = detail::open_file(path, "wb");
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, detail::png_error_fn,
                                            detail::png_warning_fn);
  if (!png) throw DataError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width()));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("PNG write failed for " + path.string() + ": " + error);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x)
      row[x] = static_cast<unsigned char>(detail::quantize_to(img.at(x, y), 255.0));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Binary PGM; 16-bit when `wide` (used for caches to limit quantization).
inline void write_pgm(const std::filesystem::path& path, const Raster& img, bool wide = false) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const double maxval = wide ? 65535.0 : 255.0;
  out << "P5\n" << img.width() << ' ' << img.height() << '\n' << static_cast<int>(maxval) << '\n';
  for (float p : img.pixels()) {
    const auto v = static_cast<std::uint32_t>(detail::quantize_to(p, maxval));
    if (wide) out.put(static_cast<char>(v >> 8));
    out.put(static_cast<char>(v & 0xff));
  }
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace portraitminer
