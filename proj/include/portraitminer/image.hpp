#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "portraitminer/error.hpp"

namespace portraitminer {

// Single-channel raster, row-major, values nominally in [0, 1].
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, float fill = 0.0f)
      : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height, fill) {
    if (width < 0 || height < 0) throw DataError("negative raster dimensions");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  float& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  float at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

  // Replicated border.
  float clamped(int x, int y) const {
    return at(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1));
  }

  std::vector<float>& pixels() noexcept { return pixels_; }
  const std::vector<float>& pixels() const noexcept { return pixels_; }

  double mean() const {
    if (pixels_.empty()) return 0.0;
    double s = 0.0;
    for (float p : pixels_) s += p;
    return s / static_cast<double>(pixels_.size());
  }

  void clamp01() {
    for (float& p : pixels_) p = std::clamp(p, 0.0f, 1.0f);
  }

  bool same_shape(const Raster& o) const noexcept {
    return width_ == o.width_ && height_ == o.height_;
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> pixels_;
};

struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

// Coordinates within this distance of an integer are treated as that integer,
// so transforms recovered by least squares sample grid points exactly.
inline constexpr double kGridSnap = 1e-9;

inline double snap_to_grid(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < kGridSnap ? r : v;
}

inline bool inside(const Raster& img, double x, double y) {
  return x >= 0.0 && y >= 0.0 && x <= img.width() - 1 && y <= img.height() - 1;
}

// Bilinear sample; caller guarantees inside(img, x, y).
inline double bilinear(const Raster& img, double x, double y) {
  x = snap_to_grid(x);
  y = snap_to_grid(y);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  if (fx == 0.0 && fy == 0.0) return img.at(x0, y0);
  const double top = (1.0 - fx) * img.at(x0, y0) + fx * img.at(x1, y0);
  const double bottom = (1.0 - fx) * img.at(x0, y1) + fx * img.at(x1, y1);
  return (1.0 - fy) * top + fy * bottom;
}

inline Raster crop(const Raster& img, const Rect& r) {
  if (r.x < 0 || r.y < 0 || r.width <= 0 || r.height <= 0 || r.x + r.width > img.width() ||
      r.y + r.height > img.height()) {
    throw DataError("crop region " + std::to_string(r.x) + "," + std::to_string(r.y) + " " +
                    std::to_string(r.width) + "x" + std::to_string(r.height) +
                    " outside raster " + std::to_string(img.width()) + "x" +
                    std::to_string(img.height()));
  }
  Raster out(r.width, r.height);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x) out.at(x, y) = img.at(r.x + x, r.y + y);
  return out;
}

// Bilinear resize with pixel-center alignment. Same-size input is copied.
inline Raster resize(const Raster& img, int width, int height) {
  if (img.width() == width && img.height() == height) return img;
  if (img.empty() || width <= 0 || height <= 0) throw DataError("resize of empty raster");
  Raster out(width, height);
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double srcy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    for (int x = 0; x < width; ++x) {
      const double srcx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      out.at(x, y) = static_cast<float>(bilinear(img, srcx, srcy));
    }
  }
  return out;
}

inline Raster flip_horizontal(const Raster& img) {
  Raster out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) out.at(x, y) = img.at(img.width() - 1 - x, y);
  return out;
}

// 3x3 median with replicated border.
inline Raster median3x3(const Raster& img) {
  Raster out(img.width(), img.height());
  std::array<float, 9> win{};
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      int k = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) win[k++] = img.clamped(x + dx, y + dy);
      std::nth_element(win.begin(), win.begin() + 4, win.end());
      out.at(x, y) = win[4];
    }
  }
  return out;
}

// Rec. 601 luma.
inline double luminance(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

}  // namespace portraitminer
