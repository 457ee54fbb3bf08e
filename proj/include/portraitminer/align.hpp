#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "portraitminer/corpus.hpp"
#include "portraitminer/error.hpp"
#include "portraitminer/image.hpp"
#include "portraitminer/image_io.hpp"
#include "portraitminer/parallel.hpp"

namespace portraitminer {

// [a b tx; c d ty] mapping (x, y) -> (a x + b y + tx, c x + d y + ty).
struct AffineTransform {
  double a = 1.0, b = 0.0, tx = 0.0;
  double c = 0.0, d = 1.0, ty = 0.0;

  static AffineTransform identity() { return {}; }

  Point apply(const Point& p) const { return {a * p.x + b * p.y + tx, c * p.x + d * p.y + ty}; }

  double determinant() const { return a * d - b * c; }

  bool finite() const {
    for (double v : {a, b, tx, c, d, ty})
      if (!std::isfinite(v)) return false;
    return true;
  }

  AffineTransform inverse() const {
    const double det = determinant();
    if (!(std::abs(det) > 1e-300) || !finite()) throw NumericError("affine transform is singular");
    AffineTransform inv;
    inv.a = d / det;
    inv.b = -b / det;
    inv.c = -c / det;
    inv.d = a / det;
    inv.tx = -(inv.a * tx + inv.b * ty);
    inv.ty = -(inv.c * tx + inv.d * ty);
    return inv;
  }

  // this ∘ other
  AffineTransform compose(const AffineTransform& o) const {
    AffineTransform r;
    r.a = a * o.a + b * o.c;
    r.b = a * o.b + b * o.d;
    r.c = c * o.a + d * o.c;
    r.d = c * o.b + d * o.d;
    r.tx = a * o.tx + b * o.ty + tx;
    r.ty = c * o.tx + d * o.ty + ty;
    return r;
  }
};

struct AffineFit {
  AffineTransform transform;
  double residual = 0.0;  // sum of squared point errors
};

// Least-squares affine from src to dst. Points are centered and scaled before
// solving the 2x2 normal equations.
inline AffineFit fit_affine(std::span<const Point> src, std::span<const Point> dst) {
  if (src.size() != dst.size()) throw NumericError("fit_affine: point lists differ in length");
  if (src.size() < 3) throw NumericError("fit_affine: need at least 3 correspondences");
  const double n = static_cast<double>(src.size());
  double sx = 0, sy = 0, dx = 0, dy = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    sx += src[i].x;
    sy += src[i].y;
    dx += dst[i].x;
    dy += dst[i].y;
  }
  sx /= n;
  sy /= n;
  dx /= n;
  dy /= n;
  double scale = 0.0;
  for (const auto& p : src) scale += (p.x - sx) * (p.x - sx) + (p.y - sy) * (p.y - sy);
  scale = std::sqrt(scale / n);
  if (!(scale > 0.0)) throw NumericError("fit_affine: source points are coincident");
  double sxx = 0, sxy = 0, syy = 0;
  double mxx = 0, mxy = 0, myx = 0, myy = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double u = (src[i].x - sx) / scale;
    const double v = (src[i].y - sy) / scale;
    const double p = dst[i].x - dx;
    const double q = dst[i].y - dy;
    sxx += u * u;
    sxy += u * v;
    syy += v * v;
    mxx += p * u;
    mxy += p * v;
    myx += q * u;
    myy += q * v;
  }
  // After normalization trace(S) == n, so det/n^2 is a scale-free rank test.
  const double det = sxx * syy - sxy * sxy;
  if (det / (n * n) < 1e-12) throw NumericError("fit_affine: source points are collinear");
  const double i00 = syy / det, i01 = -sxy / det, i11 = sxx / det;
  AffineTransform t;
  t.a = (mxx * i00 + mxy * i01) / scale;
  t.b = (mxx * i01 + mxy * i11) / scale;
  t.c = (myx * i00 + myy * i01) / scale;
  t.d = (myx * i01 + myy * i11) / scale;
  t.tx = dx - (t.a * sx + t.b * sy);
  t.ty = dy - (t.c * sx + t.d * sy);
  if (!t.finite() || std::abs(t.determinant()) < 1e-12)
    throw NumericError("fit_affine: degenerate transform");
  AffineFit fit{t, 0.0};
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Point q = t.apply(src[i]);
    fit.residual += (q.x - dst[i].x) * (q.x - dst[i].x) + (q.y - dst[i].y) * (q.y - dst[i].y);
  }
  return fit;
}

struct CanonicalFrame {
  int width = 128;
  int height = 160;
};

struct MeanShape {
  std::vector<Point> points;
  CanonicalFrame frame;
  int iterations_run = 0;
  double final_delta = 0.0;
  std::size_t skipped = 0;  // portraits with degenerate landmarks

  nlohmann::json to_json() const {
    std::vector<double> flat;
    for (const auto& p : points) {
      flat.push_back(p.x);
      flat.push_back(p.y);
    }
    return {{"points", flat},
            {"canonical_size", {frame.width, frame.height}},
            {"iterations_run", iterations_run},
            {"final_delta", final_delta},
            {"skipped", skipped}};
  }

  static MeanShape from_json(const nlohmann::json& j) {
    MeanShape m;
    const auto flat = j.at("points").get<std::vector<double>>();
    for (std::size_t i = 0; i + 1 < flat.size(); i += 2) m.points.push_back({flat[i], flat[i + 1]});
    m.frame.width = j.at("canonical_size").at(0).get<int>();
    m.frame.height = j.at("canonical_size").at(1).get<int>();
    m.iterations_run = j.at("iterations_run").get<int>();
    m.final_delta = j.at("final_delta").get<double>();
    m.skipped = j.value("skipped", std::size_t{0});
    return m;
  }
};

inline constexpr double kInterEyeDistance = 40.0;
inline constexpr int kMeanShapeMaxIter = 20;
inline constexpr double kMeanShapeTol = 0.05;

namespace detail {

inline Point centroid(std::span<const Point> pts, std::span<const int> idx) {
  Point c;
  for (int i : idx) {
    c.x += pts[i].x;
    c.y += pts[i].y;
  }
  c.x /= static_cast<double>(idx.size());
  c.y /= static_cast<double>(idx.size());
  return c;
}

}  // namespace detail

// Translates the landmark centroid to the frame center and scales to the
// canonical size: eye centers 40 px apart when the schema names eyes,
// otherwise RMS radius 0.2 * frame width.
inline std::vector<Point> canonicalize_shape(std::span<const Point> pts, const LandmarkSchema& schema,
                                             const CanonicalFrame& frame) {
  const double n = static_cast<double>(pts.size());
  Point c;
  for (const auto& p : pts) {
    c.x += p.x;
    c.y += p.y;
  }
  c.x /= n;
  c.y /= n;
  double scale;
  if (schema.has_eyes()) {
    const Point l = detail::centroid(pts, schema.left_eye);
    const Point r = detail::centroid(pts, schema.right_eye);
    const double dist = std::hypot(r.x - l.x, r.y - l.y);
    if (!(dist > 0.0)) throw NumericError("eye centers coincide");
    scale = kInterEyeDistance / dist;
  } else {
    double rms = 0.0;
    for (const auto& p : pts) rms += (p.x - c.x) * (p.x - c.x) + (p.y - c.y) * (p.y - c.y);
    rms = std::sqrt(rms / n);
    if (!(rms > 0.0)) throw NumericError("landmarks are coincident");
    scale = 0.2 * frame.width / rms;
  }
  std::vector<Point> out;
  out.reserve(pts.size());
  for (const auto& p : pts)
    out.push_back({(p.x - c.x) * scale + frame.width / 2.0, (p.y - c.y) * scale + frame.height / 2.0});
  return out;
}

inline double rms_displacement(std::span<const Point> a, std::span<const Point> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += (a[i].x - b[i].x) * (a[i].x - b[i].x) + (a[i].y - b[i].y) * (a[i].y - b[i].y);
  return std::sqrt(s / static_cast<double>(a.size()));
}

// Iterative mean shape: start from the first usable portrait, then repeatedly
// align every shape to the current mean, average, and re-canonicalize until
// the mean moves less than `tol` (RMS px) or `max_iter` rounds have run.
// `members` selects portraits (all when empty).
inline MeanShape compute_mean_shape(const Corpus& c, const CanonicalFrame& frame = {},
                                    int max_iter = kMeanShapeMaxIter, double tol = kMeanShapeTol,
                                    std::span<const std::size_t> members = {},
                                    std::size_t jobs = 1) {
  std::vector<std::size_t> idx(members.begin(), members.end());
  if (idx.empty())
    for (std::size_t i = 0; i < c.size(); ++i) idx.push_back(i);
  if (idx.empty()) throw DataError("compute_mean_shape: corpus is empty");

  // Degenerate shapes are those that cannot be fit to anything.
  std::vector<Point> probe;
  for (int i = 0; i < c.schema.point_count; ++i)
    probe.push_back({std::cos(i * 2.399963) * (1 + i), std::sin(i * 2.399963) * (1 + i)});
  std::vector<std::size_t> usable;
  MeanShape m;
  m.frame = frame;
  for (std::size_t i : idx) {
    try {
      fit_affine(c.portraits[i].landmarks, probe);
      usable.push_back(i);
    } catch (const NumericError&) {
      ++m.skipped;
    }
  }
  if (usable.empty()) throw DataError("compute_mean_shape: every landmark set is degenerate");

  m.points = canonicalize_shape(c.portraits[usable.front()].landmarks, c.schema, frame);
  const std::size_t k = m.points.size();
  std::vector<std::vector<Point>> aligned(usable.size());
  for (int iter = 1; iter <= max_iter; ++iter) {
    parallel_for(usable.size(), jobs, [&](std::size_t j) {
      const auto& lm = c.portraits[usable[j]].landmarks;
      const auto fit = fit_affine(lm, m.points);
      aligned[j].resize(k);
      for (std::size_t q = 0; q < k; ++q) aligned[j][q] = fit.transform.apply(lm[q]);
    });
    std::vector<Point> avg(k);
    for (const auto& s : aligned)
      for (std::size_t q = 0; q < k; ++q) {
        avg[q].x += s[q].x;
        avg[q].y += s[q].y;
      }
    for (auto& p : avg) {
      p.x /= static_cast<double>(usable.size());
      p.y /= static_cast<double>(usable.size());
    }
    auto next = canonicalize_shape(avg, c.schema, frame);
    m.final_delta = rms_displacement(next, m.points);
    m.points = std::move(next);
    m.iterations_run = iter;
    if (m.final_delta < tol) break;
  }
  return m;
}

// Samples src at T^-1 of every output pixel; samples outside src take the
// source mean intensity.
inline Raster warp_affine(const Raster& src, const AffineTransform& src_to_dst, int width,
                          int height) {
  const AffineTransform inv = src_to_dst.inverse();
  const auto fill = static_cast<float>(src.mean());
  Raster out(width, height, fill);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const Point s = inv.apply({static_cast<double>(u), static_cast<double>(v)});
      const double x = snap_to_grid(s.x);
      const double y = snap_to_grid(s.y);
      if (inside(src, x, y)) out.at(u, v) = static_cast<float>(bilinear(src, x, y));
    }
  }
  return out;
}

struct AlignedPortrait {
  Raster raster;
  AffineTransform transform;
  double residual = 0.0;
};

inline AlignedPortrait warp_to_mean(const Portrait& p, const MeanShape& m) {
  const auto fit = fit_affine(p.landmarks, m.points);
  return {warp_affine(p.image, fit.transform, m.frame.width, m.frame.height), fit.transform,
          fit.residual};
}

// Face-and-hair window: the canonical frame minus the bottom band that holds
// shoulders and clothing, resampled to the analysis size.
struct CropParams {
  Rect region{0, 0, 128, 144};
  int out_width = 96;
  int out_height = 96;

  static CropParams defaults_for(const CanonicalFrame& f, int bottom_band = 16) {
    return {{0, 0, f.width, f.height - bottom_band}, 96, 96};
  }
};

inline Raster crop_face_hair(const Raster& aligned, const MeanShape& m, const Rect& region) {
  if (!aligned.same_shape(Raster(m.frame.width, m.frame.height)))
    throw DataError("aligned raster does not match the canonical frame");
  return crop(aligned, region);
}

inline Raster face_hair_crop(const Raster& aligned, const MeanShape& m, const CropParams& p) {
  return resize(crop_face_hair(aligned, m, p.region), p.out_width, p.out_height);
}

// <dir>/<id>.aligned.pgm plus <dir>/index.csv (id,residual).
inline void write_aligned_cache(const std::filesystem::path& dir, std::span<const std::string> ids,
                                std::span<const AlignedPortrait> aligned) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir / "index.csv");
  index << "id,residual\n";
  index.precision(17);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    write_pgm(dir / (ids[i] + ".aligned.pgm"), aligned[i].raster, true);
    index << ids[i] << ',' << aligned[i].residual << '\n';
  }
  if (!index) throw DataError("cannot write aligned index in " + dir.string());
}

inline Raster read_aligned(const std::filesystem::path& dir, const std::string& id) {
  return read_image(dir / (id + ".aligned.pgm"));
}

}  // namespace portraitminer
