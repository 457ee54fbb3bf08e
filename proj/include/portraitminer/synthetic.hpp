#pragma once

// Procedural portraits with known ground truth, for demos and tests.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "portraitminer/align.hpp"
#include "portraitminer/corpus.hpp"
#include "portraitminer/image.hpp"
#include "portraitminer/image_io.hpp"
#include "portraitminer/rng.hpp"

namespace portraitminer::synthetic {

// 12 points: eyes (0-1 left, 2-3 right), nose (4-5), mouth corners (6, 7),
// inner lips (8 upper-lip bottom, 9 lower-lip top), chin (10), hairline (11).
inline LandmarkSchema schema() {
  LandmarkSchema s;
  s.point_count = 12;
  s.left_eye = {0, 1};
  s.right_eye = {2, 3};
  s.mouth_left_corner = 6;
  s.mouth_right_corner = 7;
  s.upper_lip_bottom = 8;
  s.lower_lip_top = 9;
  return s;
}

// Canonical 128x160 layout for a given smile angle in degrees.
inline std::vector<Point> face_shape(double smile_deg) {
  const double half = 14.0;
  const double lift = half * std::tan(smile_deg * std::numbers::pi / 180.0);
  const double my = 108.0;
  return {{40, 70},  {56, 70},  {72, 70}, {88, 70},        {64, 80},      {64, 92},
          {50, my - lift}, {78, my - lift}, {64, my - 1.0}, {64, my + 1.0}, {64, 128}, {64, 34}};
}

inline void fill_ellipse(Raster& img, double cx, double cy, double rx, double ry, float v) {
  for (int y = std::max(0, static_cast<int>(cy - ry)); y <= std::min(img.height() - 1, static_cast<int>(cy + ry)); ++y)
    for (int x = std::max(0, static_cast<int>(cx - rx)); x <= std::min(img.width() - 1, static_cast<int>(cx + rx)); ++x) {
      const double u = (x - cx) / rx, w = (y - cy) / ry;
      if (u * u + w * w <= 1.0) img.at(x, y) = v;
    }
}

inline void draw_segment(Raster& img, Point a, Point b, float v, double radius = 1.2) {
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  const int steps = std::max(2, static_cast<int>(len * 3));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    fill_ellipse(img, a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), radius, radius, v);
  }
}

// Draws a face in the canonical frame. `hair` selects one of a few hair
// silhouettes so composites and detectors have structure to find.
inline Raster draw_face(const std::vector<Point>& shape, int hair, Rng& rng, double noise = 0.02) {
  Raster img(128, 160, 0.55f);
  const float hair_tone = 0.18f;
  switch (hair % 4) {
    case 0: fill_ellipse(img, 64, 62, 46, 44, hair_tone); break;
    case 1:
      fill_ellipse(img, 64, 58, 40, 34, hair_tone);
      for (int k = 0; k < 4; ++k) fill_ellipse(img, 28 + 24 * k, 36, 9, 9, hair_tone);
      break;
    case 2:
      fill_ellipse(img, 64, 60, 44, 36, hair_tone);
      fill_ellipse(img, 22, 110, 12, 36, hair_tone);
      fill_ellipse(img, 106, 110, 12, 36, hair_tone);
      break;
    default: fill_ellipse(img, 64, 48, 50, 20, hair_tone); break;
  }
  fill_ellipse(img, 64, 88, 30, 42, 0.78f);
  for (int e = 0; e < 2; ++e) {
    const Point a = shape[2 * e], b = shape[2 * e + 1];
    fill_ellipse(img, (a.x + b.x) / 2, (a.y + b.y) / 2, 6, 3, 0.15f);
  }
  draw_segment(img, shape[4], shape[5], 0.6f, 1.0);
  const Point mid{(shape[8].x + shape[9].x) / 2, (shape[8].y + shape[9].y) / 2};
  draw_segment(img, shape[6], mid, 0.25f);
  draw_segment(img, mid, shape[7], 0.25f);
  for (auto& p : img.pixels()) p = static_cast<float>(std::clamp(p + noise * rng.normal(), 0.0, 1.0));
  return img;
}

// A random near-similarity transform around the frame center.
inline AffineTransform random_pose(Rng& rng, double max_rot_deg = 6.0, double scale_jitter = 0.08,
                                   double shift = 5.0) {
  const double th = rng.uniform(-max_rot_deg, max_rot_deg) * std::numbers::pi / 180.0;
  const double s = 1.0 + rng.uniform(-scale_jitter, scale_jitter);
  const double shear = rng.uniform(-0.03, 0.03);
  AffineTransform t;
  t.a = s * std::cos(th);
  t.b = -s * std::sin(th) + shear;
  t.c = s * std::sin(th);
  t.d = s * std::cos(th);
  const Point c{64, 80};
  t.tx = c.x - (t.a * c.x + t.b * c.y) + rng.uniform(-shift, shift) + 6.0;
  t.ty = c.y - (t.c * c.x + t.d * c.y) + rng.uniform(-shift, shift) + 5.0;
  return t;
}

struct FixtureSpec {
  int year_lo = 1960;
  int year_hi = 1979;
  int per_year_per_gender = 6;
  int schools_per_year = 2;
  double smile_base = 2.0;      // degrees at year_lo
  double smile_slope = 0.5;     // degrees per year
  double female_offset = 3.0;   // degrees
  double smile_sigma = 1.5;
  std::uint64_t seed = 7;
  bool with_pose = true;
};

// Writes <dir>/images/*.png, <dir>/manifest.jsonl and <dir>/schema.json.
// Hair style follows the decade so composites and mining have a signal.
inline std::filesystem::path write_fixture(const std::filesystem::path& dir, const FixtureSpec& spec = {}) {
  std::filesystem::create_directories(dir / "images");
  std::ofstream(dir / "schema.json") << schema().to_json().dump(1) << '\n';
  std::ofstream manifest(dir / "manifest.jsonl");
  Rng rng(spec.seed);
  const char* states[] = {"CA", "NY", "TX", "OH"};
  int serial = 0;
  for (int year = spec.year_lo; year <= spec.year_hi; ++year) {
    for (int g = 0; g < 2; ++g) {
      for (int k = 0; k < spec.per_year_per_gender; ++k) {
        const Gender gender = g == 0 ? Gender::kFemale : Gender::kMale;
        const double smile = spec.smile_base + spec.smile_slope * (year - spec.year_lo) +
                             (gender == Gender::kFemale ? spec.female_offset : 0.0) +
                             rng.normal(0.0, spec.smile_sigma);
        const auto canonical = face_shape(smile);
        const int hair = ((year / 10) + (k % 3 == 0 ? 1 : 0)) % 4;
        const Raster face = draw_face(canonical, hair, rng);
        const AffineTransform pose = random_pose(rng);
        const Raster img = warp_affine(face, pose, 140, 172);
        const int school = k % spec.schools_per_year;
        const std::string id = "p" + std::to_string(year) + "_" + gender_code(gender) + std::to_string(k);
        const std::string file = "images/" + id + ".png";
        write_png(dir / file, img);
        std::vector<double> flat;
        for (const auto& p : canonical) {
          const Point q = pose.apply(p);
          flat.push_back(q.x);
          flat.push_back(q.y);
        }
        nlohmann::json j = {{"id", id},
                            {"image_path", file},
                            {"year", year},
                            {"school_id", "s" + std::to_string(year) + "_" + std::to_string(school)},
                            {"state", states[serial % 4]},
                            {"gender", gender_code(gender)},
                            {"landmarks", flat}};
        if (spec.with_pose) {
          // every 17th portrait turns away from the camera
          const double yaw = serial % 17 == 16 ? 30.0 : rng.uniform(-8.0, 8.0);
          j["pose"] = {yaw, rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)};
        }
        manifest << j.dump() << '\n';
        ++serial;
      }
    }
  }
  return dir / "manifest.jsonl";
}

}  // namespace portraitminer::synthetic
