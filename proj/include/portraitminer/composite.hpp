#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "portraitminer/corpus.hpp"
#include "portraitminer/error.hpp"
#include "portraitminer/image.hpp"
#include "portraitminer/image_io.hpp"

namespace portraitminer {

// Per-pixel arithmetic mean, accumulated in double in the given order.
inline Raster mean_image(std::span<const Raster* const> rasters) {
  if (rasters.empty()) throw DataError("mean_image: no rasters");
  const Raster& first = *rasters.front();
  std::vector<double> acc(first.size(), 0.0);
  for (const Raster* r : rasters) {
    if (!r->same_shape(first)) throw DataError("mean_image: raster dimensions differ");
    const auto& px = r->pixels();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += px[i];
  }
  Raster out(first.width(), first.height());
  const double n = static_cast<double>(rasters.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out.pixels()[i] = static_cast<float>(acc[i] / n);
  return out;
}

inline Raster mean_image(std::span<const Raster> rasters) {
  std::vector<const Raster*> ptrs;
  ptrs.reserve(rasters.size());
  for (const auto& r : rasters) ptrs.push_back(&r);
  return mean_image(std::span<const Raster* const>(ptrs));
}

// Mean over (id, raster) pairs reduced in ascending-id order, so the result
// does not depend on input order.
inline Raster mean_image_by_id(std::vector<std::pair<std::string, const Raster*>> items) {
  std::sort(items.begin(), items.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<const Raster*> ptrs;
  ptrs.reserve(items.size());
  for (const auto& [id, r] : items) ptrs.push_back(r);
  return mean_image(std::span<const Raster* const>(ptrs));
}

inline int decade_of(int year) { return year - ((year % 10) + 10) % 10; }

struct CompositeImage {
  Raster raster;
  int decade = 0;
  Gender gender = Gender::kUnknown;
  std::size_t n = 0;
};

struct CompositeReport {
  std::vector<CompositeImage> composites;  // ascending (decade, gender)
  std::vector<std::pair<std::pair<int, Gender>, std::size_t>> skipped;  // groups below min_count
  std::size_t unknown_gender = 0;
};

inline constexpr std::size_t kDefaultCompositeMinCount = 5;

// One composite per (decade, gender) with at least min_count members.
// `aligned[i]` is the aligned raster of corpus portrait i.
inline CompositeReport decade_composites(const Corpus& c, std::span<const Raster> aligned,
                                         std::size_t min_count = kDefaultCompositeMinCount) {
  if (aligned.size() != c.size()) throw DataError("decade_composites: aligned cache size mismatch");
  std::map<std::pair<int, Gender>, std::vector<std::pair<std::string, const Raster*>>> groups;
  CompositeReport report;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& p = c.portraits[i];
    if (p.gender == Gender::kUnknown) {
      ++report.unknown_gender;
      continue;
    }
    groups[{decade_of(p.year), p.gender}].emplace_back(p.id, &aligned[i]);
  }
  for (auto& [key, items] : groups) {
    if (items.size() < min_count) {
      report.skipped.push_back({key, items.size()});
      continue;
    }
    const std::size_t n = items.size();
    report.composites.push_back({mean_image_by_id(std::move(items)), key.first, key.second, n});
  }
  return report;
}

// composite_<decade>_<gender>.png per group plus group_sizes.csv.
inline void write_composites(const std::filesystem::path& dir, const CompositeReport& r) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "group_sizes.csv");
  csv << "decade,gender,n,emitted\n";
  for (const auto& comp : r.composites) {
    write_png(dir / ("composite_" + std::to_string(comp.decade) + "_" + gender_name(comp.gender) +
                     ".png"),
              comp.raster);
    csv << comp.decade << ',' << gender_name(comp.gender) << ',' << comp.n << ",1\n";
  }
  for (const auto& [key, n] : r.skipped)
    csv << key.first << ',' << gender_name(key.second) << ',' << n << ",0\n";
  if (!csv) throw DataError("cannot write composite sizes in " + dir.string());
}

}  // namespace portraitminer
