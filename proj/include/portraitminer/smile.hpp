#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "portraitminer/corpus.hpp"
#include "portraitminer/error.hpp"

namespace portraitminer {

struct SmileRecord {
  std::string portrait_id;
  double curvature = 0.0;  // degrees
};

// Average of the two base angles of the triangle (L, R, M), where L and R are
// the mouth corners and M is the midpoint of the inner lip points. Both angles
// are measured against the L-R chord; the sign is positive when M lies on the
// side of the chord that is "down" in image coordinates for a chord running
// from the left corner to the right corner, i.e. when the corners sit above
// the lip center.
inline double lip_curvature(const Point& left, const Point& right, const Point& upper_lip_bottom,
                            const Point& lower_lip_top) {
  for (const Point* p : {&left, &right, &upper_lip_bottom, &lower_lip_top})
    if (!std::isfinite(p->x) || !std::isfinite(p->y))
      throw DataError("lip_curvature: non-finite mouth landmark");
  if (left == right) throw DataError("lip_curvature: mouth corners coincide");
  const Point mid{(upper_lip_bottom.x + lower_lip_top.x) / 2.0,
                  (upper_lip_bottom.y + lower_lip_top.y) / 2.0};
  if (mid == left || mid == right) throw DataError("lip_curvature: lip midpoint coincides with a corner");
  const double ux = right.x - left.x, uy = right.y - left.y;
  const double lx = mid.x - left.x, ly = mid.y - left.y;
  const double rx = mid.x - right.x, ry = mid.y - right.y;
  const double cross_l = ux * ly - uy * lx;
  const double cross_r = ux * ry - uy * rx;  // equals cross_l analytically
  const double angle_l = std::atan2(std::abs(cross_l), ux * lx + uy * ly);
  const double angle_r = std::atan2(std::abs(cross_r), -(ux * rx + uy * ry));
  const double sign = cross_l > 0.0 ? 1.0 : (cross_l < 0.0 ? -1.0 : 0.0);
  return sign * (angle_l + angle_r) / 2.0 * 180.0 / std::numbers::pi;
}

inline double lip_curvature(std::span<const Point> landmarks, const LandmarkSchema& s) {
  if (static_cast<int>(landmarks.size()) != s.point_count)
    throw DataError("lip_curvature: landmark count does not match schema");
  return lip_curvature(landmarks[s.mouth_left_corner], landmarks[s.mouth_right_corner],
                       landmarks[s.upper_lip_bottom], landmarks[s.lower_lip_top]);
}

inline std::vector<SmileRecord> smile_records(const Corpus& c) {
  std::vector<SmileRecord> out;
  out.reserve(c.size());
  for (const auto& p : c.portraits) {
    try {
      out.push_back({p.id, lip_curvature(p.landmarks, c.schema)});
    } catch (const DataError& e) {
      throw DataError("portrait " + p.id + ": " + e.what());
    }
  }
  return out;
}

struct GroupStats {
  double mean = 0.0;
  double std = 0.0;  // sample std, 0 when count == 1
  std::size_t count = 0;
};

// Two-pass mean and sample standard deviation in the given order.
inline GroupStats group_stats(std::span<const double> v) {
  GroupStats g;
  g.count = v.size();
  if (v.empty()) return g;
  double s = 0.0;
  for (double x : v) s += x;
  g.mean = s / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - g.mean) * (x - g.mean);
    g.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return g;
}

struct TrendRow {
  int year = 0;
  Gender gender = Gender::kUnknown;
  GroupStats stats;
};

struct TrendTable {
  std::vector<TrendRow> rows;  // ascending (year, gender)
  std::size_t skipped_unknown = 0;

  void write_csv(std::ostream& out) const {
    out.precision(10);
    out << "year,gender,mean,std,count\n";
    for (const auto& r : rows)
      out << r.year << ',' << gender_name(r.gender) << ',' << r.stats.mean << ',' << r.stats.std
          << ',' << r.stats.count << '\n';
  }
};

namespace detail {

// Records joined to their portraits, sorted by id so every reduction below
// runs in a canonical order.
struct JoinedRecord {
  const Portrait* portrait;
  double curvature;
};

inline std::vector<JoinedRecord> join_records(const Corpus& c, std::span<const SmileRecord> records) {
  const auto index = c.index_by_id();
  std::vector<JoinedRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto it = index.find(r.portrait_id);
    if (it == index.end()) throw DataError("smile record for unknown portrait " + r.portrait_id);
    out.push_back({&c.portraits[it->second], r.curvature});
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.portrait->id < b.portrait->id; });
  return out;
}

}  // namespace detail

inline TrendTable smile_trend(const Corpus& c, std::span<const SmileRecord> records) {
  TrendTable t;
  std::map<std::pair<int, Gender>, std::vector<double>> groups;
  for (const auto& r : detail::join_records(c, records)) {
    if (r.portrait->gender == Gender::kUnknown) {
      ++t.skipped_unknown;
      continue;
    }
    groups[{r.portrait->year, r.portrait->gender}].push_back(r.curvature);
  }
  for (const auto& [key, values] : groups) t.rows.push_back({key.first, key.second, group_stats(values)});
  return t;
}

struct Exemplar {
  int bin_start = 0;
  Gender gender = Gender::kUnknown;
  std::string portrait_id;
  double curvature = 0.0;
  double bin_mean = 0.0;
  std::size_t bin_count = 0;
};

inline constexpr int kDefaultSmileBinYears = 10;
inline constexpr int kDefaultSmileBinOrigin = 1905;

inline int bin_start(int year, int bin_years, int origin) {
  const int off = year - origin;
  const int q = off >= 0 ? off / bin_years : -((-off + bin_years - 1) / bin_years);
  return origin + q * bin_years;
}

// Per (bin, gender): the portrait whose curvature is closest to the bin mean,
// ties to the smallest id.
inline std::vector<Exemplar> exemplar_nearest_mean(const Corpus& c,
                                                   std::span<const SmileRecord> records,
                                                   int bin_years = kDefaultSmileBinYears,
                                                   int origin = kDefaultSmileBinOrigin) {
  if (bin_years <= 0) throw ConfigError("smile bin width must be positive");
  std::map<std::pair<int, Gender>, std::vector<detail::JoinedRecord>> bins;
  for (const auto& r : detail::join_records(c, records)) {
    if (r.portrait->gender == Gender::kUnknown) continue;
    bins[{bin_start(r.portrait->year, bin_years, origin), r.portrait->gender}].push_back(r);
  }
  std::vector<Exemplar> out;
  for (const auto& [key, members] : bins) {
    std::vector<double> values;
    for (const auto& m : members) values.push_back(m.curvature);
    const double mean = group_stats(values).mean;
    const detail::JoinedRecord* best = nullptr;
    double best_gap = 0.0;
    for (const auto& m : members) {  // id-sorted, so strict < keeps the smallest id on ties
      const double gap = std::abs(m.curvature - mean);
      if (!best || gap < best_gap) {
        best = &m;
        best_gap = gap;
      }
    }
    out.push_back({key.first, key.second, best->portrait->id, best->curvature, mean, members.size()});
  }
  return out;
}

struct LevelRow {
  int level = 0;
  GroupStats stats;
};

struct IntensityValidation {
  std::vector<LevelRow> levels;    // populated levels, ascending
  std::vector<int> missing_levels;  // within 0..5
  double spearman = 0.0;            // level index vs level mean

  void write_csv(std::ostream& out) const {
    out.precision(10);
    out << "level,mean,std,count\n";
    for (const auto& r : levels)
      out << r.level << ',' << r.stats.mean << ',' << r.stats.std << ',' << r.stats.count << '\n';
  }
};

// Average ranks (1-based) with ties sharing their mean rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

// Pearson correlation of average ranks; 0 when either side is constant.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) return 0.0;
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

inline constexpr int kMaxIntensityLevel = 5;

inline IntensityValidation intensity_validation(std::span<const double> curvatures,
                                                std::span<const int> levels) {
  if (curvatures.size() != levels.size())
    throw DataError("intensity_validation: curvature and level lists differ in length");
  std::map<int, std::vector<double>> by_level;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] < 0 || levels[i] > kMaxIntensityLevel)
      throw DataError("intensity_validation: level " + std::to_string(levels[i]) + " outside 0..5");
    by_level[levels[i]].push_back(curvatures[i]);
  }
  IntensityValidation v;
  std::vector<double> idx, means;
  for (int level = 0; level <= kMaxIntensityLevel; ++level) {
    const auto it = by_level.find(level);
    if (it == by_level.end()) {
      v.missing_levels.push_back(level);
      continue;
    }
    const auto s = group_stats(it->second);
    v.levels.push_back({level, s});
    idx.push_back(level);
    means.push_back(s.mean);
  }
  v.spearman = spearman(idx, means);
  return v;
}

// Mean line per gender with a ±1 std band.
inline std::string trend_svg(const TrendTable& t, int width = 800, int height = 400) {
  std::ostringstream svg;
  svg.precision(6);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (t.rows.empty()) {
    svg << "</svg>\n";
    return svg.str();
  }
  int y0 = t.rows.front().year, y1 = y0;
  double lo = 1e300, hi = -1e300;
  for (const auto& r : t.rows) {
    y0 = std::min(y0, r.year);
    y1 = std::max(y1, r.year);
    lo = std::min(lo, r.stats.mean - r.stats.std);
    hi = std::max(hi, r.stats.mean + r.stats.std);
  }
  if (y1 == y0) ++y1;
  if (hi <= lo) hi = lo + 1.0;
  const double margin = 50.0;
  auto px = [&](int year) { return margin + (year - y0) * (width - 2 * margin) / (y1 - y0); };
  auto py = [&](double v) { return height - margin - (v - lo) * (height - 2 * margin) / (hi - lo); };
  svg << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
      << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << margin << "\" y=\"" << height - 15 << "\" font-size=\"12\">" << y0
      << "</text>\n<text x=\"" << width - margin - 30 << "\" y=\"" << height - 15
      << "\" font-size=\"12\">" << y1 << "</text>\n";
  svg << "<text x=\"5\" y=\"" << margin - 10 << "\" font-size=\"12\">lip curvature (deg)</text>\n";
  for (Gender g : {Gender::kFemale, Gender::kMale}) {
    const char* color = g == Gender::kFemale ? "#c0392b" : "#2c6fbb";
    std::vector<const TrendRow*> rows;
    for (const auto& r : t.rows)
      if (r.gender == g) rows.push_back(&r);
    if (rows.empty()) continue;
    svg << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (const auto* r : rows) svg << px(r->year) << ',' << py(r->stats.mean + r->stats.std) << ' ';
    for (auto it = rows.rbegin(); it != rows.rend(); ++it)
      svg << px((*it)->year) << ',' << py((*it)->stats.mean - (*it)->stats.std) << ' ';
    svg << "\"/>\n<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto* r : rows) svg << px(r->year) << ',' << py(r->stats.mean) << ' ';
    svg << "\"/>\n";
    svg << "<text x=\"" << width - margin - 60 << "\" y=\"" << (g == Gender::kFemale ? 30 : 45)
        << "\" font-size=\"12\" fill=\"" << color << "\">" << gender_name(g) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

// Least-squares slope and intercept of y on x.
struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  LinearFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  return f;
}

}  // namespace portraitminer
