#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "portraitminer/error.hpp"
#include "portraitminer/image.hpp"
#include "portraitminer/image_io.hpp"
#include "portraitminer/parallel.hpp"
#include "portraitminer/rng.hpp"

namespace portraitminer {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

enum class Gender { kFemale, kMale, kUnknown };

inline std::string gender_code(Gender g) {
  switch (g) {
    case Gender::kFemale: return "F";
    case Gender::kMale: return "M";
    default: return "?";
  }
}

inline std::string gender_name(Gender g) {
  switch (g) {
    case Gender::kFemale: return "female";
    case Gender::kMale: return "male";
    default: return "unknown";
  }
}

inline Gender parse_gender(const std::string& s) {
  if (s == "F" || s == "f" || s == "female") return Gender::kFemale;
  if (s == "M" || s == "m" || s == "male") return Gender::kMale;
  if (s == "?" || s.empty() || s == "unknown") return Gender::kUnknown;
  throw DataError("unknown gender code '" + s + "'");
}

struct Pose {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
  friend bool operator==(const Pose&, const Pose&) = default;
};

// Which landmark indices play which role. Eye roles are optional lists
// (averaged to an eye center) used to fix the canonical scale.
struct LandmarkSchema {
  int point_count = 0;
  int mouth_left_corner = -1;
  int mouth_right_corner = -1;
  int upper_lip_bottom = -1;
  int lower_lip_top = -1;
  std::vector<int> left_eye;
  std::vector<int> right_eye;

  bool has_eyes() const { return !left_eye.empty() && !right_eye.empty(); }

  void validate() const {
    if (point_count <= 0) throw ConfigError("schema point_count must be positive");
    const std::array<std::pair<const char*, int>, 4> mouth{{
        {"mouth_left_corner", mouth_left_corner},
        {"mouth_right_corner", mouth_right_corner},
        {"upper_lip_bottom", upper_lip_bottom},
        {"lower_lip_top", lower_lip_top},
    }};
    std::set<int> seen;
    for (const auto& [name, idx] : mouth) {
      if (idx < 0 || idx >= point_count)
        throw ConfigError(std::string("schema role ") + name + " index out of range");
      seen.insert(idx);
    }
    if (seen.size() != 4) throw ConfigError("schema mouth roles must map to distinct indices");
    for (const auto* eye : {&left_eye, &right_eye})
      for (int idx : *eye)
        if (idx < 0 || idx >= point_count) throw ConfigError("schema eye index out of range");
  }

  static LandmarkSchema from_json(const nlohmann::json& j) {
    LandmarkSchema s;
    try {
      s.point_count = j.at("point_count").get<int>();
      const auto& roles = j.at("named_indices");
      s.mouth_left_corner = roles.at("mouth_left_corner").get<int>();
      s.mouth_right_corner = roles.at("mouth_right_corner").get<int>();
      s.upper_lip_bottom = roles.at("upper_lip_bottom").get<int>();
      s.lower_lip_top = roles.at("lower_lip_top").get<int>();
      auto read_list = [&](const char* key, std::vector<int>& dst) {
        if (!roles.contains(key)) return;
        const auto& v = roles.at(key);
        if (v.is_array())
          dst = v.get<std::vector<int>>();
        else
          dst = {v.get<int>()};
      };
      read_list("left_eye", s.left_eye);
      read_list("right_eye", s.right_eye);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed landmark schema: ") + e.what());
    }
    s.validate();
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json roles = {{"mouth_left_corner", mouth_left_corner},
                            {"mouth_right_corner", mouth_right_corner},
                            {"upper_lip_bottom", upper_lip_bottom},
                            {"lower_lip_top", lower_lip_top}};
    if (!left_eye.empty()) roles["left_eye"] = left_eye;
    if (!right_eye.empty()) roles["right_eye"] = right_eye;
    return {{"point_count", point_count}, {"named_indices", roles}};
  }

  static LandmarkSchema load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read schema file " + path.string());
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("schema file " + path.string() + " is not JSON: " + e.what());
    }
  }
};

struct Portrait {
  std::string id;
  std::filesystem::path image_path;  // absolute or as resolved at load
  Raster image;
  std::vector<Point> landmarks;
  int year = 0;
  std::string school_id;
  std::string state;
  Gender gender = Gender::kUnknown;
  std::optional<Pose> pose;
};

struct Corpus {
  LandmarkSchema schema;
  std::vector<Portrait> portraits;
  std::filesystem::path manifest_path;
  std::vector<std::string> history;  // applied filters, in order

  std::size_t size() const { return portraits.size(); }
  bool empty() const { return portraits.empty(); }

  std::unordered_map<std::string, std::size_t> index_by_id() const {
    std::unordered_map<std::string, std::size_t> m;
    m.reserve(portraits.size());
    for (std::size_t i = 0; i < portraits.size(); ++i) m.emplace(portraits[i].id, i);
    return m;
  }
};

namespace detail {

inline Portrait parse_manifest_line(const std::string& line, std::size_t line_no,
                                    const std::filesystem::path& base,
                                    const LandmarkSchema& schema, bool load_image) {
  auto fail = [&](const std::string& msg) -> DataError {
    return DataError("manifest line " + std::to_string(line_no) + ": " + msg);
  };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw fail(std::string("invalid JSON: ") + e.what());
  }
  Portrait p;
  try {
    p.id = j.at("id").get<std::string>();
    const auto& year = j.at("year");
    if (year.is_number_integer()) {
      p.year = year.get<int>();
    } else if (year.is_string()) {
      const std::string s = year.get<std::string>();
      std::size_t pos = 0;
      try {
        p.year = std::stoi(s, &pos);
      } catch (...) {
        pos = 0;
      }
      if (pos == 0 || pos != s.size()) throw fail("non-numeric year '" + s + "'");
    } else {
      throw fail("non-numeric year");
    }
    p.school_id = j.value("school_id", std::string());
    p.state = j.value("state", std::string());
    p.gender = parse_gender(j.value("gender", std::string("?")));
    if (j.contains("pose") && !j.at("pose").is_null()) {
      const auto pose = j.at("pose").get<std::vector<double>>();
      if (pose.size() != 3) throw fail("pose must be [yaw, pitch, roll]");
      p.pose = Pose{pose[0], pose[1], pose[2]};
    }
    const auto flat = j.at("landmarks").get<std::vector<double>>();
    if (flat.size() % 2 != 0) throw fail("odd landmark coordinate count");
    if (static_cast<int>(flat.size() / 2) != schema.point_count)
      throw fail("landmark count " + std::to_string(flat.size() / 2) +
                 " does not match schema point_count " + std::to_string(schema.point_count));
    for (std::size_t i = 0; i < flat.size(); i += 2) {
      if (!std::isfinite(flat[i]) || !std::isfinite(flat[i + 1]))
        throw fail("non-finite landmark coordinate");
      p.landmarks.push_back({flat[i], flat[i + 1]});
    }
    const std::string rel = j.at("image_path").get<std::string>();
    p.image_path = base / rel;
  } catch (const DataError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw fail(e.what());
  }
  if (p.year < 1900 || p.year > 2100) throw fail("year " + std::to_string(p.year) + " out of range");
  if (load_image && !std::filesystem::exists(p.image_path))
    throw fail("missing image file " + p.image_path.string());
  return p;
}

}  // namespace detail

// Reads a JSON-lines manifest. Image decoding runs on `jobs` threads; the
// result keeps manifest order.
inline Corpus load_manifest(const std::filesystem::path& path, const LandmarkSchema& schema,
                            std::size_t jobs = 1) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest " + path.string());
  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  Corpus c;
  c.schema = schema;
  c.manifest_path = path;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::size_t> line_of;
  std::unordered_set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Portrait p = detail::parse_manifest_line(line, line_no, base, schema, true);
    if (!ids.insert(p.id).second)
      throw DataError("manifest line " + std::to_string(line_no) + ": duplicate id " + p.id);
    c.portraits.push_back(std::move(p));
    line_of.push_back(line_no);
  }
  parallel_for(c.portraits.size(), jobs, [&](std::size_t i) {
    try {
      c.portraits[i].image = read_image(c.portraits[i].image_path);
      c.portraits[i].image.clamp01();
    } catch (const DataError& e) {
      throw DataError("manifest line " + std::to_string(line_of[i]) + ": " + e.what());
    }
  });
  c.history.push_back("load " + path.string());
  return c;
}

// Emits a manifest whose image paths are relative to the manifest location.
inline void write_manifest(const Corpus& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  const auto base = std::filesystem::absolute(path).parent_path();
  for (const auto& p : c.portraits) {
    std::vector<double> flat;
    flat.reserve(p.landmarks.size() * 2);
    for (const auto& pt : p.landmarks) {
      flat.push_back(pt.x);
      flat.push_back(pt.y);
    }
    nlohmann::json j = {
        {"id", p.id},
        {"image_path",
         std::filesystem::relative(std::filesystem::absolute(p.image_path), base).generic_string()},
        {"year", p.year},
        {"school_id", p.school_id},
        {"state", p.state},
        {"gender", gender_code(p.gender)},
        {"landmarks", flat},
    };
    if (p.pose) j["pose"] = {p.pose->yaw, p.pose->pitch, p.pose->roll};
    out << j.dump() << '\n';
  }
}

// One labeled landmark set from an expression-intensity manifest, where the
// "level" key replaces "year". No image is required.
struct LevelSample {
  std::string id;
  int level = 0;
  std::vector<Point> landmarks;
};

inline std::vector<LevelSample> load_level_manifest(const std::filesystem::path& path,
                                                    const LandmarkSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read validation manifest " + path.string());
  std::vector<LevelSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      LevelSample s;
      s.id = j.at("id").get<std::string>();
      const auto& level = j.contains("level") ? j.at("level") : j.at("year");
      if (!level.is_number_integer())
        throw DataError("validation line " + std::to_string(line_no) + ": non-integer level");
      s.level = level.get<int>();
      const auto flat = j.at("landmarks").get<std::vector<double>>();
      if (static_cast<int>(flat.size()) != 2 * schema.point_count)
        throw DataError("validation line " + std::to_string(line_no) +
                        ": landmark count does not match schema");
      for (std::size_t i = 0; i < flat.size(); i += 2) s.landmarks.push_back({flat[i], flat[i + 1]});
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("validation line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline constexpr double kDefaultYawMax = 15.0;
inline constexpr double kDefaultPitchMax = 15.0;

// Keeps portraits without pose, or with |yaw| <= yaw_max and |pitch| <= pitch_max.
inline Corpus filter_frontal(const Corpus& c, double yaw_max = kDefaultYawMax,
                             double pitch_max = kDefaultPitchMax) {
  Corpus out;
  out.schema = c.schema;
  out.manifest_path = c.manifest_path;
  out.history = c.history;
  for (const auto& p : c.portraits) {
    if (!p.pose || (std::abs(p.pose->yaw) <= yaw_max && std::abs(p.pose->pitch) <= pitch_max))
      out.portraits.push_back(p);
  }
  std::ostringstream h;
  h << "filter_frontal yaw<=" << yaw_max << " pitch<=" << pitch_max << " kept "
    << out.portraits.size() << "/" << c.portraits.size();
  out.history.push_back(h.str());
  return out;
}

struct SplitSpec {
  std::vector<std::string> train_ids;  // corpus order
  std::vector<std::string> test_ids;   // corpus order
  std::vector<std::string> dropped_ids;  // eligible but too close to a same-school test portrait
  int year_lo = 0;
  int year_hi = 0;
  int separation_years = 0;
  std::uint64_t seed = 0;
  std::size_t eligible = 0;

  nlohmann::json to_json() const {
    return {{"train_ids", train_ids},   {"test_ids", test_ids},
            {"dropped_ids", dropped_ids}, {"year_lo", year_lo},
            {"year_hi", year_hi},       {"separation_years", separation_years},
            {"seed", seed},             {"eligible", eligible}};
  }

  static SplitSpec from_json(const nlohmann::json& j) {
    SplitSpec s;
    s.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    s.test_ids = j.at("test_ids").get<std::vector<std::string>>();
    s.dropped_ids = j.value("dropped_ids", std::vector<std::string>{});
    s.year_lo = j.at("year_lo").get<int>();
    s.year_hi = j.at("year_hi").get<int>();
    s.separation_years = j.at("separation_years").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.eligible = j.value("eligible", std::size_t{0});
    return s;
  }
};

// Same-school (test, train) id pairs closer than the separation.
inline std::vector<std::pair<std::string, std::string>> separation_violations(
    const Corpus& c, const std::vector<std::string>& train_ids,
    const std::vector<std::string>& test_ids, int separation_years) {
  const auto index = c.index_by_id();
  std::unordered_map<std::string, std::vector<std::size_t>> train_by_school;
  for (const auto& id : train_ids) {
    const auto it = index.find(id);
    if (it == index.end()) continue;
    train_by_school[c.portraits[it->second].school_id].push_back(it->second);
  }
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& id : test_ids) {
    const auto it = index.find(id);
    if (it == index.end()) continue;
    const Portrait& t = c.portraits[it->second];
    const auto s = train_by_school.find(t.school_id);
    if (s == train_by_school.end()) continue;
    for (std::size_t r : s->second)
      if (std::abs(c.portraits[r].year - t.year) < separation_years)
        out.emplace_back(t.id, c.portraits[r].id);
  }
  return out;
}

inline constexpr std::size_t kSplitSizeTolerance = 2;

namespace detail {

struct SplitAttempt {
  std::vector<char> in_test;  // per eligible index
  std::vector<char> dropped;
  std::size_t n_test = 0;
  std::size_t n_train = 0;
};

// Greedy school-level assignment: whole schools fill the test set (first
// only into years whose quota is still unmet, then any that fit), and a single school
// contributes a contiguous run of years from one end to hit the target
// exactly. Same-school train portraits within the separation are dropped.
inline SplitAttempt attempt_split(const std::vector<const Portrait*>& elig, std::size_t target,
                                  double test_frac, int separation, std::uint64_t seed) {
  const std::size_t n = elig.size();
  std::vector<std::string> school_order;
  std::unordered_map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) {
    auto [it, fresh] = members.try_emplace(elig[i]->school_id);
    if (fresh) school_order.push_back(elig[i]->school_id);
    it->second.push_back(i);
  }
  Rng rng(seed);
  rng.shuffle(school_order);

  std::map<int, std::size_t> year_count;
  for (const auto* p : elig) ++year_count[p->year];
  std::map<int, std::size_t> year_quota;
  for (auto [y, cnt] : year_count)
    year_quota[y] = static_cast<std::size_t>(std::llround(test_frac * static_cast<double>(cnt)));

  auto primary_year = [&](const std::vector<std::size_t>& m) {
    std::vector<int> ys;
    for (std::size_t i : m) ys.push_back(elig[i]->year);
    std::nth_element(ys.begin(), ys.begin() + ys.size() / 2, ys.end());
    return ys[ys.size() / 2];
  };

  SplitAttempt a;
  a.in_test.assign(n, 0);
  a.dropped.assign(n, 0);
  std::map<int, std::size_t> test_per_year;
  std::set<std::string> taken;
  auto take_school = [&](const std::string& s) {
    for (std::size_t i : members[s]) {
      a.in_test[i] = 1;
      ++test_per_year[elig[i]->year];
    }
    a.n_test += members[s].size();
    taken.insert(s);
  };
  for (const auto& s : school_order) {
    const auto& m = members[s];
    const int py = primary_year(m);
    if (a.n_test + m.size() <= target && test_per_year[py] < year_quota[py])
      take_school(s);
  }
  for (const auto& s : school_order) {
    if (taken.count(s)) continue;
    if (a.n_test + members[s].size() <= target) take_school(s);
  }

  const std::size_t remainder = target - a.n_test;
  if (remainder > 0) {
    struct Candidate {
      std::vector<std::size_t> chosen;
      std::size_t drops = SIZE_MAX;
    };
    Candidate best;
    for (const auto& s : school_order) {
      if (taken.count(s)) continue;
      auto m = members[s];
      std::stable_sort(m.begin(), m.end(),
                       [&](std::size_t x, std::size_t y) { return elig[x]->year < elig[y]->year; });
      for (int end = 0; end < 2; ++end) {
        std::vector<std::size_t> order = m;
        if (end == 1) {
          // latest years first, corpus order within a year
          std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            return elig[x]->year > elig[y]->year;
          });
        }
        if (order.size() < remainder) continue;
        std::vector<std::size_t> chosen(order.begin(), order.begin() + remainder);
        std::vector<int> years;
        for (std::size_t i : chosen) years.push_back(elig[i]->year);
        std::size_t drops = 0;
        std::vector<char> mark(n, 0);
        for (std::size_t i : chosen) mark[i] = 1;
        for (std::size_t i : m) {
          if (mark[i]) continue;
          for (int y : years)
            if (std::abs(elig[i]->year - y) < separation) {
              ++drops;
              break;
            }
        }
        if (drops < best.drops) best = {std::move(chosen), drops};
      }
    }
    // A drop-free test size within the size tolerance beats an exact size
    // that costs train portraits.
    if (best.drops > 0) {
      const double exact = test_frac * static_cast<double>(n);
      auto acceptable = [&](std::size_t total) {
        return total >= 1 && std::abs(static_cast<double>(total) - exact) <= kSplitSizeTolerance;
      };
      auto deviation = [&](std::size_t total) { return std::abs(static_cast<double>(total) - exact); };
      bool found = acceptable(a.n_test);
      double best_dev = found ? deviation(a.n_test) : 0.0;
      std::string best_school;
      for (const auto& s : school_order) {
        if (taken.count(s)) continue;
        const std::size_t total = a.n_test + members[s].size();
        if (!acceptable(total)) continue;
        if (!found || deviation(total) < best_dev) {
          found = true;
          best_dev = deviation(total);
          best_school = s;
        }
      }
      if (found) {
        best.chosen.clear();
        if (!best_school.empty()) take_school(best_school);
      }
    }
    for (std::size_t i : best.chosen) a.in_test[i] = 1;
    a.n_test += best.chosen.size();
  }

  // Drop same-school train portraits that sit inside a test portrait's window.
  std::unordered_map<std::string, std::vector<int>> test_years;
  for (std::size_t i = 0; i < n; ++i)
    if (a.in_test[i]) test_years[elig[i]->school_id].push_back(elig[i]->year);
  for (std::size_t i = 0; i < n; ++i) {
    if (a.in_test[i]) continue;
    const auto it = test_years.find(elig[i]->school_id);
    if (it == test_years.end()) {
      ++a.n_train;
      continue;
    }
    bool close = false;
    for (int y : it->second)
      if (std::abs(elig[i]->year - y) < separation) {
        close = true;
        break;
      }
    if (close)
      a.dropped[i] = 1;
    else
      ++a.n_train;
  }
  return a;
}

}  // namespace detail

inline constexpr double kDefaultTestFraction = 0.2;
inline constexpr int kDefaultSeparationYears = 10;

// Train/test split of portraits with year in [year_lo, year_hi] such that no
// same-school pair is closer than separation_years. The test set holds
// round(test_frac * eligible) portraits, or up to kSplitSizeTolerance fewer or
// more when that avoids dropping train portraits; train keeps every remaining
// portrait that does not conflict.
inline SplitSpec split_dating(const Corpus& c, double test_frac, int year_lo, int year_hi,
                              int separation_years, std::uint64_t seed) {
  if (!(test_frac > 0.0 && test_frac < 1.0)) throw ConfigError("test fraction must be in (0, 1)");
  if (year_lo > year_hi) throw ConfigError("split year range is empty");
  std::vector<const Portrait*> elig;
  for (const auto& p : c.portraits)
    if (p.year >= year_lo && p.year <= year_hi) elig.push_back(&p);
  if (elig.empty())
    throw DataError("no portraits in years " + std::to_string(year_lo) + "-" +
                    std::to_string(year_hi));
  const std::size_t n = elig.size();
  const auto target =
      static_cast<std::size_t>(std::llround(test_frac * static_cast<double>(n)));
  auto infeasible = [&](std::size_t best) {
    std::ostringstream msg;
    msg << "split infeasible: no test set of " << target << " of " << n
        << " portraits leaves a non-empty train set under " << separation_years
        << "-year school separation; best achievable test fraction "
        << static_cast<double>(best) / static_cast<double>(n);
    return InfeasibleError(msg.str());
  };
  if (target == 0 || target >= n) throw infeasible(0);

  auto a = detail::attempt_split(elig, target, test_frac, separation_years, seed);
  if (a.n_train == 0) {
    std::size_t best = 0;
    for (std::size_t t = target - 1; t >= 1; --t) {
      if (detail::attempt_split(elig, t, test_frac, separation_years, seed).n_train > 0) {
        best = t;
        break;
      }
    }
    throw infeasible(best);
  }
  SplitSpec s;
  s.year_lo = year_lo;
  s.year_hi = year_hi;
  s.separation_years = separation_years;
  s.seed = seed;
  s.eligible = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (a.in_test[i])
      s.test_ids.push_back(elig[i]->id);
    else if (a.dropped[i])
      s.dropped_ids.push_back(elig[i]->id);
    else
      s.train_ids.push_back(elig[i]->id);
  }
  return s;
}

struct CorpusStats {
  std::size_t total = 0;
  std::size_t female = 0;
  std::size_t male = 0;
  std::size_t unknown = 0;
  std::map<int, std::size_t> per_year;
  std::map<std::pair<int, std::string>, std::size_t> per_year_gender;  // gender code
  std::map<std::string, std::size_t> per_state;
  std::size_t schools = 0;
  std::size_t classes = 0;  // distinct (school, year)
  double mean_per_class = 0.0;

  // Percentages over portraits with known gender.
  double female_pct() const {
    const auto known = female + male;
    return known ? 100.0 * static_cast<double>(female) / static_cast<double>(known) : 0.0;
  }
  double male_pct() const {
    const auto known = female + male;
    return known ? 100.0 * static_cast<double>(male) / static_cast<double>(known) : 0.0;
  }

  nlohmann::json summary_json() const {
    return {{"total", total},
            {"female", female},
            {"male", male},
            {"unknown_gender", unknown},
            {"female_pct", female_pct()},
            {"male_pct", male_pct()},
            {"schools", schools},
            {"graduating_classes", classes},
            {"mean_portraits_per_class", mean_per_class}};
  }

  // section,key,gender,count
  void write_csv(std::ostream& out) const {
    out << "section,key,gender,count\n";
    for (const auto& [k, n] : per_year_gender)
      out << "year," << k.first << ',' << k.second << ',' << n << '\n';
    for (const auto& [state, n] : per_state)
      out << "state," << (state.empty() ? "-" : state) << ",," << n << '\n';
  }
};

inline CorpusStats corpus_stats(const Corpus& c) {
  CorpusStats s;
  std::set<std::string> schools;
  std::set<std::pair<std::string, int>> classes;
  for (const auto& p : c.portraits) {
    ++s.total;
    switch (p.gender) {
      case Gender::kFemale: ++s.female; break;
      case Gender::kMale: ++s.male; break;
      default: ++s.unknown; break;
    }
    ++s.per_year[p.year];
    ++s.per_year_gender[{p.year, gender_code(p.gender)}];
    ++s.per_state[p.state];
    schools.insert(p.school_id);
    classes.insert({p.school_id, p.year});
  }
  s.schools = schools.size();
  s.classes = classes.size();
  s.mean_per_class =
      classes.empty() ? 0.0 : static_cast<double>(s.total) / static_cast<double>(classes.size());
  return s;
}

}  // namespace portraitminer
