#include <gtest/gtest.h>

#include <map>
#include <set>

#include "portraitminer/corpus.hpp"
#include "support.hpp"

using namespace pmtest;
using pm::Gender;

namespace {

// Writes `n` 4x4 PGM images plus a manifest; returns the manifest path.
fs::path write_small_manifest(const TempDir& dir, int n, int landmark_pairs = 4) {
  std::ofstream m(dir / "manifest.jsonl");
  for (int i = 0; i < n; ++i) {
    pm::Raster r(4, 4, static_cast<float>(i) / 10.0f);
    pm::write_pgm(dir / ("img" + std::to_string(i) + ".pgm"), r);
    nlohmann::json j = {{"id", "id" + std::to_string(i)},
                        {"image_path", "img" + std::to_string(i) + ".pgm"},
                        {"year", 1950 + i},
                        {"school_id", "s" + std::to_string(i % 2)},
                        {"state", i % 2 ? "NY" : "CA"},
                        {"gender", i % 2 ? "M" : "F"}};
    std::vector<double> flat;
    for (int k = 0; k < landmark_pairs; ++k) {
      flat.push_back(10 + k);
      flat.push_back(20 + k);
    }
    j["landmarks"] = flat;
    m << j.dump() << '\n';
  }
  return dir / "manifest.jsonl";
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const pm::Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(LoadManifest, KeepsManifestOrder) {
  TempDir dir;
  const auto path = write_small_manifest(dir, 3);
  const auto c = pm::load_manifest(path, mouth_schema());
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c.portraits[0].id, "id0");
  EXPECT_EQ(c.portraits[1].id, "id1");
  EXPECT_EQ(c.portraits[2].id, "id2");
  EXPECT_EQ(c.portraits[1].year, 1951);
  EXPECT_EQ(c.portraits[1].gender, Gender::kMale);
  EXPECT_EQ(c.portraits[1].state, "NY");
  EXPECT_FALSE(c.portraits[0].pose.has_value());
  EXPECT_EQ(c.portraits[2].landmarks[3], (pm::Point{13, 23}));
}

TEST(LoadManifest, ParallelDecodeKeepsOrder) {
  TempDir dir;
  const auto path = write_small_manifest(dir, 9);
  const auto a = pm::load_manifest(path, mouth_schema(), 1);
  const auto b = pm::load_manifest(path, mouth_schema(), 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.portraits[i].id, b.portraits[i].id);
    EXPECT_EQ(a.portraits[i].image, b.portraits[i].image);
  }
}

TEST(LoadManifest, LandmarkCountMismatchNamesLine) {
  TempDir dir;
  const auto path = write_small_manifest(dir, 3, 48);
  const auto msg = error_of([&] { pm::load_manifest(path, mouth_schema(49)); });
  EXPECT_NE(msg.find("line 1"), std::string::npos) << msg;
  EXPECT_NE(msg.find("48"), std::string::npos) << msg;
  EXPECT_THROW(pm::load_manifest(path, mouth_schema(49)), pm::DataError);
}

TEST(LoadManifest, MissingImageNamesLine) {
  TempDir dir;
  const auto path = write_small_manifest(dir, 3);
  fs::remove(dir / "img1.pgm");
  const auto msg = error_of([&] { pm::load_manifest(path, mouth_schema()); });
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("img1.pgm"), std::string::npos) << msg;
}

TEST(LoadManifest, NonNumericYearIsFatal) {
  TempDir dir;
  write_small_manifest(dir, 1);
  std::ofstream(dir / "bad.jsonl")
      << R"({"id":"a","image_path":"img0.pgm","year":"nineteen","landmarks":[0,0,1,1,2,2,3,3]})" << '\n';
  const auto msg = error_of([&] { pm::load_manifest(dir / "bad.jsonl", mouth_schema()); });
  EXPECT_NE(msg.find("non-numeric year"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 1"), std::string::npos) << msg;
}

TEST(LoadManifest, DuplicateIdRejected) {
  TempDir dir;
  write_small_manifest(dir, 1);
  const std::string line = R"({"id":"a","image_path":"img0.pgm","year":1950,"landmarks":[0,0,1,1,2,2,3,3]})";
  std::ofstream(dir / "dup.jsonl") << line << '\n' << line << '\n';
  EXPECT_THROW(pm::load_manifest(dir / "dup.jsonl", mouth_schema()), pm::DataError);
}

TEST(LoadManifest, EightBitEndpointsNormalize) {
  TempDir dir;
  {
    std::ofstream f(dir / "e.pgm", std::ios::binary);
    f << "P5\n2 1\n255\n";
    f.put(static_cast<char>(255));
    f.put(static_cast<char>(0));
  }
  const auto img = pm::read_image(dir / "e.pgm");
  EXPECT_EQ(img.at(0, 0), 1.0f);
  EXPECT_EQ(img.at(1, 0), 0.0f);
}

TEST(LoadManifest, ColorConvertsWithRec601Weights) {
  TempDir dir;
  {
    std::ofstream f(dir / "c.ppm", std::ios::binary);
    f << "P6\n3 1\n255\n";
    const unsigned char px[] = {255, 0, 0, 0, 255, 0, 0, 0, 255};
    f.write(reinterpret_cast<const char*>(px), sizeof px);
  }
  const auto img = pm::read_image(dir / "c.ppm");
  EXPECT_NEAR(img.at(0, 0), 0.299, 1e-6);
  EXPECT_NEAR(img.at(1, 0), 0.587, 1e-6);
  EXPECT_NEAR(img.at(2, 0), 0.114, 1e-6);
}

TEST(LoadManifest, SixteenBitPgmAndPngRoundTrip) {
  TempDir dir;
  pm::Raster r(3, 2);
  for (int i = 0; i < 6; ++i) r.pixels()[static_cast<std::size_t>(i)] = static_cast<float>(i * 13107) / 65535.0f;
  pm::write_pgm(dir / "w.pgm", r, true);
  const auto back = pm::read_image(dir / "w.pgm");
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(back.pixels()[i], r.pixels()[i], 1e-6);
  pm::write_png(dir / "w.png", r);
  const auto png = pm::read_image(dir / "w.png");
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(png.pixels()[i], r.pixels()[i], 0.5 / 255.0 + 1e-6);
}

TEST(LoadManifest, ReloadingEmittedManifestIsIdentical) {
  TempDir dir;
  const auto path = write_small_manifest(dir, 4);
  auto c = pm::load_manifest(path, mouth_schema());
  c.portraits[1].pose = pm::Pose{1.5, -2.25, 0.125};
  fs::create_directories(dir / "out");
  pm::write_manifest(c, dir / "out" / "m.jsonl");
  const auto d = pm::load_manifest(dir / "out" / "m.jsonl", mouth_schema());
  ASSERT_EQ(c.size(), d.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto &a = c.portraits[i], &b = d.portraits[i];
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.year, b.year);
    EXPECT_EQ(a.school_id, b.school_id);
    EXPECT_EQ(a.state, b.state);
    EXPECT_EQ(a.gender, b.gender);
    EXPECT_EQ(a.pose, b.pose);
    EXPECT_EQ(a.landmarks, b.landmarks);
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(fs::canonical(a.image_path), fs::canonical(b.image_path));
  }
}

TEST(Schema, RejectsOutOfRangeAndDuplicateRoles) {
  auto s = mouth_schema();
  s.lower_lip_top = 7;
  EXPECT_THROW(s.validate(), pm::ConfigError);
  s = mouth_schema();
  s.lower_lip_top = s.upper_lip_bottom;
  EXPECT_THROW(s.validate(), pm::ConfigError);
  s = mouth_schema(6);
  s.left_eye = {4};
  s.right_eye = {5};
  const auto back = pm::LandmarkSchema::from_json(s.to_json());
  EXPECT_EQ(back.point_count, 6);
  EXPECT_EQ(back.left_eye, std::vector<int>{4});
  EXPECT_EQ(back.mouth_right_corner, 1);
}

// ---- filter_frontal ----

namespace {
pm::Portrait posed(const std::string& id, double yaw, double pitch) {
  auto p = make_portrait(id, 1960, "s");
  p.pose = pm::Pose{yaw, pitch, 0.0};
  return p;
}
}  // namespace

TEST(FilterFrontal, FrontalKeptForAnyPositiveThreshold) {
  pm::Corpus c;
  c.portraits.push_back(posed("a", 0, 0));
  for (double t : {1e-6, 0.5, 15.0, 90.0}) EXPECT_EQ(pm::filter_frontal(c, t, t).size(), 1u);
}

TEST(FilterFrontal, YawBeyondThresholdRemoved) {
  pm::Corpus c;
  c.portraits.push_back(posed("a", 20, 0));
  EXPECT_EQ(pm::filter_frontal(c, 15, 15).size(), 0u);
  c.portraits[0].pose->yaw = -20;
  EXPECT_EQ(pm::filter_frontal(c, 15, 15).size(), 0u);
}

TEST(FilterFrontal, MatchesDirectPoseScan) {
  pm::Corpus c;
  const double poses[10][2] = {{0, 0}, {16, 0}, {3, -4}, {0, -15.5}, {15, 15},
                               {-14, 2}, {40, 40}, {1, 1}, {-15, -15}, {2, 9}};
  for (int i = 0; i < 10; ++i) c.portraits.push_back(posed("p" + std::to_string(i), poses[i][0], poses[i][1]));
  c.portraits.push_back(make_portrait("nopose", 1960, "s"));
  std::vector<std::string> expect;
  for (const auto& p : c.portraits)
    if (!p.pose || (std::abs(p.pose->yaw) <= 15 && std::abs(p.pose->pitch) <= 15)) expect.push_back(p.id);
  const auto f = pm::filter_frontal(c, 15, 15);
  std::vector<std::string> got;
  for (const auto& p : f.portraits) got.push_back(p.id);
  EXPECT_EQ(got, expect);
  EXPECT_EQ(got.size(), 8u);  // 7 posed survivors plus the pose-less portrait
}

TEST(FilterFrontal, Idempotent) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> ang(-30, 30);
  pm::Corpus c;
  for (int i = 0; i < 200; ++i) c.portraits.push_back(posed("p" + std::to_string(i), ang(gen), ang(gen)));
  const auto once = pm::filter_frontal(c, 12, 10);
  const auto twice = pm::filter_frontal(once, 12, 10);
  ASSERT_EQ(once.size(), twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(once.portraits[i].id, twice.portraits[i].id);
}

// ---- split_dating ----

namespace {

// Quadratic scan over every (test, train) pair.
std::size_t brute_force_violations(const pm::Corpus& c, const pm::SplitSpec& s) {
  std::map<std::string, const pm::Portrait*> by_id;
  for (const auto& p : c.portraits) by_id[p.id] = &p;
  std::size_t bad = 0;
  for (const auto& t : s.test_ids)
    for (const auto& r : s.train_ids) {
      const auto *a = by_id.at(t), *b = by_id.at(r);
      if (a->school_id == b->school_id && std::abs(a->year - b->year) < s.separation_years) ++bad;
    }
  return bad;
}

void expect_partition(const pm::Corpus& c, const pm::SplitSpec& s) {
  std::set<std::string> seen;
  for (const auto* v : {&s.train_ids, &s.test_ids, &s.dropped_ids})
    for (const auto& id : *v) EXPECT_TRUE(seen.insert(id).second) << "id in two sets: " << id;
  std::size_t eligible = 0;
  for (const auto& p : c.portraits)
    if (p.year >= s.year_lo && p.year <= s.year_hi) {
      ++eligible;
      EXPECT_TRUE(seen.count(p.id)) << p.id;
    }
  EXPECT_EQ(seen.size(), eligible);
  EXPECT_EQ(s.eligible, eligible);
}

}  // namespace

TEST(SplitDating, OneYearPerSchoolNeverBinds) {
  pm::Corpus c;
  int k = 0;
  for (int y = 1982; y <= 2010; ++y)
    for (int s = 0; s < 3; ++s)
      for (int i = 0; i < 4; ++i)
        c.portraits.push_back(make_portrait("p" + std::to_string(k++), y, "s" + std::to_string(y) + "_" + std::to_string(s)));
  const auto split = pm::split_dating(c, 0.2, 1982, 2010, 10, 11);
  EXPECT_LE(std::abs(static_cast<double>(split.test_ids.size()) - 0.2 * c.size()), 2.0);
  EXPECT_TRUE(split.dropped_ids.empty());
  std::map<int, std::size_t> per_year;
  std::map<std::string, int> year_of;
  for (const auto& p : c.portraits) year_of[p.id] = p.year;
  for (const auto& id : split.test_ids) ++per_year[year_of[id]];
  for (const auto& [y, n] : per_year) EXPECT_LE(n, 4u) << y;  // whole schools, at most one per year
  EXPECT_EQ(split.train_ids.size() + split.test_ids.size(), c.size());
  expect_partition(c, split);
}

TEST(SplitDating, TwoSchoolsExhaustivePairScan) {
  pm::Corpus c;
  int k = 0;
  for (int y = 1990; y <= 2000; ++y)
    for (int s = 0; s < 2; ++s)
      for (int i = 0; i < 5; ++i) c.portraits.push_back(make_portrait("p" + std::to_string(k++), y, "s" + std::to_string(s)));
  const auto split = pm::split_dating(c, 0.2, 1990, 2000, 10, 5);
  EXPECT_EQ(brute_force_violations(c, split), 0u);
  EXPECT_FALSE(split.train_ids.empty());
  EXPECT_NEAR(static_cast<double>(split.test_ids.size()), 0.2 * c.size(), 2.0);
  EXPECT_TRUE(pm::separation_violations(c, split.train_ids, split.test_ids, 10).empty());
  expect_partition(c, split);
}

TEST(SplitDating, SameSeedBitReproducible) {
  std::mt19937_64 gen(99);
  const auto c = random_corpus(gen, 500, 12, 1982, 2010);
  const auto a = pm::split_dating(c, 0.2, 1982, 2010, 10, 42);
  const auto b = pm::split_dating(c, 0.2, 1982, 2010, 10, 42);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  const auto d = pm::split_dating(c, 0.2, 1982, 2010, 10, 43);
  EXPECT_EQ(brute_force_violations(c, d), 0u);
}

TEST(SplitDating, JsonRoundTrip) {
  std::mt19937_64 gen(5);
  const auto c = random_corpus(gen, 100, 6, 1982, 2010);
  const auto a = pm::split_dating(c, 0.2, 1982, 2010, 10, 1);
  EXPECT_EQ(pm::SplitSpec::from_json(a.to_json()).to_json(), a.to_json());
}

TEST(SplitDating, RandomCorporaHoldInvariants) {
  std::mt19937_64 gen(2024);
  int feasible = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<int> size(20, 600), schools(1, 20);
    const auto c = random_corpus(gen, static_cast<std::size_t>(size(gen)), schools(gen), 1982, 2010);
    try {
      const auto s = pm::split_dating(c, 0.2, 1982, 2010, 10, static_cast<std::uint64_t>(trial));
      ++feasible;
      EXPECT_EQ(brute_force_violations(c, s), 0u) << "trial " << trial;
      EXPECT_LE(std::abs(static_cast<double>(s.test_ids.size()) - 0.2 * c.size()), 2.0) << "trial " << trial;
      EXPECT_FALSE(s.train_ids.empty());
      expect_partition(c, s);
    } catch (const pm::InfeasibleError&) {
    }
  }
  EXPECT_GT(feasible, 90);
}

TEST(SplitDating, SingleSchoolSingleYearIsInfeasible) {
  pm::Corpus c;
  for (int i = 0; i < 10; ++i) c.portraits.push_back(make_portrait("p" + std::to_string(i), 1990, "only"));
  try {
    pm::split_dating(c, 0.2, 1982, 2010, 10, 0);
    FAIL() << "expected infeasible";
  } catch (const pm::InfeasibleError& e) {
    EXPECT_NE(std::string(e.what()).find("best achievable test fraction"), std::string::npos);
    EXPECT_EQ(e.code(), pm::ExitCode::kInfeasible);
  }
}

TEST(SplitDating, RejectsBadFractionAndEmptyRange) {
  std::mt19937_64 gen(1);
  const auto c = random_corpus(gen, 50, 5, 1982, 2010);
  EXPECT_THROW(pm::split_dating(c, 0.0, 1982, 2010, 10, 0), pm::ConfigError);
  EXPECT_THROW(pm::split_dating(c, 1.0, 1982, 2010, 10, 0), pm::ConfigError);
  EXPECT_THROW(pm::split_dating(c, 0.2, 1900, 1910, 10, 0), pm::DataError);
}

// ---- corpus_stats ----

TEST(CorpusStats, EmptyCorpusAllZero) {
  const auto s = pm::corpus_stats(pm::Corpus{});
  EXPECT_EQ(s.total, 0u);
  EXPECT_EQ(s.female, 0u);
  EXPECT_EQ(s.male, 0u);
  EXPECT_EQ(s.unknown, 0u);
  EXPECT_TRUE(s.per_year.empty());
  EXPECT_EQ(s.female_pct(), 0.0);
  EXPECT_EQ(s.mean_per_class, 0.0);
}

TEST(CorpusStats, HandBuiltSixPortraitTally) {
  pm::Corpus c;
  c.portraits = {make_portrait("a", 1950, "x", Gender::kFemale), make_portrait("b", 1950, "x", Gender::kFemale),
                 make_portrait("c", 1950, "y", Gender::kMale),   make_portrait("d", 1960, "x", Gender::kMale),
                 make_portrait("e", 1960, "x", Gender::kFemale), make_portrait("f", 1960, "y", Gender::kUnknown)};
  c.portraits[0].state = c.portraits[1].state = c.portraits[3].state = "CA";
  c.portraits[2].state = "NY";
  const auto s = pm::corpus_stats(c);
  EXPECT_EQ(s.total, 6u);
  EXPECT_EQ(s.female, 3u);
  EXPECT_EQ(s.male, 2u);
  EXPECT_EQ(s.unknown, 1u);
  EXPECT_DOUBLE_EQ(s.female_pct(), 60.0);
  EXPECT_DOUBLE_EQ(s.male_pct(), 40.0);
  EXPECT_EQ(s.per_year.at(1950), 3u);
  EXPECT_EQ(s.per_year.at(1960), 3u);
  EXPECT_EQ((s.per_year_gender.at({1950, "F"})), 2u);
  EXPECT_EQ((s.per_year_gender.at({1960, "?"})), 1u);
  EXPECT_EQ(s.per_state.at("CA"), 3u);
  EXPECT_EQ(s.per_state.at("NY"), 1u);
  EXPECT_EQ(s.per_state.at(""), 2u);
  EXPECT_EQ(s.schools, 2u);
  EXPECT_EQ(s.classes, 4u);  // (x,1950) (y,1950) (x,1960) (y,1960)
  EXPECT_DOUBLE_EQ(s.mean_per_class, 1.5);
  std::ostringstream csv;
  s.write_csv(csv);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "section,key,gender,count");
  EXPECT_NE(csv.str().find("year,1950,F,2\n"), std::string::npos);
  EXPECT_NE(csv.str().find("state,NY,,1\n"), std::string::npos);
}
