#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>
#include <random>

#include "portraitminer/smile.hpp"
#include "support.hpp"

using namespace pmtest;
using pm::Gender;
using pm::Point;

namespace {

double curv(Point l, Point r, Point m) { return pm::lip_curvature(l, r, m, m); }

Point transform(Point p, double theta, double scale, double tx, double ty) {
  return {scale * (std::cos(theta) * p.x - std::sin(theta) * p.y) + tx,
          scale * (std::sin(theta) * p.x + std::cos(theta) * p.y) + ty};
}

pm::Corpus corpus_with(const std::vector<std::tuple<std::string, int, Gender>>& rows) {
  pm::Corpus c;
  c.schema = mouth_schema();
  for (const auto& [id, year, g] : rows) c.portraits.push_back(make_portrait(id, year, "s", g));
  return c;
}

}  // namespace

TEST(LipCurvature, CollinearIsZero) { EXPECT_EQ(curv({0, 0}, {2, 0}, {1, 0}), 0.0); }

TEST(LipCurvature, RightTriangleIs45) {
  EXPECT_NEAR(curv({0, 0}, {2, 0}, {1, 1}), 45.0, 1e-12);
  // separate inner-lip points whose midpoint is (1, 1)
  EXPECT_NEAR(pm::lip_curvature({0, 0}, {2, 0}, {1, 0.5}, {1, 1.5}), 45.0, 1e-12);
}

TEST(LipCurvature, ReflectionAcrossChordFlipsSign) {
  EXPECT_EQ(curv({0, 0}, {2, 0}, {1, -1}), -curv({0, 0}, {2, 0}, {1, 1}));
  EXPECT_EQ(curv({0, 0}, {5, 0}, {1.3, -0.7}), -curv({0, 0}, {5, 0}, {1.3, 0.7}));
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int t = 0; t < 200; ++t) {
    const Point l{u(gen), u(gen)}, r{u(gen), u(gen)}, m{u(gen), u(gen)};
    // reflect m across the line through l and r
    const double dx = r.x - l.x, dy = r.y - l.y, len2 = dx * dx + dy * dy;
    const double s = ((m.x - l.x) * dx + (m.y - l.y) * dy) / len2;
    const Point foot{l.x + s * dx, l.y + s * dy};
    const Point mr{2 * foot.x - m.x, 2 * foot.y - m.y};
    EXPECT_NEAR(curv(l, r, mr), -curv(l, r, m), 1e-9);
  }
}

TEST(LipCurvature, InvariantUnderRigidMotionAndScale) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(-1, 1);
  const Point l{40, 100}, r{80, 98}, up{60, 99}, lo{61, 106};
  const double ref = pm::lip_curvature(l, r, up, lo);
  for (int t = 0; t < 1000; ++t) {
    const double th = u(gen) * std::numbers::pi, s = 0.2 + 2 * std::abs(u(gen)), tx = 300 * u(gen), ty = 300 * u(gen);
    const double v = pm::lip_curvature(transform(l, th, s, tx, ty), transform(r, th, s, tx, ty),
                                       transform(up, th, s, tx, ty), transform(lo, th, s, tx, ty));
    ASSERT_NEAR(v, ref, 1e-9) << t;
  }
  EXPECT_NEAR(pm::lip_curvature(transform(l, 25 * std::numbers::pi / 180, 1, 0, 0),
                                transform(r, 25 * std::numbers::pi / 180, 1, 0, 0),
                                transform(up, 25 * std::numbers::pi / 180, 1, 0, 0),
                                transform(lo, 25 * std::numbers::pi / 180, 1, 0, 0)),
              ref, 1e-9);
}

TEST(LipCurvature, MonotoneInPerpendicularOffset) {
  double prev = -90;
  for (double h = -5; h <= 5; h += 0.25) {
    const double v = curv({0, 0}, {4, 0}, {1.5, h});
    EXPECT_GT(v, prev) << h;
    EXPECT_GT(v, -90);
    EXPECT_LT(v, 90);
    prev = v;
  }
}

TEST(LipCurvature, DegenerateInputsRejected) {
  EXPECT_THROW(curv({1, 1}, {1, 1}, {0, 3}), pm::DataError);
  EXPECT_THROW(curv({0, 0}, {2, 0}, {0, 0}), pm::DataError);
  EXPECT_THROW(curv({0, 0}, {2, 0}, {2, 0}), pm::DataError);
  EXPECT_THROW(curv({0, 0}, {2, 0}, {std::nan(""), 0}), pm::DataError);
}

TEST(LipCurvature, SchemaFormUsesNamedRoles) {
  auto s = mouth_schema(6);
  s.mouth_left_corner = 5;
  s.mouth_right_corner = 2;
  s.upper_lip_bottom = 0;
  s.lower_lip_top = 4;
  const std::vector<Point> lm = {{1, 0.5}, {9, 9}, {2, 0}, {9, 9}, {1, 1.5}, {0, 0}};
  EXPECT_NEAR(pm::lip_curvature(lm, s), 45.0, 1e-12);
  EXPECT_THROW(pm::lip_curvature(std::vector<Point>(3), s), pm::DataError);
}

// ---- trend ----

TEST(SmileTrend, SingleRecordGroupHasZeroStd) {
  const auto c = corpus_with({{"a", 1950, Gender::kFemale}});
  const auto t = pm::smile_trend(c, std::vector<pm::SmileRecord>{{"a", 3.5}});
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].stats.mean, 3.5);
  EXPECT_EQ(t.rows[0].stats.std, 0.0);
  EXPECT_EQ(t.rows[0].stats.count, 1u);
}

TEST(SmileTrend, TenAndTwenty) {
  const auto c = corpus_with({{"a", 1950, Gender::kMale}, {"b", 1950, Gender::kMale}});
  const auto t = pm::smile_trend(c, std::vector<pm::SmileRecord>{{"a", 10}, {"b", 20}});
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].stats.mean, 15.0);
  EXPECT_NEAR(t.rows[0].stats.std, 7.0711, 1e-4);
}

TEST(SmileTrend, MatchesTwoPassOracleAndIgnoresOrder) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> g(5, 4);
  pm::Corpus c;
  std::vector<pm::SmileRecord> recs;
  for (int i = 0; i < 1000; ++i) {
    const auto gender = i % 7 == 0 ? Gender::kUnknown : (i % 2 ? Gender::kFemale : Gender::kMale);
    c.portraits.push_back(make_portrait("p" + std::to_string(i), 1960 + i % 12, "s", gender));
    recs.push_back({"p" + std::to_string(i), g(gen)});
  }
  const auto t = pm::smile_trend(c, recs);
  std::size_t unknown = 0;
  for (const auto& p : c.portraits) unknown += p.gender == Gender::kUnknown;
  EXPECT_EQ(t.skipped_unknown, unknown);
  std::map<std::pair<int, Gender>, std::vector<long double>> oracle;
  for (int i = 0; i < 1000; ++i)
    if (c.portraits[i].gender != Gender::kUnknown)
      oracle[{c.portraits[i].year, c.portraits[i].gender}].push_back(recs[i].curvature);
  ASSERT_EQ(t.rows.size(), oracle.size());
  for (const auto& row : t.rows) {
    const auto& v = oracle.at({row.year, row.gender});
    long double s = 0;
    for (auto x : v) s += x;
    const long double mean = s / v.size();
    long double ss = 0;
    for (auto x : v) ss += (x - mean) * (x - mean);
    EXPECT_NEAR(row.stats.mean, static_cast<double>(mean), 1e-12);
    EXPECT_NEAR(row.stats.std, static_cast<double>(std::sqrt(ss / (v.size() - 1))), 1e-12);
    EXPECT_EQ(row.stats.count, v.size());
  }
  auto shuffled = recs;
  std::shuffle(shuffled.begin(), shuffled.end(), gen);
  const auto t2 = pm::smile_trend(c, shuffled);
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    EXPECT_EQ(t.rows[k].stats.mean, t2.rows[k].stats.mean);
    EXPECT_EQ(t.rows[k].stats.std, t2.rows[k].stats.std);
  }
}

TEST(SmileTrend, CsvLayout) {
  const auto c = corpus_with({{"a", 1950, Gender::kFemale}, {"b", 1950, Gender::kMale}, {"c", 1951, Gender::kFemale}});
  const auto t = pm::smile_trend(c, std::vector<pm::SmileRecord>{{"a", 1}, {"b", 2}, {"c", 3}});
  std::ostringstream out;
  t.write_csv(out);
  EXPECT_EQ(out.str(), "year,gender,mean,std,count\n1950,female,1,0,1\n1950,male,2,0,1\n1951,female,3,0,1\n");
  EXPECT_NE(pm::trend_svg(t).find("<svg"), std::string::npos);
}

TEST(SmileTrend, UnknownPortraitRejected) {
  const auto c = corpus_with({{"a", 1950, Gender::kFemale}});
  EXPECT_THROW(pm::smile_trend(c, std::vector<pm::SmileRecord>{{"zz", 1}}), pm::DataError);
}

// ---- exemplars ----

TEST(Exemplar, BinStartAnchoredAt1905) {
  EXPECT_EQ(pm::bin_start(1905, 10, 1905), 1905);
  EXPECT_EQ(pm::bin_start(1914, 10, 1905), 1905);
  EXPECT_EQ(pm::bin_start(1915, 10, 1905), 1915);
  EXPECT_EQ(pm::bin_start(1904, 10, 1905), 1895);
  EXPECT_EQ(pm::bin_start(2013, 10, 1905), 2005);
}

TEST(Exemplar, SinglePortraitBin) {
  const auto c = corpus_with({{"a", 1950, Gender::kFemale}});
  const auto e = pm::exemplar_nearest_mean(c, std::vector<pm::SmileRecord>{{"a", 7}});
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].portrait_id, "a");
  EXPECT_EQ(e[0].bin_start, 1945);
}

TEST(Exemplar, PicksValueNearestMean) {
  const auto c = corpus_with({{"a", 1950, Gender::kFemale}, {"b", 1951, Gender::kFemale}, {"c", 1952, Gender::kFemale}});
  const auto e = pm::exemplar_nearest_mean(c, std::vector<pm::SmileRecord>{{"a", 0}, {"b", 10}, {"c", 21}});
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].portrait_id, "b");
  EXPECT_NEAR(e[0].bin_mean, 31.0 / 3.0, 1e-12);
}

TEST(Exemplar, TiesGoToSmallestId) {
  const auto c = corpus_with({{"z", 1950, Gender::kMale}, {"m", 1951, Gender::kMale}, {"b", 1952, Gender::kMale}});
  const auto e = pm::exemplar_nearest_mean(c, std::vector<pm::SmileRecord>{{"z", 5}, {"m", 5}, {"b", 5}});
  EXPECT_EQ(e[0].portrait_id, "b");
}

TEST(Exemplar, MatchesExhaustiveScan) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(-20, 30);
  pm::Corpus c;
  std::vector<pm::SmileRecord> recs;
  for (int i = 0; i < 400; ++i) {
    c.portraits.push_back(make_portrait("p" + std::to_string(i), 1905 + i % 100, "s", i % 3 ? Gender::kFemale : Gender::kMale));
    recs.push_back({"p" + std::to_string(i), std::round(u(gen))});  // rounding forces ties
  }
  const auto got = pm::exemplar_nearest_mean(c, recs, 10, 1905);
  for (const auto& e : got) {
    std::vector<std::pair<std::string, double>> members;
    for (std::size_t i = 0; i < c.size(); ++i)
      if (c.portraits[i].gender == e.gender && (c.portraits[i].year - 1905) / 10 * 10 + 1905 == e.bin_start)
        members.emplace_back(c.portraits[i].id, recs[i].curvature);
    std::sort(members.begin(), members.end());
    long double s = 0;
    for (auto& m : members) s += m.second;
    const double mean = static_cast<double>(s / members.size());
    std::string best;
    double gap = 1e300;
    for (auto& [id, v] : members)
      if (std::abs(v - mean) < gap - 1e-12) {
        gap = std::abs(v - mean);
        best = id;
      }
    EXPECT_EQ(e.portrait_id, best) << e.bin_start;
    EXPECT_EQ(e.bin_count, members.size());
  }
  EXPECT_EQ(got.size(), 20u);
}

// ---- intensity validation ----

TEST(IntensityValidation, IdentityAndNegation) {
  std::vector<double> c;
  std::vector<int> l;
  for (int k = 0; k <= 5; ++k)
    for (int r = 0; r < 3; ++r) {
      c.push_back(k);
      l.push_back(k);
    }
  EXPECT_DOUBLE_EQ(pm::intensity_validation(c, l).spearman, 1.0);
  for (auto& v : c) v = -v;
  EXPECT_DOUBLE_EQ(pm::intensity_validation(c, l).spearman, -1.0);
}

TEST(IntensityValidation, NoisyMonotoneGenerator) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> g(0, 1);
  std::vector<double> c;
  std::vector<int> l;
  for (int k = 0; k <= 5; ++k)
    for (int r = 0; r < 500; ++r) {
      c.push_back(3.0 * k + g(gen));
      l.push_back(k);
    }
  const auto v = pm::intensity_validation(c, l);
  EXPECT_DOUBLE_EQ(v.spearman, 1.0);
  ASSERT_EQ(v.levels.size(), 6u);
  for (const auto& row : v.levels) {
    EXPECT_NEAR(row.stats.mean, 3.0 * row.level, 0.2);
    EXPECT_EQ(row.stats.count, 500u);
  }
  EXPECT_TRUE(v.missing_levels.empty());
}

TEST(IntensityValidation, MissingLevelsFlaggedAndRangeChecked) {
  const std::vector<double> c = {0, 1, 4};
  const std::vector<int> l = {0, 1, 4};
  const auto v = pm::intensity_validation(c, l);
  EXPECT_EQ(v.missing_levels, (std::vector<int>{2, 3, 5}));
  EXPECT_EQ(v.levels.size(), 3u);
  std::ostringstream out;
  v.write_csv(out);
  EXPECT_EQ(out.str(), "level,mean,std,count\n0,0,0,1\n1,1,0,1\n4,4,0,1\n");
  EXPECT_THROW(pm::intensity_validation(std::vector<double>{1.0}, std::vector<int>{6}), pm::DataError);
  EXPECT_THROW(pm::intensity_validation(std::vector<double>{1.0, 2.0}, std::vector<int>{1}), pm::DataError);
}

TEST(Spearman, TiesUseAverageRanks) {
  EXPECT_EQ(pm::average_ranks(std::vector<double>{3, 1, 3, 2}), (std::vector<double>{3.5, 1, 3.5, 2}));
  EXPECT_EQ(pm::spearman(std::vector<double>{1, 1}, std::vector<double>{1, 2}), 0.0);
}

TEST(FitLine, RecoversExactLine) {
  const std::vector<double> x = {0, 1, 2, 3}, y = {1, 3, 5, 7};
  const auto f = pm::fit_line(x, y);
  EXPECT_DOUBLE_EQ(f.slope, 2.0);
  EXPECT_DOUBLE_EQ(f.intercept, 1.0);
}
