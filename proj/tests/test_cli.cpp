#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cli_support.hpp"
#include "portraitminer/config.hpp"
#include "portraitminer/corpus.hpp"

using namespace pmtest;

namespace {

const std::string kCli = PM_CLI_PATH;
const std::string kFixture = PM_FIXTURE_PATH;

struct Row {
  std::string id;
  int year;
  pm::Gender gender;
  double degrees;
};

// Ten portraits with flat gray images; lip midpoint drop tan(θ) over a unit half-chord.
const std::vector<Row> kRows = {
    {"a", 1950, pm::Gender::kFemale, 10}, {"b", 1950, pm::Gender::kFemale, 20},
    {"c", 1950, pm::Gender::kMale, -5},   {"d", 1951, pm::Gender::kFemale, 30},
    {"e", 1951, pm::Gender::kMale, 0},    {"f", 1951, pm::Gender::kMale, 4},
    {"g", 1951, pm::Gender::kMale, 8},    {"h", 1960, pm::Gender::kFemale, 12},
    {"i", 1960, pm::Gender::kUnknown, 40}, {"j", 1960, pm::Gender::kFemale, 16},
};

void write_small_corpus(const fs::path& dir) {
  fs::create_directories(dir / "img");
  pm::Corpus c;
  c.schema = mouth_schema();
  for (const auto& r : kRows) {
    auto p = make_portrait(r.id, r.year, "s" + std::to_string(r.year), r.gender);
    const double h = std::tan(r.degrees * std::numbers::pi / 180);
    p.landmarks = {{10, 20}, {12, 20}, {11, 20 + h}, {11, 20 + h}};  // image y grows downward
    p.image_path = dir / "img" / (r.id + ".pgm");
    pm::write_pgm(p.image_path, pm::Raster(24, 24, 0.5f));
    c.portraits.push_back(p);
  }
  pm::write_manifest(c, dir / "manifest.jsonl");
  write_schema(dir / "schema.json", c.schema);
}

std::string base_args(const fs::path& dir, const fs::path& out) {
  return " --manifest '" + (dir / "manifest.jsonl").string() + "' --schema '" + (dir / "schema.json").string() +
         "' --output-dir '" + out.string() + "'";
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST(Cli, SmileTrendMatchesHandComputedRows) {
  TempDir t("cli_smile");
  write_small_corpus(t / "in");
  const auto r = run_shell(kCli + " smile" + base_args(t / "in", t / "out"), t.path());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto rows = read_csv(t / "out" / "smile" / "trend.csv");
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"year", "gender", "mean", "std", "count"}));
  struct Expect {
    int year;
    std::string gender;
    double mean, std;
    int count;
  };
  // sample standard deviations worked by hand: {10,20} -> sqrt(50); {0,4,8} -> 4; {12,16} -> sqrt(8)
  const std::vector<Expect> expect = {{1950, "female", 15, std::sqrt(50.0), 2}, {1950, "male", -5, 0, 1},
                                      {1951, "female", 30, 0, 1},               {1951, "male", 4, 4, 3},
                                      {1960, "female", 14, std::sqrt(8.0), 2}};
  for (std::size_t k = 0; k < expect.size(); ++k) {
    const auto& row = rows[k + 1];
    ASSERT_EQ(row.size(), 5u);
    EXPECT_EQ(std::stoi(row[0]), expect[k].year);
    EXPECT_EQ(row[1], expect[k].gender);
    EXPECT_NEAR(std::stod(row[2]), expect[k].mean, 1e-8);
    EXPECT_NEAR(std::stod(row[3]), expect[k].std, 1e-8);
    EXPECT_EQ(std::stoi(row[4]), expect[k].count);
  }
  EXPECT_TRUE(fs::exists(t / "out" / "smile" / "trend.svg"));
  EXPECT_TRUE(fs::exists(t / "out" / "run_manifest.json"));
}

TEST(Cli, DateEvalWithoutModelExitsDataError) {
  TempDir t("cli_noeval");
  write_small_corpus(t / "in");
  const auto r = run_shell(kCli + " date-eval" + base_args(t / "in", t / "out"), t.path());
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_NE(r.output.find("model.bin"), std::string::npos) << r.output;
}

TEST(Cli, ConfigErrorsExitTwo) {
  TempDir t("cli_cfg");
  write_small_corpus(t / "in");
  const std::string args = base_args(t / "in", t / "out");
  EXPECT_EQ(run_shell(kCli + " smile" + args + " --set no.such.key=1", t.path()).code, 2);
  EXPECT_EQ(run_shell(kCli + " smile" + args + " --set smile.bin_years=banana", t.path()).code, 2);
  EXPECT_EQ(run_shell(kCli + " smile" + args + " --set smile.bin_years=-3", t.path()).code, 2);
  EXPECT_EQ(run_shell(kCli + " smile" + args + " --bogus-flag", t.path()).code, 2);
  EXPECT_EQ(run_shell(kCli + " mine" + args, t.path()).code, 2);  // --decade is required
  EXPECT_EQ(run_shell(kCli + " smile" + args + " --config '" + (t / "missing.cfg").string() + "'", t.path()).code, 2);
}

TEST(Cli, MissingManifestPathIsConfigError) {
  TempDir t("cli_missing");
  write_small_corpus(t / "in");
  const auto r = run_shell(kCli + " smile --manifest '" + (t / "nope.jsonl").string() + "' --schema '" +
                               (t / "in" / "schema.json").string() + "' --output-dir '" + (t / "out").string() + "'",
                           t.path());
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("nope.jsonl"), std::string::npos);
}

TEST(Cli, PrecedenceFileThenEnvThenFlags) {
  TempDir t("cli_prec");
  write_small_corpus(t / "in");
  std::ofstream(t / "run.cfg") << "# exemplar bins\n[smile]\nbin_years = 20\n";
  const std::string args = base_args(t / "in", t / "out") + " --config '" + (t / "run.cfg").string() + "'";
  auto bin_of_h = [&] {
    for (const auto& row : read_csv(t / "out" / "smile" / "exemplars.csv"))
      if (row.size() > 2 && row[1] == "female" && (row[2] == "h" || row[2] == "j")) return std::stoi(row[0]);
    return -1;
  };
  ASSERT_EQ(run_shell(kCli + " smile" + args, t.path()).code, 0);
  EXPECT_EQ(bin_of_h(), 1945);  // 20-year bins from 1905
  ASSERT_EQ(run_shell("PORTRAITMINER_SMILE_BIN_YEARS=10 " + kCli + " smile" + args, t.path()).code, 0);
  EXPECT_EQ(bin_of_h(), 1955);
  ASSERT_EQ(run_shell("PORTRAITMINER_SMILE_BIN_YEARS=10 " + kCli + " smile" + args + " --set smile.bin_years=50",
                      t.path()).code, 0);
  EXPECT_EQ(bin_of_h(), 1955);  // 50-year bins from 1905: 1955-2004
  ASSERT_EQ(run_shell("PORTRAITMINER_SMILE_BIN_YEARS=10 " + kCli + " smile" + args + " --set smile.bin_origin=1900",
                      t.path()).code, 0);
  EXPECT_EQ(bin_of_h(), 1960);
}

TEST(Cli, HelpListsEveryKey) {
  TempDir t("cli_help");
  const auto r = run_shell(kCli + " --help", t.path());
  EXPECT_EQ(r.code, 0);
  for (const auto& k : pm::config_keys()) EXPECT_NE(r.output.find(k.key), std::string::npos) << k.key;
  EXPECT_NE(r.output.find("PORTRAITMINER_"), std::string::npos);
  for (const char* sub : {"ingest", "align", "composite", "smile", "mine", "date-train", "date-eval", "all"})
    EXPECT_NE(r.output.find(sub), std::string::npos) << sub;
}

TEST(Cli, AllIsByteReproducible) {
  TempDir t("cli_all");
  ASSERT_EQ(run_shell(kFixture + " '" + (t / "fx").string() + "'", t.path()).code, 0);
  const std::string args = " --manifest '" + (t / "fx" / "manifest.jsonl").string() + "' --schema '" +
                           (t / "fx" / "schema.json").string() + "'" + fixture_overrides();
  const auto a = run_shell(kCli + " all" + args + " --output-dir '" + (t / "a").string() + "'", t.path());
  ASSERT_EQ(a.code, 0) << a.output;
  const auto b = run_shell(kCli + " all" + args + " --jobs 2 --output-dir '" + (t / "b").string() + "'", t.path());
  ASSERT_EQ(b.code, 0) << b.output;
  auto sa = snapshot(t / "a"), sb = snapshot(t / "b");
  EXPECT_GT(sa.size(), 20u);
  sa.erase("run_manifest.json");
  sb.erase("run_manifest.json");
  ASSERT_EQ(sa.size(), sb.size());
  for (const auto& [name, body] : sa) {
    ASSERT_TRUE(sb.count(name)) << name;
    EXPECT_TRUE(body == sb.at(name)) << name;
  }
  for (const char* f : {"ingest/stats.csv", "smile/trend.csv", "dating/model.bin", "dating/eval_report.json",
                        "features/descriptors.bin", "composite"})
    EXPECT_TRUE(fs::exists(t / "a" / f)) << f;
  const auto manifest = nlohmann::json::parse(slurp(t / "a" / "run_manifest.json"));
  EXPECT_TRUE(manifest.contains("config"));
}

TEST(Config, LayersAndTypedAccess) {
  TempDir t("cfg");
  std::ofstream(t / "a.cfg") << "seed = 5\n[mine]\nn_seeds = 12 # trailing\n";
  pm::PipelineConfig c;
  c.load_file(t / "a.cfg");
  EXPECT_EQ(c.integer("seed"), 5);
  EXPECT_EQ(c.integer("mine.n_seeds"), 12);
  c.set_assignment("mine.n_seeds=30");
  EXPECT_EQ(c.integer("mine.n_seeds"), 30);
  EXPECT_THROW(c.set_assignment("unknown.key=3"), pm::ConfigError);
  EXPECT_THROW(c.set_assignment("missing_equals"), pm::ConfigError);
  EXPECT_EQ(pm::env_name("mine.n_seeds"), "PORTRAITMINER_MINE_N_SEEDS");
}
