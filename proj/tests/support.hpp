#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include "portraitminer/corpus.hpp"
#include "portraitminer/image_io.hpp"

namespace pmtest {

namespace pm = portraitminer;
namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "pm") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Four mouth roles on points 0..3, nothing else.
inline pm::LandmarkSchema mouth_schema(int point_count = 4) {
  pm::LandmarkSchema s;
  s.point_count = point_count;
  s.mouth_left_corner = 0;
  s.mouth_right_corner = 1;
  s.upper_lip_bottom = 2;
  s.lower_lip_top = 3;
  return s;
}

inline pm::Portrait make_portrait(const std::string& id, int year, const std::string& school,
                                  pm::Gender g = pm::Gender::kFemale) {
  pm::Portrait p;
  p.id = id;
  p.year = year;
  p.school_id = school;
  p.gender = g;
  p.landmarks = {{40, 100}, {80, 100}, {60, 98}, {60, 104}};
  return p;
}

// Corpus of `n` landmark-only portraits over random schools and years.
inline pm::Corpus random_corpus(std::mt19937_64& gen, std::size_t n, int schools, int year_lo,
                                int year_hi) {
  pm::Corpus c;
  c.schema = mouth_schema();
  std::uniform_int_distribution<int> school(0, schools - 1), year(year_lo, year_hi);
  for (std::size_t i = 0; i < n; ++i)
    c.portraits.push_back(make_portrait("r" + std::to_string(i), year(gen),
                                        "s" + std::to_string(school(gen))));
  return c;
}

inline void write_schema(const fs::path& p, const pm::LandmarkSchema& s) {
  std::ofstream(p) << s.to_json().dump(1) << '\n';
}

}  // namespace pmtest
