#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "portraitminer/dating.hpp"
#include "support.hpp"

namespace pmtest {

// Female portraits whose descriptor is a noisy bump centred on the year's
// index, one school per (year, slot) so any split is feasible.
struct BarCorpus {
  pm::Corpus corpus;
  pm::Matrix descriptors;
  std::vector<int> mirror;  // identity: the bump has no handedness
};

inline BarCorpus bar_corpus(std::uint64_t seed, int year_lo, int years, int per_year, double noise = 0.3,
                            double width = 1.0, int schools_per_year = 4) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> g(0, noise);
  BarCorpus b;
  b.corpus.schema = mouth_schema();
  b.descriptors.resize(years * per_year, years);
  int row = 0;
  for (int y = 0; y < years; ++y)
    for (int k = 0; k < per_year; ++k, ++row) {
      const std::string school = "y" + std::to_string(year_lo + y) + "_" + std::to_string(k % schools_per_year);
      b.corpus.portraits.push_back(
          make_portrait("b" + std::to_string(100000 + row), year_lo + y, school, pm::Gender::kFemale));
      for (int d = 0; d < years; ++d)
        b.descriptors(row, d) = std::exp(-0.5 * std::pow((d - y) / width, 2)) + g(gen);
    }
  for (int d = 0; d < years; ++d) b.mirror.push_back(d);
  return b;
}

inline pm::DatingParams bar_params(int year_lo, int years, std::size_t min_per_year) {
  pm::DatingParams p;
  p.year_lo = year_lo;
  p.year_hi = year_lo + years - 1;
  p.split_year_lo = p.year_lo;
  p.split_year_hi = p.year_hi;
  p.min_per_year = min_per_year;
  p.seed = 3;
  return p;
}

inline pm::SoftmaxParams quick_softmax() {
  pm::SoftmaxParams s;
  s.lr = 0.05;
  s.step_iters = 5000;
  s.total_iters = 10000;
  s.seed = 1;
  return s;
}

}  // namespace pmtest
