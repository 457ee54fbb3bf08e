#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "portraitminer/error.hpp"
#include "portraitminer/synthetic.hpp"

namespace syn = portraitminer::synthetic;

int main(int argc, char** argv) {
  CLI::App app{"write a small synthetic portrait corpus"};
  std::string dir;
  syn::FixtureSpec spec;
  app.add_option("dir", dir, "output directory")->required();
  app.add_option("--year-lo", spec.year_lo);
  app.add_option("--year-hi", spec.year_hi);
  app.add_option("--per-year", spec.per_year_per_gender, "portraits per year and gender");
  app.add_option("--seed", spec.seed);
  bool no_pose = false;
  app.add_flag("--no-pose", no_pose, "omit pose fields");
  CLI11_PARSE(app, argc, argv);
  spec.with_pose = !no_pose;
  try {
    syn::write_fixture(dir, spec);
  } catch (const portraitminer::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  }
  std::cout << dir << "/manifest.jsonl\n" << dir << "/schema.json\n";
  return 0;
}
