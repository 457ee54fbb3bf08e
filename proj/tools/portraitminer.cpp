#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "portraitminer/config.hpp"
#include "portraitminer/error.hpp"
#include "portraitminer/pipeline.hpp"

namespace pm = portraitminer;

int main(int argc, char** argv) {
  CLI::App app{"portraitminer: analysis pipeline for dated portrait collections"};
  app.footer("Precedence, lowest first: defaults, --config file, PORTRAITMINER_<KEY> environment\n"
             "variables ('.' becomes '_'), command-line flags, --set.\n\n" +
             pm::config_help());
  app.require_subcommand(1);

  std::string config_file, output_dir, manifest, schema;
  std::vector<std::string> assignments;
  long seed = 0;
  long jobs = 0;
  int decade = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "key = value config file");
    sub->add_option("--output-dir", output_dir, "artifact directory");
    sub->add_option("--manifest", manifest, "portrait manifest");
    sub->add_option("--schema", schema, "landmark schema");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--set", assignments, "override a config key (key=value), repeatable");
  };

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"ingest", "load and validate the corpus, write summary statistics"},
      {"align", "estimate the mean shape and warp every portrait to it"},
      {"composite", "per-decade, per-gender average faces"},
      {"smile", "lip-curvature trend over time"},
      {"mine", "discover distinctive styles of one decade"},
      {"date-train", "train the year classifier"},
      {"date-eval", "evaluate the trained year classifier"},
      {"all", "run every stage"}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub);
    if (name == "mine") sub->add_option("--decade", decade, "decade start year, e.g. 1960")->required();
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(pm::ExitCode::kConfig);
  }

  CLI::App* chosen = nullptr;
  for (auto* s : subs)
    if (s->parsed()) chosen = s;

  try {
    pm::PipelineConfig cfg;
    if (!config_file.empty()) cfg.load_file(config_file);
    cfg.load_env();
    if (!manifest.empty()) cfg.set("manifest", manifest);
    if (!schema.empty()) cfg.set("schema", schema);
    if (!output_dir.empty()) cfg.set("output_dir", output_dir);
    if (chosen->count("--seed")) cfg.set("seed", std::to_string(seed));
    if (chosen->count("--jobs")) cfg.set("jobs", std::to_string(jobs));
    if (chosen->get_name() == "mine") cfg.set("mine.decade", std::to_string(decade));
    for (const auto& a : assignments) cfg.set_assignment(a);

    pm::Pipeline pipeline(std::move(cfg));
    pipeline.run(chosen->get_name());
    return 0;
  } catch (const pm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return static_cast<int>(pm::ExitCode::kInternal);
  }
}
