#pragma once

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "portraitminer/error.hpp"

namespace portraitminer {

struct ConfigKey {
  const char* key;
  const char* default_value;
  const char* help;
};

// Every recognized key with its default.
inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"manifest", "", "portrait manifest (JSON lines)"},
      {"schema", "", "landmark schema JSON"},
      {"output_dir", "portraitminer_out", "directory for all artifacts"},
      {"seed", "0", "single seed; subcomponents use fixed offsets from it"},
      {"jobs", "1", "worker threads for per-portrait stages"},
      {"ingest.yaw_max", "15", "frontal filter: max |yaw| in degrees (portraits without pose pass)"},
      {"ingest.pitch_max", "15", "frontal filter: max |pitch| in degrees"},
      {"align.width", "128", "canonical frame width"},
      {"align.height", "160", "canonical frame height"},
      {"align.max_iter", "20", "mean-shape iteration cap"},
      {"align.tol", "0.05", "mean-shape convergence tolerance, RMS px"},
      {"align.per_gender", "false", "separate mean shape per gender"},
      {"crop.x", "0", "face-and-hair region left"},
      {"crop.y", "0", "face-and-hair region top"},
      {"crop.width", "128", "face-and-hair region width"},
      {"crop.height", "144", "face-and-hair region height (frame minus 16 px clothing band)"},
      {"crop.out_width", "96", "analysis crop width after resampling"},
      {"crop.out_height", "96", "analysis crop height after resampling"},
      {"hog.cell_px", "8", "HOG cell size in pixels"},
      {"hog.orientations", "9", "unsigned orientation bins"},
      {"whitening.shrinkage", "auto", "ridge added to the covariance; auto = 0.01 * trace / d"},
      {"gender.infer", "false", "label unknown genders with a linear SVM on whitened HOG"},
      {"gender.C", "1.0", "SVM regularization for gender inference"},
      {"gender.epochs", "50", "SVM training epochs"},
      {"composite.min_count", "5", "smallest (decade, gender) group that gets a composite"},
      {"smile.bin_years", "10", "exemplar bin width in years"},
      {"smile.bin_origin", "1905", "first exemplar bin start year"},
      {"smile.validation_manifest", "", "optional expression-intensity manifest (level 0-5)"},
      {"mine.decade", "", "target decade for `mine`"},
      {"mine.decades", "", "comma-separated decades for `all` (empty = every decade with enough portraits)"},
      {"mine.gender", "female", "portraits mined: female, male or both"},
      {"mine.n_seeds", "200", "detectors seeded per decade"},
      {"mine.rounds", "3", "refinement rounds per detector"},
      {"mine.top_m", "5", "in-decade positives per refinement round"},
      {"mine.rank_top", "20", "top detections counted for discriminativeness"},
      {"mine.overlap_window", "60", "top detections compared when removing redundant clusters"},
      {"mine.overlap_max", "6", "a cluster sharing more portraits than this with kept clusters is removed"},
      {"mine.n_clusters", "4", "clusters reported per decade"},
      {"mine.display_k", "6", "members shown per cluster (one per graduating class)"},
      {"dating.year_lo", "1928", "first year class"},
      {"dating.year_hi", "2010", "last year class"},
      {"dating.min_per_year", "50", "minimum portraits per year (inclusive)"},
      {"dating.gender", "female", "portraits used for dating"},
      {"dating.test_frac", "0.2", "test fraction of the split window"},
      {"dating.split_year_lo", "1982", "split window start"},
      {"dating.split_year_hi", "2010", "split window end"},
      {"dating.separation_years", "10", "min same-school train/test year gap"},
      {"dating.median_filter", "false", "3x3 median filter on crops before HOG"},
      {"dating.mirror", "true", "mirror augmentation during training"},
      {"dating.test_manifest", "", "external test manifest for date-eval"},
      {"sgd.lr", "0.001", "base learning rate"},
      {"sgd.momentum", "0.9", "momentum"},
      {"sgd.gamma", "0.1", "learning-rate decay factor"},
      {"sgd.step_iters", "20000", "iterations between decays"},
      {"sgd.total_iters", "100000", "training iterations"},
      {"sgd.batch", "64", "minibatch size"},
      {"sgd.weight_decay", "0", "L2 weight decay"},
  };
  return keys;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string env_name(const std::string& key) {
  std::string out = "PORTRAITMINER_";
  for (char ch : key) out += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return out;
}

// Flat key/value configuration. Later layers win: defaults, config file,
// environment, command line.
class PipelineConfig {
 public:
  PipelineConfig() {
    for (const auto& k : config_keys()) values_[k.key] = k.default_value;
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  // `key=value` as given on the command line.
  void set_assignment(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + kv + "'");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }

  // `key = value` lines; `[section]` prefixes following keys with `section.`;
  // `#` starts a comment.
  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": bad section");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
      std::string key = trim(line.substr(0, eq));
      if (!section.empty()) key = section + "." + key;
      try {
        set(key, trim(line.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    // relative paths in a config file are relative to the file
    for (const char* key : {"manifest", "schema", "smile.validation_manifest", "dating.test_manifest"}) {
      auto& v = values_[key];
      if (!v.empty() && std::filesystem::path(v).is_relative()) {
        v = (path.parent_path() / v).lexically_normal().string();
      }
    }
  }

  void load_env() {
    for (const auto& k : config_keys())
      if (const char* v = std::getenv(env_name(k.key).c_str())) values_[k.key] = v;
  }

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  double num(const std::string& key) const {
    const std::string& s = str(key);
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " expects a number, got '" + s + "'");
    }
  }

  long integer(const std::string& key) const {
    const std::string& s = str(key);
    try {
      std::size_t pos = 0;
      const long v = std::stol(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " expects an integer, got '" + s + "'");
    }
  }

  long positive(const std::string& key) const {
    const long v = integer(key);
    if (v <= 0) throw ConfigError("config key " + key + " must be positive");
    return v;
  }

  bool flag(const std::string& key) const {
    const std::string& s = str(key);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off" || s.empty()) return false;
    throw ConfigError("config key " + key + " expects true/false, got '" + s + "'");
  }

  nlohmann::json snapshot() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
  }

  // Canonical "k=v;..." text of the selected keys, for cache stamps.
  std::string fingerprint(const std::vector<std::string>& prefixes) const {
    std::ostringstream out;
    for (const auto& [k, v] : values_)
      for (const auto& p : prefixes)
        if (k == p || k.rfind(p + ".", 0) == 0) {
          out << k << '=' << v << ';';
          break;
        }
    return out.str();
  }

 private:
  std::map<std::string, std::string> values_;
};

inline std::string config_help() {
  std::ostringstream out;
  out << "Configuration keys (config file `key = value` or `[section]`, env PORTRAITMINER_<KEY>, "
         "or --set key=value):\n";
  for (const auto& k : config_keys()) {
    out << "  " << k.key;
    for (std::size_t pad = std::string(k.key).size(); pad < 28; ++pad) out << ' ';
    out << "default '" << k.default_value << "'  " << k.help << '\n';
  }
  return out.str();
}

}  // namespace portraitminer
