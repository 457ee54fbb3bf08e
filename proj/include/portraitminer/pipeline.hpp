#pragma once

// Stage orchestration behind the command-line driver. Each stage writes its
// artifacts under the output directory together with a stamp.json holding
// the hash of everything it was computed from; later runs reuse a stage's
// artifacts only when that hash matches.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "portraitminer/align.hpp"
#include "portraitminer/classify.hpp"
#include "portraitminer/composite.hpp"
#include "portraitminer/config.hpp"
#include "portraitminer/corpus.hpp"
#include "portraitminer/dating.hpp"
#include "portraitminer/error.hpp"
#include "portraitminer/features.hpp"
#include "portraitminer/hash.hpp"
#include "portraitminer/image_io.hpp"
#include "portraitminer/modeseek.hpp"
#include "portraitminer/parallel.hpp"
#include "portraitminer/smile.hpp"

namespace portraitminer {

inline constexpr const char* kVersion = "0.1.0";

namespace fs = std::filesystem;

inline std::vector<Gender> parse_gender_set(const std::string& s) {
  if (s == "female" || s == "F") return {Gender::kFemale};
  if (s == "male" || s == "M") return {Gender::kMale};
  if (s == "both") return {Gender::kFemale, Gender::kMale};
  throw ConfigError("gender selection must be female, male or both, got '" + s + "'");
}

// 16-bit quantization matching the aligned cache, so a recomputed stage and a
// cached one produce identical downstream values.
inline void quantize16(Raster& r) {
  for (float& p : r.pixels()) p = static_cast<float>(std::round(std::clamp(p, 0.0f, 1.0f) * 65535.0) / 65535.0);
}

class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, std::ostream& log = std::cerr) : cfg_(std::move(cfg)), log_(log) {
    out_ = cfg_.str("output_dir");
    jobs_ = static_cast<std::size_t>(cfg_.positive("jobs"));
    seed_ = static_cast<std::uint64_t>(cfg_.integer("seed"));
    validate();
  }

  const fs::path& output_dir() const { return out_; }

  void run(const std::string& subcommand) {
    fs::create_directories(out_);
    if (subcommand == "ingest") ingest();
    else if (subcommand == "align") align();
    else if (subcommand == "composite") composite();
    else if (subcommand == "smile") smile();
    else if (subcommand == "mine") mine(static_cast<int>(cfg_.integer("mine.decade")));
    else if (subcommand == "date-train") date_train();
    else if (subcommand == "date-eval") date_eval();
    else if (subcommand == "all") all();
    else throw ConfigError("unknown subcommand '" + subcommand + "'");
    write_run_manifest(subcommand);
  }

  void ingest() {
    const Corpus& c = corpus();
    const auto stats = corpus_stats(c);
    const fs::path dir = out_ / "ingest";
    fs::create_directories(dir);
    {
      std::ofstream csv(dir / "stats.csv");
      stats.write_csv(csv);
    }
    auto summary = stats.summary_json();
    summary["loaded"] = loaded_count_;
    summary["frontal_kept"] = c.size();
    summary["history"] = c.history;
    write_json(dir / "summary.json", summary);
    note("ingest", std::to_string(c.size()) + " frontal portraits of " + std::to_string(loaded_count_) +
                       " (" + format_fixed(stats.female_pct(), 1) + "% female, " +
                       format_fixed(stats.male_pct(), 1) + "% male, " + std::to_string(stats.unknown) +
                       " unknown)");
  }

  void align() { aligned(); }

  void composite() {
    const Corpus& c = analysis_corpus();
    const auto report = decade_composites(c, aligned(), static_cast<std::size_t>(cfg_.positive("composite.min_count")));
    write_composites(out_ / "composite", report);
    note("composite", std::to_string(report.composites.size()) + " composites, " +
                          std::to_string(report.skipped.size()) + " sparse groups skipped, " +
                          std::to_string(report.unknown_gender) + " unknown-gender portraits skipped");
  }

  void smile() {
    const Corpus& c = analysis_corpus();
    const fs::path dir = out_ / "smile";
    fs::create_directories(dir);
    const auto records = smile_records(c);
    {
      std::ofstream out(dir / "records.csv");
      out.precision(12);
      out << "portrait_id,curvature_deg\n";
      for (const auto& r : records) out << r.portrait_id << ',' << r.curvature << '\n';
    }
    const auto trend = smile_trend(c, records);
    {
      std::ofstream out(dir / "trend.csv");
      trend.write_csv(out);
    }
    std::ofstream(dir / "trend.svg") << trend_svg(trend);
    const auto exemplars = exemplar_nearest_mean(c, records, static_cast<int>(cfg_.positive("smile.bin_years")),
                                                 static_cast<int>(cfg_.integer("smile.bin_origin")));
    {
      std::ofstream out(dir / "exemplars.csv");
      out.precision(12);
      out << "bin_start,gender,portrait_id,curvature_deg,bin_mean,bin_count\n";
      for (const auto& e : exemplars)
        out << e.bin_start << ',' << gender_name(e.gender) << ',' << e.portrait_id << ',' << e.curvature
            << ',' << e.bin_mean << ',' << e.bin_count << '\n';
    }
    std::string extra;
    if (const auto& vpath = cfg_.str("smile.validation_manifest"); !vpath.empty()) {
      const auto samples = load_level_manifest(vpath, c.schema);
      std::vector<double> curv;
      std::vector<int> levels;
      for (const auto& s : samples) {
        curv.push_back(lip_curvature(s.landmarks, c.schema));
        levels.push_back(s.level);
      }
      const auto v = intensity_validation(curv, levels);
      std::ofstream out(dir / "validation.csv");
      v.write_csv(out);
      nlohmann::json j = {{"spearman", v.spearman}, {"missing_levels", v.missing_levels}, {"samples", samples.size()}};
      write_json(dir / "validation.json", j);
      extra = ", validation spearman " + format_fixed(v.spearman, 3);
      if (!v.missing_levels.empty()) warn("smile", "validation levels without samples were omitted");
    }
    note("smile", std::to_string(trend.rows.size()) + " trend rows, " + std::to_string(exemplars.size()) +
                      " exemplars, " + std::to_string(trend.skipped_unknown) + " unknown-gender skipped" + extra);
  }

  void mine(int decade) {
    if (decade_of(decade) != decade) throw ConfigError("mine.decade must be a decade start year (e.g. 1960)");
    const Corpus& c = analysis_corpus();
    const auto& desc = descriptors();
    const MiningSet set = make_mining_set(c, desc.descriptors, parse_gender_set(cfg_.str("mine.gender")));
    const ModeSeekParams p = mine_params();
    auto clusters = mine_decade_styles(set, decade, whitening(), p);

    std::vector<Raster> set_crops;
    const auto index = c.index_by_id();
    for (const auto& id : set.ids) set_crops.push_back(crops()[index.at(id)]);
    const fs::path dir = out_ / "mine" / std::to_string(decade);
    fs::create_directories(dir);
    std::vector<Raster> rows;
    for (std::size_t k = 0; k < clusters.size(); ++k) {
      std::string warning;
      const auto sheet = render_cluster(clusters[k], set, set_crops, p.display_k, p.overlap_window, &warning);
      if (!warning.empty()) warn("mine", warning);
      write_png(dir / ("cluster_" + std::to_string(k) + ".png"), sheet.sheet);
      write_model(dir / ("detector_" + std::to_string(k) + ".model"), clusters[k].detector);
      rows.push_back(sheet.sheet);
    }
    if (!rows.empty()) write_png(dir / "contact_sheet.png", stack_rows(rows));
    write_json(dir / "report.json", cluster_report(decade, clusters, set, p));
    note("mine", "decade " + std::to_string(decade) + ": " + std::to_string(clusters.size()) + " clusters");
  }

  void mine_all() {
    const Corpus& c = analysis_corpus();
    std::vector<int> decades;
    if (const auto& list = cfg_.str("mine.decades"); !list.empty()) {
      std::stringstream ss(list);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!trim(item).empty()) decades.push_back(std::stoi(trim(item)));
    } else {
      const auto genders = parse_gender_set(cfg_.str("mine.gender"));
      std::map<int, std::size_t> counts;
      for (const auto& p : c.portraits)
        if (std::find(genders.begin(), genders.end(), p.gender) != genders.end()) ++counts[decade_of(p.year)];
      const auto need = static_cast<std::size_t>(cfg_.positive("mine.n_seeds"));
      for (auto [d, n] : counts) {
        if (n >= need)
          decades.push_back(d);
        else
          note("mine", "decade " + std::to_string(d) + " skipped (" + std::to_string(n) + " portraits < " +
                           std::to_string(need) + " seeds)");
      }
    }
    for (int d : decades) mine(d);
  }

  void date_train() {
    const DatingTask& task = dating_task();
    const fs::path dir = out_ / "dating";
    fs::create_directories(dir);
    write_json(dir / "split.json", task.split.to_json());
    const auto model = train_dating(task, sgd_params(), cfg_.flag("dating.mirror"));
    write_model(dir / "model.bin", model);
    write_json(dir / "stamp.json", {{"key", dating_key()}});
    note("date-train", "trained " + std::to_string(task.classes) + "-way model on " +
                           std::to_string(task.train_rows.size()) + " portraits (" +
                           std::to_string(task.test_rows.size()) + " held out, " +
                           std::to_string(task.split.dropped_ids.size()) + " dropped for separation)");
  }

  void date_eval() {
    const fs::path dir = out_ / "dating";
    const fs::path model_path = dir / "model.bin";
    if (!fs::exists(model_path))
      throw DataError("no trained dating model at " + model_path.string() + "; run date-train first");
    if (read_stamp(dir / "stamp.json") != dating_key())
      throw DataError("dating model at " + model_path.string() +
                      " was trained from different inputs or settings; rerun date-train");
    const LinearModel model = read_model(model_path);
    const DatingTask& task = dating_task();
    const auto report = evaluate(model, task);
    write_eval(dir, "", report);
    std::ostringstream table;
    table << "Model | Accuracy | L1 Mean | L1 Med\n"
          << "Chance | " << EvalReport::format_percent(report.chance) << " | - | -\n"
          << "Linear softmax (whitened HOG) | " << EvalReport::format_percent(report.accuracy) << " | "
          << format_fixed(report.l1_mean, 2) << " [yr] | " << format_fixed(report.l1_median, 0) << " [yr]\n";
    std::ofstream(dir / "eval_table.txt") << table.str();
    log_ << table.str();
    if (const auto& ext = cfg_.str("dating.test_manifest"); !ext.empty()) {
      const auto ext_report = evaluate_external_manifest(model, task, ext);
      write_eval(dir, "external_", ext_report);
      note("date-eval", "external set: accuracy " + EvalReport::format_percent(ext_report.accuracy) +
                            ", L1 median " + format_fixed(ext_report.l1_median, 0));
    }
  }

  void all() {
    ingest();
    align();
    composite();
    smile();
    mine_all();
    date_train();
    date_eval();
  }

  void write_run_manifest(const std::string& subcommand) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::ostringstream ts;
    ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
    nlohmann::json inputs = nlohmann::json::object();
    if (!cfg_.str("manifest").empty()) {
      inputs["manifest"] = sha256_file(cfg_.str("manifest"));
      inputs["schema"] = sha256_file(cfg_.str("schema"));
      if (corpus_) inputs["corpus"] = corpus_hash();
    }
    const nlohmann::json j = {
        {"subcommand", subcommand},
        {"timestamp", ts.str()},
        {"config", cfg_.snapshot()},
        {"inputs", inputs},
        {"versions",
         {{"portraitminer", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"libpng", PNG_LIBPNG_VER_STRING},
          {"compiler", __VERSION__}}}};
    write_json(out_ / "run_manifest.json", j);
  }

 private:
  void validate() const {
    for (const char* key : {"align.width", "align.height", "align.max_iter", "crop.width", "crop.height",
                            "crop.out_width", "crop.out_height", "hog.cell_px", "hog.orientations",
                            "composite.min_count", "mine.n_seeds", "mine.top_m", "mine.rank_top",
                            "mine.overlap_window", "mine.n_clusters", "mine.display_k", "dating.min_per_year",
                            "sgd.step_iters", "sgd.batch", "gender.epochs"})
      (void)cfg_.positive(key);
    if (cfg_.integer("mine.rounds") < 0 || cfg_.integer("mine.overlap_max") < 0 || cfg_.integer("sgd.total_iters") < 0)
      throw ConfigError("mine.rounds, mine.overlap_max and sgd.total_iters must be non-negative");
    const double frac = cfg_.num("dating.test_frac");
    if (!(frac > 0 && frac < 1)) throw ConfigError("dating.test_frac must be in (0, 1)");
    if (cfg_.num("sgd.lr") <= 0 || cfg_.num("sgd.momentum") < 0 || cfg_.num("sgd.momentum") >= 1)
      throw ConfigError("sgd.lr must be positive and sgd.momentum in [0, 1)");
    if (cfg_.num("align.tol") <= 0) throw ConfigError("align.tol must be positive");
    if (cfg_.num("ingest.yaw_max") < 0 || cfg_.num("ingest.pitch_max") < 0)
      throw ConfigError("frontal thresholds must be non-negative");
    if (cfg_.str("whitening.shrinkage") != "auto" && cfg_.num("whitening.shrinkage") < 0)
      throw ConfigError("whitening.shrinkage must be 'auto' or non-negative");
    if (cfg_.flag("align.per_gender") && cfg_.flag("gender.infer"))
      throw ConfigError("align.per_gender and gender.infer cannot be combined");
    const CropParams crop = crop_params();
    if (crop.region.x < 0 || crop.region.y < 0 || crop.region.x + crop.region.width > cfg_.integer("align.width") ||
        crop.region.y + crop.region.height > cfg_.integer("align.height"))
      throw ConfigError("crop region lies outside the canonical frame");
    (void)parse_gender_set(cfg_.str("mine.gender"));
    (void)parse_gender(cfg_.str("dating.gender"));
    for (const char* key : {"manifest", "schema", "smile.validation_manifest", "dating.test_manifest"}) {
      const auto& v = cfg_.str(key);
      if (!v.empty() && !fs::exists(v)) throw ConfigError("config key " + std::string(key) + ": no such file " + v);
    }
  }

  void require_inputs() const {
    if (cfg_.str("manifest").empty()) throw ConfigError("no manifest configured (set manifest or --manifest)");
    if (cfg_.str("schema").empty()) throw ConfigError("no landmark schema configured (set schema or --schema)");
  }

  // ---- shared state, computed on first use ----

  const Corpus& corpus() {
    if (!corpus_) {
      require_inputs();
      const auto schema = LandmarkSchema::load(cfg_.str("schema"));
      Corpus raw = load_manifest(cfg_.str("manifest"), schema, jobs_);
      loaded_count_ = raw.size();
      corpus_ = filter_frontal(raw, cfg_.num("ingest.yaw_max"), cfg_.num("ingest.pitch_max"));
      if (corpus_->empty()) throw DataError("no portraits survive the frontal filter");
    }
    return *corpus_;
  }

  // Corpus with inferred genders when gender.infer is set.
  const Corpus& analysis_corpus() {
    if (!cfg_.flag("gender.infer")) return corpus();
    if (!labeled_) labeled_ = infer_genders();
    return *labeled_;
  }

  Corpus infer_genders() {
    Corpus c = corpus();
    const auto& desc = descriptors();
    const Matrix Xw = whiten_rows(whitening(), desc.descriptors);
    std::vector<Eigen::Index> f, m, u;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const auto g = c.portraits[i].gender;
      (g == Gender::kFemale ? f : g == Gender::kMale ? m : u).push_back(static_cast<Eigen::Index>(i));
    }
    if (u.empty()) return c;
    if (f.empty() || m.empty()) {
      warn("gender", "cannot infer genders without labeled portraits of both genders");
      return c;
    }
    SvmParams p;
    p.C = cfg_.num("gender.C");
    p.epochs = static_cast<int>(cfg_.positive("gender.epochs"));
    p.seed = seed_ + seed_offset::kGender;
    const auto svm = train_svm(Xw(f, Eigen::all), Xw(m, Eigen::all), p);
    for (auto i : u)
      c.portraits[static_cast<std::size_t>(i)].gender =
          svm.decision(Xw.row(i).transpose()) >= 0 ? Gender::kFemale : Gender::kMale;
    c.history.push_back("gender.infer labeled " + std::to_string(u.size()) + " portraits");
    note("gender", "labeled " + std::to_string(u.size()) + " unknown-gender portraits with a linear SVM");
    return c;
  }

  std::string corpus_hash() {
    if (corpus_hash_.empty()) {
      Sha256 h;
      h.update_file(cfg_.str("manifest")).update_file(cfg_.str("schema"));
      h.update(cfg_.fingerprint({"ingest"}));
      for (const auto& p : corpus().portraits) h.update(p.id).update_file(p.image_path);
      corpus_hash_ = h.hex();
    }
    return corpus_hash_;
  }

  std::string align_key() { return sha256_text(corpus_hash() + cfg_.fingerprint({"align"})); }
  std::string feature_key() { return sha256_text(align_key() + cfg_.fingerprint({"crop", "hog"})); }
  std::string dating_key() {
    return sha256_text(feature_key() + cfg_.fingerprint({"dating", "sgd", "whitening", "seed", "gender"}));
  }

  CanonicalFrame frame() const {
    return {static_cast<int>(cfg_.integer("align.width")), static_cast<int>(cfg_.integer("align.height"))};
  }

  CropParams crop_params() const {
    return {{static_cast<int>(cfg_.integer("crop.x")), static_cast<int>(cfg_.integer("crop.y")),
             static_cast<int>(cfg_.integer("crop.width")), static_cast<int>(cfg_.integer("crop.height"))},
            static_cast<int>(cfg_.integer("crop.out_width")),
            static_cast<int>(cfg_.integer("crop.out_height"))};
  }

  HogParams hog_params() const {
    return {static_cast<int>(cfg_.integer("hog.cell_px")), static_cast<int>(cfg_.integer("hog.orientations"))};
  }

  const std::vector<Raster>& aligned() {
    if (aligned_) return *aligned_;
    const Corpus& c = corpus();
    const fs::path dir = out_ / "align";
    const fs::path cache = dir / "aligned";
    const std::string key = align_key();
    std::vector<Raster> rasters(c.size());
    if (read_stamp(dir / "stamp.json") == key) {
      mean_shapes_ = read_mean_shapes(dir / "mean_shape.json");
      parallel_for(c.size(), jobs_, [&](std::size_t i) { rasters[i] = read_aligned(cache, c.portraits[i].id); });
      note("align", "reused aligned cache for " + std::to_string(c.size()) + " portraits");
      aligned_ = std::move(rasters);
      return *aligned_;
    }
    const int max_iter = static_cast<int>(cfg_.positive("align.max_iter"));
    const double tol = cfg_.num("align.tol");
    mean_shapes_.clear();
    mean_shapes_["global"] = compute_mean_shape(c, frame(), max_iter, tol, {}, jobs_);
    if (cfg_.flag("align.per_gender")) {
      for (Gender g : {Gender::kFemale, Gender::kMale}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < c.size(); ++i)
          if (c.portraits[i].gender == g) members.push_back(i);
        if (!members.empty()) mean_shapes_[gender_name(g)] = compute_mean_shape(c, frame(), max_iter, tol, members, jobs_);
      }
    }
    if (mean_shapes_["global"].skipped > 0)
      warn("align", std::to_string(mean_shapes_["global"].skipped) + " portraits with degenerate landmarks skipped");
    std::vector<AlignedPortrait> out(c.size());
    parallel_for(c.size(), jobs_, [&](std::size_t i) {
      const auto& p = c.portraits[i];
      const MeanShape& m = mean_shape_for(p.gender);
      try {
        out[i] = warp_to_mean(p, m);
      } catch (const NumericError&) {
        // degenerate landmarks: keep a flat frame so indices stay aligned
        out[i].raster = Raster(m.frame.width, m.frame.height, static_cast<float>(p.image.mean()));
        out[i].residual = std::numeric_limits<double>::quiet_NaN();
      }
      quantize16(out[i].raster);
    });
    fs::create_directories(dir);
    std::vector<std::string> ids;
    for (const auto& p : c.portraits) ids.push_back(p.id);
    write_aligned_cache(cache, ids, out);
    nlohmann::json shapes = nlohmann::json::object();
    for (const auto& [name, m] : mean_shapes_) shapes[name] = m.to_json();
    write_json(dir / "mean_shape.json", shapes);
    write_json(dir / "stamp.json", {{"key", key}});
    for (std::size_t i = 0; i < c.size(); ++i) rasters[i] = std::move(out[i].raster);
    note("align", "aligned " + std::to_string(c.size()) + " portraits in " +
                      std::to_string(mean_shapes_["global"].iterations_run) + " mean-shape iterations (delta " +
                      format_fixed(mean_shapes_["global"].final_delta, 4) + " px)");
    aligned_ = std::move(rasters);
    return *aligned_;
  }

  const MeanShape& mean_shape_for(Gender g) {
    const auto it = mean_shapes_.find(gender_name(g));
    return it != mean_shapes_.end() ? it->second : mean_shapes_.at("global");
  }

  static std::map<std::string, MeanShape> read_mean_shapes(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw DataError("missing mean shape " + p.string());
    std::map<std::string, MeanShape> out;
    for (const auto& [name, j] : nlohmann::json::parse(in).items()) out[name] = MeanShape::from_json(j);
    return out;
  }

  const std::vector<Raster>& crops() {
    if (!crops_) {
      const auto& al = aligned();
      const CropParams cp = crop_params();
      const MeanShape& m = mean_shapes_.at("global");
      std::vector<Raster> out(al.size());
      parallel_for(al.size(), jobs_, [&](std::size_t i) { out[i] = face_hair_crop(al[i], m, cp); });
      crops_ = std::move(out);
    }
    return *crops_;
  }

  static Matrix descriptor_matrix(const std::vector<Raster>& images, const HogParams& hp, std::size_t jobs,
                                  HogGeometry* geometry) {
    if (images.empty()) throw DataError("no images to describe");
    const HogGeometry g = hog_geometry(images.front().width(), images.front().height(), hp);
    Matrix X(static_cast<Eigen::Index>(images.size()), g.dim());
    parallel_for(images.size(), jobs, [&](std::size_t i) {
      // float32 round trip so fresh and cached descriptors agree exactly
      X.row(static_cast<Eigen::Index>(i)) = hog(images[i], hp).values.cast<float>().cast<double>().transpose();
    });
    if (geometry) *geometry = g;
    return X;
  }

  const DescriptorCache& descriptors() {
    if (descriptors_) return *descriptors_;
    const Corpus& c = corpus();
    const fs::path dir = out_ / "features";
    const std::string key = feature_key();
    if (read_stamp(dir / "stamp.json") == key) {
      descriptors_ = read_descriptor_cache(dir / "descriptors");
      if (descriptors_->ids.size() == c.size()) {
        note("features", "reused descriptor cache");
        return *descriptors_;
      }
    }
    DescriptorCache d;
    for (const auto& p : c.portraits) d.ids.push_back(p.id);
    d.descriptors = descriptor_matrix(crops(), hog_params(), jobs_, &d.geometry);
    fs::create_directories(dir);
    write_descriptor_cache(dir / "descriptors", d);
    write_json(dir / "stamp.json", {{"key", key}});
    note("features", "computed " + std::to_string(d.descriptors.rows()) + " descriptors of dimension " +
                         std::to_string(d.descriptors.cols()));
    descriptors_ = std::move(d);
    return *descriptors_;
  }

  double shrinkage_for(const Matrix& X) const {
    const auto& s = cfg_.str("whitening.shrinkage");
    return s == "auto" ? default_shrinkage(X) : cfg_.num("whitening.shrinkage");
  }

  const WhiteningModel& whitening() {
    if (!whitening_) {
      const Matrix& X = descriptors().descriptors;
      whitening_ = fit_whitening(X, shrinkage_for(X));
    }
    return *whitening_;
  }

  ModeSeekParams mine_params() const {
    ModeSeekParams p;
    p.n_seeds = static_cast<std::size_t>(cfg_.positive("mine.n_seeds"));
    p.rounds = static_cast<int>(cfg_.integer("mine.rounds"));
    p.top_m = static_cast<std::size_t>(cfg_.positive("mine.top_m"));
    p.rank_top = static_cast<std::size_t>(cfg_.positive("mine.rank_top"));
    p.overlap_window = static_cast<std::size_t>(cfg_.positive("mine.overlap_window"));
    p.overlap_max = static_cast<std::size_t>(cfg_.integer("mine.overlap_max"));
    p.n_clusters = static_cast<std::size_t>(cfg_.positive("mine.n_clusters"));
    p.display_k = static_cast<std::size_t>(cfg_.positive("mine.display_k"));
    p.seed = seed_ + seed_offset::kModeSeek;
    p.jobs = jobs_;
    return p;
  }

  SoftmaxParams sgd_params() const {
    SoftmaxParams p;
    p.lr = cfg_.num("sgd.lr");
    p.momentum = cfg_.num("sgd.momentum");
    p.gamma = cfg_.num("sgd.gamma");
    p.step_iters = static_cast<int>(cfg_.positive("sgd.step_iters"));
    p.total_iters = static_cast<int>(cfg_.integer("sgd.total_iters"));
    p.batch = static_cast<int>(cfg_.positive("sgd.batch"));
    p.weight_decay = cfg_.num("sgd.weight_decay");
    p.seed = seed_ + seed_offset::kDating;
    return p;
  }

  DatingParams dating_params() const {
    DatingParams p;
    p.year_lo = static_cast<int>(cfg_.integer("dating.year_lo"));
    p.year_hi = static_cast<int>(cfg_.integer("dating.year_hi"));
    p.min_per_year = static_cast<std::size_t>(cfg_.positive("dating.min_per_year"));
    p.gender = parse_gender(cfg_.str("dating.gender"));
    p.test_frac = cfg_.num("dating.test_frac");
    p.split_year_lo = static_cast<int>(cfg_.integer("dating.split_year_lo"));
    p.split_year_hi = static_cast<int>(cfg_.integer("dating.split_year_hi"));
    p.separation_years = static_cast<int>(cfg_.integer("dating.separation_years"));
    p.seed = seed_ + seed_offset::kSplit;
    return p;
  }

  // Dating features: the shared descriptors, or a median-filtered variant.
  struct DatingFeatures {
    Matrix raw;
    HogGeometry geometry;
    WhiteningModel whitening;
  };

  const DatingFeatures& dating_features() {
    if (dating_features_) return *dating_features_;
    DatingFeatures f;
    if (cfg_.flag("dating.median_filter")) {
      std::vector<Raster> filtered(crops().size());
      parallel_for(filtered.size(), jobs_, [&](std::size_t i) { filtered[i] = median3x3(crops()[i]); });
      f.raw = descriptor_matrix(filtered, hog_params(), jobs_, &f.geometry);
      f.whitening = fit_whitening(f.raw, shrinkage_for(f.raw));
    } else {
      f.raw = descriptors().descriptors;
      f.geometry = descriptors().geometry;
      f.whitening = whitening();
    }
    dating_features_ = std::move(f);
    return *dating_features_;
  }

  const DatingTask& dating_task() {
    if (!task_) {
      const auto& f = dating_features();
      task_ = build_task(analysis_corpus(), f.raw, hog_mirror_permutation(f.geometry), f.whitening, dating_params());
    }
    return *task_;
  }

  EvalReport evaluate_external_manifest(const LinearModel& model, const DatingTask& task, const fs::path& path) {
    const Corpus ext = load_manifest(path, corpus().schema, jobs_);
    const auto& f = dating_features();
    const MeanShape& m = mean_shapes_.at("global");
    const CropParams cp = crop_params();
    std::vector<Raster> images(ext.size());
    parallel_for(ext.size(), jobs_, [&](std::size_t i) {
      Raster r = warp_to_mean(ext.portraits[i], m).raster;
      quantize16(r);
      images[i] = face_hair_crop(r, m, cp);
      if (cfg_.flag("dating.median_filter")) images[i] = median3x3(images[i]);
    });
    const Matrix X = whiten_rows(f.whitening, descriptor_matrix(images, hog_params(), jobs_, nullptr));
    std::vector<int> years;
    for (const auto& p : ext.portraits) years.push_back(p.year);
    return evaluate_external(model, task, X, years);
  }

  void write_eval(const fs::path& dir, const std::string& prefix, const EvalReport& r) {
    fs::create_directories(dir);
    write_json(dir / (prefix + "eval_report.json"), r.to_json());
    {
      std::ofstream csv(dir / (prefix + "confusion.csv"));
      r.write_confusion_csv(csv);
    }
    write_png(dir / (prefix + "confusion.png"), r.confusion_heatmap());
    note("date-eval", prefix + "accuracy " + EvalReport::format_percent(r.accuracy) + " (chance " +
                          EvalReport::format_percent(r.chance) + "), L1 mean " + format_fixed(r.l1_mean, 2) +
                          ", L1 median " + format_fixed(r.l1_median, 0) + " on " + std::to_string(r.n_test) +
                          " test portraits");
  }

  // ---- small helpers ----

  static std::string read_stamp(const fs::path& p) {
    std::ifstream in(p);
    if (!in) return {};
    try {
      return nlohmann::json::parse(in).value("key", std::string());
    } catch (const nlohmann::json::exception&) {
      return {};
    }
  }

  static void write_json(const fs::path& p, const nlohmann::json& j) {
    std::ofstream out(p);
    if (!out) throw DataError("cannot write " + p.string());
    out << j.dump(2) << '\n';
  }

  static std::string format_fixed(double v, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
  }

  void note(const std::string& stage, const std::string& msg) { log_ << "[" << stage << "] " << msg << '\n'; }
  void warn(const std::string& stage, const std::string& msg) { log_ << "[" << stage << "] warning: " << msg << '\n'; }

  PipelineConfig cfg_;
  std::ostream& log_;
  fs::path out_;
  std::size_t jobs_ = 1;
  std::uint64_t seed_ = 0;
  std::size_t loaded_count_ = 0;
  std::optional<Corpus> corpus_;
  std::optional<Corpus> labeled_;
  std::string corpus_hash_;
  std::map<std::string, MeanShape> mean_shapes_;
  std::optional<std::vector<Raster>> aligned_;
  std::optional<std::vector<Raster>> crops_;
  std::optional<DescriptorCache> descriptors_;
  std::optional<WhiteningModel> whitening_;
  std::optional<DatingFeatures> dating_features_;
  std::optional<DatingTask> task_;
};

}  // namespace portraitminer
