#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "portraitminer/classify.hpp"
#include "portraitminer/corpus.hpp"
#include "portraitminer/error.hpp"
#include "portraitminer/features.hpp"
#include "portraitminer/image.hpp"

namespace portraitminer {

struct DatingParams {
  int year_lo = 1928;
  int year_hi = 2010;
  std::size_t min_per_year = 50;  // inclusive
  Gender gender = Gender::kFemale;
  double test_frac = 0.2;
  int split_year_lo = 1982;  // test portraits are drawn from this range only
  int split_year_hi = 2010;
  int separation_years = 10;
  std::uint64_t seed = 0;
};

// Rows are task portraits (gender and year filtered, corpus order). Features
// are whitened descriptors; `mirrored` holds the whitened descriptors of the
// horizontally flipped crops.
struct DatingTask {
  int year_lo = 0;
  int year_hi = 0;
  int classes = 0;
  std::size_t min_per_year = 0;
  SplitSpec split;
  std::vector<std::string> ids;
  std::vector<std::string> schools;
  std::vector<int> years;
  std::vector<int> labels;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  Matrix features;
  Matrix mirrored;

  int year_of(int label) const { return year_lo + label; }
};

// Per-year counts after filtering, with the years below min_per_year.
inline std::vector<int> sparse_years(const std::map<int, std::size_t>& counts, int lo, int hi,
                                     std::size_t min_per_year) {
  std::vector<int> out;
  for (int y = lo; y <= hi; ++y) {
    const auto it = counts.find(y);
    if ((it == counts.end() ? 0 : it->second) < min_per_year) out.push_back(y);
  }
  return out;
}

// `descriptors` are raw descriptors aligned with corpus order; `mirror` is the
// descriptor-space flip permutation.
inline DatingTask build_task(const Corpus& c, const Matrix& descriptors, const std::vector<int>& mirror,
                             const WhiteningModel& w, const DatingParams& p = {}) {
  if (p.year_hi - p.year_lo + 1 < 2)
    throw ConfigError("dating task needs at least two year classes (" + std::to_string(p.year_lo) +
                      "-" + std::to_string(p.year_hi) + ")");
  if (static_cast<std::size_t>(descriptors.rows()) != c.size())
    throw DataError("build_task: descriptor rows do not match corpus size");
  Corpus sub;
  sub.schema = c.schema;
  std::vector<std::size_t> rows;
  std::map<int, std::size_t> counts;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& pt = c.portraits[i];
    if (pt.gender != p.gender || pt.year < p.year_lo || pt.year > p.year_hi) continue;
    sub.portraits.push_back(pt);
    sub.portraits.back().image = Raster();
    rows.push_back(i);
    ++counts[pt.year];
  }
  const auto sparse = sparse_years(counts, p.year_lo, p.year_hi, p.min_per_year);
  if (!sparse.empty()) {
    std::ostringstream msg;
    msg << "years with fewer than " << p.min_per_year << ' ' << gender_name(p.gender)
        << " portraits:";
    for (int y : sparse) msg << ' ' << y << '(' << (counts.count(y) ? counts.at(y) : 0) << ')';
    msg << "; adjust the dating year range explicitly";
    throw DataError(msg.str());
  }

  DatingTask t;
  t.year_lo = p.year_lo;
  t.year_hi = p.year_hi;
  t.classes = p.year_hi - p.year_lo + 1;
  t.min_per_year = p.min_per_year;
  const int split_lo = std::max(p.split_year_lo, p.year_lo);
  const int split_hi = std::min(p.split_year_hi, p.year_hi);
  t.split = split_dating(sub, p.test_frac, split_lo, split_hi, p.separation_years, p.seed);

  // Portraits outside the split window train unless they sit within the
  // separation of a same-school test portrait.
  std::unordered_map<std::string, std::vector<int>> test_years;
  const auto sub_index = sub.index_by_id();
  for (const auto& id : t.split.test_ids) {
    const auto& pt = sub.portraits[sub_index.at(id)];
    test_years[pt.school_id].push_back(pt.year);
  }
  std::vector<std::string> train_ids;
  for (const auto& pt : sub.portraits) {
    if (pt.year >= split_lo && pt.year <= split_hi) continue;
    bool close = false;
    if (const auto it = test_years.find(pt.school_id); it != test_years.end())
      for (int y : it->second) close = close || std::abs(pt.year - y) < p.separation_years;
    (close ? t.split.dropped_ids : train_ids).push_back(pt.id);
  }
  train_ids.insert(train_ids.end(), t.split.train_ids.begin(), t.split.train_ids.end());
  t.split.train_ids = std::move(train_ids);

  const auto n = static_cast<Eigen::Index>(rows.size());
  Matrix raw(n, descriptors.cols()), raw_mirror(n, descriptors.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    raw.row(r) = descriptors.row(static_cast<Eigen::Index>(rows[r]));
    raw_mirror.row(r) = apply_permutation(raw.row(r).transpose(), mirror).transpose();
  }
  t.features = whiten_rows(w, raw);
  t.mirrored = whiten_rows(w, raw_mirror);
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t r = 0; r < sub.portraits.size(); ++r) {
    const auto& pt = sub.portraits[r];
    t.ids.push_back(pt.id);
    t.schools.push_back(pt.school_id);
    t.years.push_back(pt.year);
    t.labels.push_back(pt.year - p.year_lo);
    row_of.emplace(pt.id, r);
  }
  for (const auto& id : t.split.train_ids) t.train_rows.push_back(row_of.at(id));
  for (const auto& id : t.split.test_ids) t.test_rows.push_back(row_of.at(id));
  std::sort(t.train_rows.begin(), t.train_rows.end());
  std::sort(t.test_rows.begin(), t.test_rows.end());
  return t;
}

inline Matrix select_rows(const Matrix& X, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

inline LinearModel train_dating(const DatingTask& t, const SoftmaxParams& p = {}, bool mirroring = true) {
  if (t.train_rows.empty()) throw DataError("train_dating: empty training set");
  const Matrix X = select_rows(t.features, t.train_rows);
  const Matrix Xm = select_rows(t.mirrored, t.train_rows);
  std::vector<int> y;
  for (std::size_t r : t.train_rows) y.push_back(t.labels[r]);
  auto m = train_softmax(X, y, t.classes, p, mirroring ? &Xm : nullptr);
  m.label_names.clear();
  for (int k = 0; k < t.classes; ++k) m.label_names.push_back(std::to_string(t.year_of(k)));
  m.hyperparameters["year_lo"] = t.year_lo;
  m.hyperparameters["year_hi"] = t.year_hi;
  return m;
}

struct SoftConfusion {
  Matrix matrix;                // K × K, rows are true classes
  std::vector<bool> populated;  // rows with at least one sample
  std::vector<std::size_t> counts;
};

// Row t = mean predicted distribution over samples whose true class is t.
inline SoftConfusion soft_confusion(const LinearModel& m, const Matrix& X, const std::vector<int>& labels,
                                    int classes) {
  SoftConfusion s;
  s.matrix = Matrix::Zero(classes, classes);
  s.counts.assign(static_cast<std::size_t>(classes), 0);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const int t = labels[static_cast<std::size_t>(i)];
    s.matrix.row(t) += predict_proba(m, X.row(i).transpose()).transpose();
    ++s.counts[t];
  }
  s.populated.assign(static_cast<std::size_t>(classes), false);
  for (int t = 0; t < classes; ++t) {
    if (s.counts[t] == 0) continue;
    s.populated[t] = true;
    s.matrix.row(t) /= static_cast<double>(s.counts[t]);
  }
  return s;
}

struct EvalReport {
  double accuracy = 0.0;
  double l1_mean = 0.0;
  double l1_median = 0.0;  // lower median
  double l1_mean_expected = 0.0;    // from the probability-weighted year
  double l1_median_expected = 0.0;
  double chance = 0.0;
  int classes = 0;
  int year_lo = 0;
  std::size_t n_test = 0;
  SoftConfusion confusion;

  nlohmann::json to_json() const {
    std::vector<int> empty_rows;
    for (int t = 0; t < classes; ++t)
      if (!confusion.populated[t]) empty_rows.push_back(year_lo + t);
    return {{"accuracy", accuracy},
            {"accuracy_pct", format_percent(accuracy)},
            {"l1_mean", l1_mean},
            {"l1_median", l1_median},
            {"l1_mean_expected_year", l1_mean_expected},
            {"l1_median_expected_year", l1_median_expected},
            {"chance", chance},
            {"chance_pct", format_percent(chance)},
            {"classes", classes},
            {"n_test", n_test},
            {"unpopulated_years", empty_rows}};
  }

  static std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * fraction);
    return buf;
  }

  // year,<year_lo>,...,<year_hi>,count; unpopulated rows leave cells empty.
  void write_confusion_csv(std::ostream& out) const {
    out.precision(12);
    out << "true_year";
    for (int k = 0; k < classes; ++k) out << ',' << year_lo + k;
    out << ",count\n";
    for (int t = 0; t < classes; ++t) {
      out << year_lo + t;
      for (int k = 0; k < classes; ++k) {
        out << ',';
        if (confusion.populated[t]) out << confusion.matrix(t, k);
      }
      out << ',' << confusion.counts[t] << '\n';
    }
  }

  // Row-normalized heat map scaled by the matrix maximum; unpopulated rows
  // are drawn mid-gray.
  Raster confusion_heatmap(int cell_px = 4) const {
    Raster out(classes * cell_px, classes * cell_px, 0.0f);
    double mx = 0.0;
    for (int t = 0; t < classes; ++t)
      if (confusion.populated[t]) mx = std::max(mx, confusion.matrix.row(t).maxCoeff());
    for (int t = 0; t < classes; ++t)
      for (int k = 0; k < classes; ++k) {
        const float v = confusion.populated[t]
                            ? static_cast<float>(mx > 0 ? confusion.matrix(t, k) / mx : 0.0)
                            : 0.5f;
        for (int y = 0; y < cell_px; ++y)
          for (int x = 0; x < cell_px; ++x) out.at(k * cell_px + x, t * cell_px + y) = v;
      }
    return out;
  }
};

inline double lower_median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

// Metrics for already-whitened rows X with true labels in [0, classes).
inline EvalReport evaluate_rows(const LinearModel& m, const Matrix& X, const std::vector<int>& labels,
                                int classes, int year_lo) {
  if (X.rows() == 0) throw DataError("evaluate: empty test set");
  if (m.kind != ModelKind::kSoftmax || m.classes() != classes)
    throw DataError("evaluate: model does not match the task's class count");
  if (m.dim() != X.cols()) throw DataError("evaluate: model and feature dimensions differ");
  EvalReport r;
  r.classes = classes;
  r.year_lo = year_lo;
  r.chance = 1.0 / classes;
  r.n_test = static_cast<std::size_t>(X.rows());
  std::vector<double> l1, l1e;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const int t = labels[static_cast<std::size_t>(i)];
    if (t < 0 || t >= classes) throw DataError("evaluate: label out of range");
    const Vector prob = predict_proba(m, X.row(i).transpose());
    const auto pred = static_cast<int>(argmax(prob));
    if (pred == t) ++correct;
    l1.push_back(std::abs(pred - t));
    double expected = 0.0;
    for (int k = 0; k < classes; ++k) expected += k * prob[k];
    l1e.push_back(std::abs(expected - t));
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n_test);
  for (double v : l1) r.l1_mean += v;
  r.l1_mean /= static_cast<double>(l1.size());
  for (double v : l1e) r.l1_mean_expected += v;
  r.l1_mean_expected /= static_cast<double>(l1e.size());
  r.l1_median = lower_median(l1);
  r.l1_median_expected = lower_median(l1e);
  r.confusion = soft_confusion(m, X, labels, classes);
  return r;
}

// Evaluates on the task's test rows after re-checking school separation.
inline EvalReport evaluate(const LinearModel& m, const DatingTask& t) {
  if (t.test_rows.empty()) throw DataError("evaluate: task has no test portraits");
  std::unordered_map<std::string, std::vector<int>> train_years;
  for (std::size_t r : t.train_rows) train_years[t.schools[r]].push_back(t.years[r]);
  for (std::size_t r : t.test_rows) {
    const auto it = train_years.find(t.schools[r]);
    if (it == train_years.end()) continue;
    for (int y : it->second)
      if (std::abs(y - t.years[r]) < t.split.separation_years)
        throw InfeasibleError("evaluate: test portrait " + t.ids[r] +
                              " is within the school separation of a training portrait");
  }
  std::vector<int> labels;
  for (std::size_t r : t.test_rows) labels.push_back(t.labels[r]);
  return evaluate_rows(m, select_rows(t.features, t.test_rows), labels, t.classes, t.year_lo);
}

// Evaluates on an external set (e.g. a separate manifest) given whitened rows
// and true years; years outside the task range are rejected.
inline EvalReport evaluate_external(const LinearModel& m, const DatingTask& t, const Matrix& X,
                                    const std::vector<int>& years) {
  std::vector<int> labels;
  for (int y : years) {
    if (y < t.year_lo || y > t.year_hi)
      throw DataError("external test year " + std::to_string(y) + " outside the task range");
    labels.push_back(y - t.year_lo);
  }
  return evaluate_rows(m, X, labels, t.classes, t.year_lo);
}

}  // namespace portraitminer
