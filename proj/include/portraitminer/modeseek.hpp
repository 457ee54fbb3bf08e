#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "portraitminer/classify.hpp"
#include "portraitminer/composite.hpp"
#include "portraitminer/corpus.hpp"
#include "portraitminer/error.hpp"
#include "portraitminer/features.hpp"
#include "portraitminer/image.hpp"
#include "portraitminer/parallel.hpp"
#include "portraitminer/rng.hpp"

namespace portraitminer {

// The portraits a mining run ranks over, with one descriptor row each.
struct MiningSet {
  std::vector<std::string> ids;
  std::vector<int> years;
  std::vector<std::string> schools;
  Matrix descriptors;  // raw (unwhitened) descriptors, one row per portrait

  std::size_t size() const { return ids.size(); }
  bool in_decade(std::size_t i, int decade) const { return decade_of(years[i]) == decade; }
};

// Restricts a corpus (with descriptors aligned to corpus order) to the
// portraits of the requested genders.
inline MiningSet make_mining_set(const Corpus& c, const Matrix& descriptors,
                                 const std::vector<Gender>& genders) {
  if (static_cast<std::size_t>(descriptors.rows()) != c.size())
    throw DataError("mining set: descriptor rows do not match corpus size");
  std::vector<Eigen::Index> rows;
  MiningSet m;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& p = c.portraits[i];
    if (std::find(genders.begin(), genders.end(), p.gender) == genders.end()) continue;
    m.ids.push_back(p.id);
    m.years.push_back(p.year);
    m.schools.push_back(p.school_id);
    rows.push_back(static_cast<Eigen::Index>(i));
  }
  m.descriptors.resize(static_cast<Eigen::Index>(rows.size()), descriptors.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) m.descriptors.row(r) = descriptors.row(rows[r]);
  return m;
}

struct ModeSeekParams {
  std::size_t n_seeds = 200;
  int rounds = 3;
  std::size_t top_m = 5;
  std::size_t rank_top = 20;         // detections counted for discriminativeness
  std::size_t overlap_window = 60;   // detections compared for deduplication
  std::size_t overlap_max = 6;       // more shared portraits than this removes a cluster
  std::size_t n_clusters = 4;
  std::size_t display_k = 6;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  nlohmann::json to_json() const {
    return {{"n_seeds", n_seeds},   {"rounds", rounds},
            {"top_m", top_m},       {"rank_top", rank_top},
            {"overlap_window", overlap_window}, {"overlap_max", overlap_max},
            {"n_clusters", n_clusters}, {"display_k", display_k},
            {"seed", seed}};
  }
};

struct SeededDetector {
  LinearModel detector;
  std::size_t seed_index = 0;  // row in the mining set
  std::size_t seed_order = 0;  // position in the seed list
};

struct Detection {
  std::size_t index = 0;
  std::string id;
  double score = 0.0;
};

struct StyleCluster {
  LinearModel detector;
  int target_decade = 0;
  std::size_t seed_index = 0;
  std::size_t seed_order = 0;
  std::vector<Detection> detections;  // descending score
  std::size_t discriminativeness = 0;
  double mean_top_score = 0.0;
  Raster average_image;
  std::vector<std::string> display_ids;
};

inline std::vector<std::size_t> decade_members(const MiningSet& m, int decade) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m.in_decade(i, decade)) out.push_back(i);
  return out;
}

// Samples n_seeds target-decade portraits without replacement and turns each
// whole-portrait descriptor into an exemplar-LDA detector.
inline std::vector<SeededDetector> seed_detectors(const MiningSet& m, int decade, std::size_t n_seeds,
                                                  const WhiteningModel& w, std::uint64_t seed) {
  const auto members = decade_members(m, decade);
  if (members.size() < n_seeds)
    throw DataError("seed_detectors: decade " + std::to_string(decade) + " has " +
                    std::to_string(members.size()) + " portraits, " + std::to_string(n_seeds) +
                    " seeds requested");
  Rng rng(seed);
  std::vector<SeededDetector> out;
  const auto picks = rng.sample_without_replacement(members.size(), n_seeds);
  for (std::size_t k = 0; k < picks.size(); ++k) {
    const std::size_t row = members[picks[k]];
    out.push_back({lda_detector(m.descriptors.row(row).transpose(), w), row, k});
  }
  return out;
}

// Rows sorted by descending score; equal scores keep ascending row order.
inline std::vector<std::size_t> rank_rows(const Vector& scores) {
  std::vector<std::size_t> order(static_cast<std::size_t>(scores.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

inline Vector score_all(const LinearModel& det, const MiningSet& m) {
  if (det.dim() != m.descriptors.cols()) throw DataError("detector dimension mismatch");
  return m.descriptors * det.weights.row(0).transpose() + Vector::Constant(m.descriptors.rows(), det.bias[0]);
}

// Alternates scoring the whole set with retraining on the top_m in-decade
// detections.
inline LinearModel refine_detector(const LinearModel& det, const MiningSet& m, int decade,
                                   const WhiteningModel& w, int rounds = 3, std::size_t top_m = 5) {
  LinearModel current = det;
  for (int r = 0; r < rounds; ++r) {
    const auto order = rank_rows(score_all(current, m));
    Vector acc = Vector::Zero(m.descriptors.cols());
    std::size_t taken = 0;
    for (std::size_t i : order) {
      if (taken == top_m) break;
      if (!m.in_decade(i, decade)) continue;
      acc += m.descriptors.row(i).transpose();
      ++taken;
    }
    if (taken == 0) break;
    current = lda_detector(acc / static_cast<double>(taken), w);
  }
  return current;
}

inline std::size_t count_in_decade(const std::vector<Detection>& dets, const std::vector<int>& years,
                                   int decade, std::size_t top) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < dets.size() && i < top; ++i)
    if (decade_of(years[dets[i].index]) == decade) ++n;
  return n;
}

// Builds one cluster per detector and sorts by discriminativeness (count of
// target-decade portraits in the top rank_top), then mean top score, then seed
// order.
inline std::vector<StyleCluster> score_and_rank(const std::vector<SeededDetector>& detectors,
                                                const MiningSet& m, int decade,
                                                const ModeSeekParams& p = {}) {
  const std::size_t retain = std::min(m.size(), std::max({p.overlap_window, p.rank_top, std::size_t{60}}));
  std::vector<StyleCluster> clusters(detectors.size());
  parallel_for(detectors.size(), p.jobs, [&](std::size_t k) {
    const auto& d = detectors[k];
    const Vector scores = score_all(d.detector, m);
    const auto order = rank_rows(scores);
    StyleCluster& c = clusters[k];
    c.detector = d.detector;
    c.target_decade = decade;
    c.seed_index = d.seed_index;
    c.seed_order = d.seed_order;
    for (std::size_t i = 0; i < retain; ++i) c.detections.push_back({order[i], m.ids[order[i]], scores[order[i]]});
    c.discriminativeness = count_in_decade(c.detections, m.years, decade, p.rank_top);
    const std::size_t top = std::min(p.rank_top, c.detections.size());
    double s = 0.0;
    for (std::size_t i = 0; i < top; ++i) s += c.detections[i].score;
    c.mean_top_score = top ? s / static_cast<double>(top) : 0.0;
  });
  std::stable_sort(clusters.begin(), clusters.end(), [](const StyleCluster& a, const StyleCluster& b) {
    if (a.discriminativeness != b.discriminativeness) return a.discriminativeness > b.discriminativeness;
    if (a.mean_top_score != b.mean_top_score) return a.mean_top_score > b.mean_top_score;
    return a.seed_order < b.seed_order;
  });
  return clusters;
}

// Distinct portrait ids among a cluster's first `window` detections.
inline std::vector<std::string> top_ids(const StyleCluster& c, std::size_t window) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < c.detections.size() && i < window; ++i)
    if (seen.insert(c.detections[i].id).second) out.push_back(c.detections[i].id);
  return out;
}

// Greedy rank-order scan: a cluster survives when at most overlap_max of its
// top-window portraits already appear in the top-window of kept clusters.
inline std::vector<StyleCluster> dedup_clusters(const std::vector<StyleCluster>& ranked,
                                                std::size_t overlap_max = 6, std::size_t window = 60) {
  std::vector<StyleCluster> kept;
  std::unordered_set<std::string> covered;
  for (const auto& c : ranked) {
    const auto ids = top_ids(c, window);
    std::size_t shared = 0;
    for (const auto& id : ids) shared += covered.count(id);
    if (shared > overlap_max) continue;
    covered.insert(ids.begin(), ids.end());
    kept.push_back(c);
  }
  return kept;
}

struct ClusterSheet {
  Raster average;
  std::vector<Raster> members;
  Raster sheet;  // average followed by members, left to right
};

// First detections in score order with at most one per (school, year).
inline std::vector<std::size_t> one_per_class(const StyleCluster& c, const MiningSet& m, std::size_t k) {
  std::set<std::pair<std::string, int>> classes;
  std::vector<std::size_t> out;
  for (const auto& d : c.detections) {
    if (out.size() == k) break;
    if (classes.insert({m.schools[d.index], m.years[d.index]}).second) out.push_back(d.index);
  }
  return out;
}

inline Raster tile_row(const std::vector<const Raster*>& tiles, int gap = 2) {
  if (tiles.empty()) return {};
  const int h = tiles.front()->height();
  const int w = tiles.front()->width();
  Raster out(static_cast<int>(tiles.size()) * (w + gap) - gap, h, 1.0f);
  for (std::size_t t = 0; t < tiles.size(); ++t)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(static_cast<int>(t) * (w + gap) + x, y) = tiles[t]->at(x, y);
  return out;
}

inline Raster stack_rows(const std::vector<Raster>& rows, int gap = 4) {
  int width = 0, height = 0;
  for (const auto& r : rows) {
    width = std::max(width, r.width());
    height += r.height() + gap;
  }
  if (rows.empty()) return {};
  Raster out(width, height - gap, 1.0f);
  int y0 = 0;
  for (const auto& r : rows) {
    for (int y = 0; y < r.height(); ++y)
      for (int x = 0; x < r.width(); ++x) out.at(x, y0 + y) = r.at(x, y);
    y0 += r.height() + gap;
  }
  return out;
}

// Fills display_ids (one per graduating class) and the cluster average over
// the top overlap_window detections. `crops[i]` is the crop of mining row i.
// Returns the warning text when fewer than k classes were available.
inline ClusterSheet render_cluster(StyleCluster& c, const MiningSet& m, std::span<const Raster> crops,
                                   std::size_t k = 6, std::size_t average_window = 60,
                                   std::string* warning = nullptr) {
  if (crops.size() != m.size()) throw DataError("render_cluster: crop count mismatch");
  ClusterSheet s;
  const auto shown = one_per_class(c, m, k);
  c.display_ids.clear();
  for (std::size_t i : shown) c.display_ids.push_back(m.ids[i]);
  if (shown.size() < k && warning)
    *warning = "cluster seeded at " + m.ids[c.seed_index] + " has only " +
               std::to_string(shown.size()) + " distinct graduating classes";
  std::vector<std::pair<std::string, const Raster*>> avg_items;
  for (std::size_t i = 0; i < c.detections.size() && i < average_window; ++i)
    avg_items.emplace_back(c.detections[i].id, &crops[c.detections[i].index]);
  c.average_image = mean_image_by_id(std::move(avg_items));
  s.average = c.average_image;
  std::vector<const Raster*> tiles{&s.average};
  for (std::size_t i : shown) {
    s.members.push_back(crops[i]);
  }
  for (const auto& r : s.members) tiles.push_back(&r);
  s.sheet = tile_row(tiles);
  return s;
}

// seed -> refine -> rank -> dedup -> top n_clusters.
inline std::vector<StyleCluster> mine_decade_styles(const MiningSet& m, int decade, const WhiteningModel& w,
                                                    const ModeSeekParams& p = {}) {
  if (p.n_clusters == 0) return {};
  if (decade_members(m, decade).empty())
    throw DataError("mine_decade_styles: decade " + std::to_string(decade) + " has no portraits");
  auto seeds = seed_detectors(m, decade, p.n_seeds, w, p.seed);
  parallel_for(seeds.size(), p.jobs, [&](std::size_t k) {
    seeds[k].detector = refine_detector(seeds[k].detector, m, decade, w, p.rounds, p.top_m);
  });
  auto ranked = score_and_rank(seeds, m, decade, p);
  auto kept = dedup_clusters(ranked, p.overlap_max, p.overlap_window);
  if (kept.size() > p.n_clusters) kept.resize(p.n_clusters);
  return kept;
}

inline nlohmann::json cluster_report(int decade, const std::vector<StyleCluster>& clusters,
                                     const MiningSet& m, const ModeSeekParams& p) {
  nlohmann::json out = {{"decade", decade}, {"params", p.to_json()}, {"clusters", nlohmann::json::array()}};
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    const auto& c = clusters[k];
    nlohmann::json dets = nlohmann::json::array();
    for (const auto& d : c.detections) dets.push_back({{"id", d.id}, {"score", d.score}});
    out["clusters"].push_back({{"rank", k},
                               {"detector_file", "detector_" + std::to_string(k) + ".model"},
                               {"seed_id", m.ids[c.seed_index]},
                               {"discriminativeness", c.discriminativeness},
                               {"mean_top_score", c.mean_top_score},
                               {"display_ids", c.display_ids},
                               {"detections", dets}});
  }
  return out;
}

}  // namespace portraitminer
