#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "portraitminer/error.hpp"
#include "portraitminer/image.hpp"

namespace portraitminer {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct HogParams {
  int cell_px = 8;
  int orientations = 9;
};

struct HogGeometry {
  int cells_x = 0;
  int cells_y = 0;
  int orientations = 0;
  int cell_px = 0;

  int dim() const { return cells_x * cells_y * orientations; }
  int index(int cx, int cy, int o) const { return (cy * cells_x + cx) * orientations + o; }
  friend bool operator==(const HogGeometry&, const HogGeometry&) = default;
};

struct HogDescriptor {
  Vector values;
  HogGeometry geometry;
};

inline constexpr double kHogEpsilon = 1e-6;

inline HogGeometry hog_geometry(int width, int height, const HogParams& p = {}) {
  if (p.cell_px <= 0 || p.orientations <= 0) throw ConfigError("HOG parameters must be positive");
  if (width % p.cell_px != 0 || height % p.cell_px != 0)
    throw DataError("HOG input " + std::to_string(width) + "x" + std::to_string(height) +
                    " not divisible by cell size " + std::to_string(p.cell_px));
  return {width / p.cell_px, height / p.cell_px, p.orientations, p.cell_px};
}

// Cell-level HOG: centered-difference gradients (replicated border), unsigned
// orientation in [0, 180) split linearly between the two nearest bins
// (bin k centered at k * 180 / orientations, wrapping), magnitude-weighted
// per-cell histograms, then one global L2 normalization.
inline HogDescriptor hog(const Raster& img, const HogParams& p = {}) {
  const HogGeometry g = hog_geometry(img.width(), img.height(), p);
  HogDescriptor d{Vector::Zero(g.dim()), g};
  const double bin_width = 180.0 / g.orientations;
  for (int y = 0; y < img.height(); ++y) {
    const int cy = y / g.cell_px;
    for (int x = 0; x < img.width(); ++x) {
      const double gx = static_cast<double>(img.clamped(x + 1, y)) - img.clamped(x - 1, y);
      const double gy = static_cast<double>(img.clamped(x, y + 1)) - img.clamped(x, y - 1);
      const double mag = std::sqrt(gx * gx + gy * gy);
      if (mag == 0.0) continue;
      double angle = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
      if (angle < 0.0) angle += 180.0;
      if (angle >= 180.0) angle -= 180.0;
      const double pos = angle / bin_width;
      int b0 = static_cast<int>(std::floor(pos));
      const double frac = pos - b0;
      b0 %= g.orientations;
      const int b1 = (b0 + 1) % g.orientations;
      const int cx = x / g.cell_px;
      d.values[g.index(cx, cy, b0)] += mag * (1.0 - frac);
      d.values[g.index(cx, cy, b1)] += mag * frac;
    }
  }
  d.values /= d.values.norm() + kHogEpsilon;
  return d;
}

// Index permutation that maps a descriptor to the descriptor of the
// horizontally mirrored raster: cell column cx -> cells_x-1-cx and
// orientation bin k -> (orientations - k) mod orientations.
inline std::vector<int> hog_mirror_permutation(const HogGeometry& g) {
  std::vector<int> perm(static_cast<std::size_t>(g.dim()));
  for (int cy = 0; cy < g.cells_y; ++cy)
    for (int cx = 0; cx < g.cells_x; ++cx)
      for (int o = 0; o < g.orientations; ++o)
        perm[g.index(cx, cy, o)] =
            g.index(g.cells_x - 1 - cx, cy, (g.orientations - o) % g.orientations);
  return perm;
}

inline Vector apply_permutation(const Vector& v, const std::vector<int>& perm) {
  Vector out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[perm[i]] = v[i];
  return out;
}

// Corpus statistics for whitening: mean and Cholesky factor of Σ + λI.
struct WhiteningModel {
  Vector mean;
  Matrix cov_factor;  // lower triangular L, L Lᵀ = Σ + λI
  double shrinkage = 0.0;

  Eigen::Index dim() const { return mean.size(); }

  // (Σ + λI)^-1 v via two triangular solves.
  Vector solve(const Vector& v) const {
    if (v.size() != dim()) throw DataError("whitening solve: dimension mismatch");
    const auto L = cov_factor.triangularView<Eigen::Lower>();
    return L.transpose().solve(L.solve(v));
  }
};

// Scale-relative default: 0.01 * trace(Σ) / d.
inline double default_shrinkage(const Matrix& descriptors) {
  if (descriptors.rows() < 2) throw DataError("need at least two descriptors");
  const Matrix centered = descriptors.rowwise() - descriptors.colwise().mean();
  const double trace = centered.squaredNorm() / static_cast<double>(descriptors.rows() - 1);
  return 0.01 * trace / static_cast<double>(descriptors.cols());
}

// Rows are descriptors.
inline WhiteningModel fit_whitening(const Matrix& descriptors, double shrinkage) {
  const auto n = descriptors.rows();
  if (n < 2) throw DataError("fit_whitening: need at least two descriptors");
  if (shrinkage < 0.0) throw ConfigError("fit_whitening: shrinkage must be non-negative");
  WhiteningModel m;
  m.shrinkage = shrinkage;
  m.mean = descriptors.colwise().mean().transpose();
  const Matrix centered = descriptors.rowwise() - m.mean.transpose();
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  cov.diagonal().array() += shrinkage;
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success)
    throw NumericError("fit_whitening: covariance + shrinkage is not positive definite; "
                       "increase the shrinkage (currently " + std::to_string(shrinkage) + ")");
  m.cov_factor = llt.matrixL();
  for (Eigen::Index i = 0; i < m.cov_factor.rows(); ++i)
    if (!(m.cov_factor(i, i) > 0.0))
      throw NumericError("fit_whitening: factor has a non-positive pivot; increase the shrinkage");
  return m;
}

// L^-1 (x - μ) by forward substitution.
inline Vector whiten(const WhiteningModel& m, const Vector& x) {
  if (x.size() != m.dim())
    throw DataError("whiten: descriptor length " + std::to_string(x.size()) + " != model dim " +
                    std::to_string(m.dim()));
  return m.cov_factor.triangularView<Eigen::Lower>().solve(x - m.mean);
}

// Rowwise whitening of a descriptor matrix.
inline Matrix whiten_rows(const WhiteningModel& m, const Matrix& X) {
  if (X.cols() != m.dim()) throw DataError("whiten: descriptor dimension mismatch");
  Matrix centered = (X.rowwise() - m.mean.transpose()).transpose();
  m.cov_factor.triangularView<Eigen::Lower>().solveInPlace(centered);
  return centered.transpose();
}

// Descriptor cache: <stem>.bin (row-major little-endian float32) and
// <stem>.json (rows, dims, geometry, ids in order).
struct DescriptorCache {
  std::vector<std::string> ids;
  HogGeometry geometry;
  Matrix descriptors;
};

namespace detail {
inline bool host_is_little_endian() {
  const std::uint16_t probe = 1;
  unsigned char b;
  std::memcpy(&b, &probe, 1);
  return b == 1;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if (!host_is_little_endian()) std::reverse(b, b + sizeof(T));
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char b[sizeof(T)];
  in.read(reinterpret_cast<char*>(b), sizeof(T));
  if (!host_is_little_endian()) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}
}  // namespace detail

inline void write_descriptor_cache(const std::filesystem::path& stem, const DescriptorCache& c) {
  std::ofstream bin(stem.string() + ".bin", std::ios::binary);
  if (!bin) throw DataError("cannot write " + stem.string() + ".bin");
  for (Eigen::Index r = 0; r < c.descriptors.rows(); ++r)
    for (Eigen::Index k = 0; k < c.descriptors.cols(); ++k)
      detail::write_le(bin, static_cast<float>(c.descriptors(r, k)));
  nlohmann::json j = {{"rows", c.descriptors.rows()},
                      {"dims", c.descriptors.cols()},
                      {"geometry",
                       {{"cells_x", c.geometry.cells_x},
                        {"cells_y", c.geometry.cells_y},
                        {"orientations", c.geometry.orientations},
                        {"cell_px", c.geometry.cell_px}}},
                      {"dtype", "float32-le"},
                      {"ids", c.ids}};
  std::ofstream(stem.string() + ".json") << j.dump(1) << '\n';
}

inline DescriptorCache read_descriptor_cache(const std::filesystem::path& stem) {
  std::ifstream js(stem.string() + ".json");
  if (!js) throw DataError("missing descriptor sidecar " + stem.string() + ".json");
  const auto j = nlohmann::json::parse(js);
  DescriptorCache c;
  c.ids = j.at("ids").get<std::vector<std::string>>();
  const auto& g = j.at("geometry");
  c.geometry = {g.at("cells_x").get<int>(), g.at("cells_y").get<int>(),
                g.at("orientations").get<int>(), g.at("cell_px").get<int>()};
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto dims = j.at("dims").get<Eigen::Index>();
  std::ifstream bin(stem.string() + ".bin", std::ios::binary);
  if (!bin) throw DataError("missing descriptor blob " + stem.string() + ".bin");
  c.descriptors.resize(rows, dims);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index k = 0; k < dims; ++k) c.descriptors(r, k) = detail::read_le<float>(bin);
  if (!bin) throw DataError("truncated descriptor blob " + stem.string() + ".bin");
  return c;
}

}  // namespace portraitminer
