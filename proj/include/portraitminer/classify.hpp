#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "portraitminer/error.hpp"
#include "portraitminer/features.hpp"
#include "portraitminer/rng.hpp"

namespace portraitminer {

enum class ModelKind { kHinge, kSoftmax, kLda };

inline std::string kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kHinge: return "hinge";
    case ModelKind::kSoftmax: return "softmax";
    default: return "lda";
  }
}

inline ModelKind parse_kind(const std::string& s) {
  if (s == "hinge") return ModelKind::kHinge;
  if (s == "softmax") return ModelKind::kSoftmax;
  if (s == "lda") return ModelKind::kLda;
  throw DataError("unknown model kind '" + s + "'");
}

struct LinearModel {
  Matrix weights;  // K × d
  Vector bias;     // K
  ModelKind kind = ModelKind::kSoftmax;
  std::vector<std::string> label_names;
  nlohmann::json hyperparameters = nlohmann::json::object();

  Eigen::Index classes() const { return weights.rows(); }
  Eigen::Index dim() const { return weights.cols(); }

  // Raw scores W x + b.
  Vector scores(const Vector& x) const {
    if (x.size() != dim()) throw DataError("model input dimension mismatch");
    return weights * x + bias;
  }

  // Binary decision value for hinge/lda models.
  double decision(const Vector& x) const { return scores(x)[0]; }
};

// ---------------------------------------------------------------------------
// Hinge-loss SVM

struct SvmParams {
  double C = 1.0;
  int epochs = 200;
  int batch = 32;
  std::uint64_t seed = 0;
};

inline double svm_lambda(double C, Eigen::Index n) { return 1.0 / (C * static_cast<double>(n)); }

// λ/2 ||w||² + mean hinge loss, λ = 1 / (C n).
inline double svm_objective(const Vector& w, double b, const Matrix& pos, const Matrix& neg,
                            double C) {
  const Eigen::Index n = pos.rows() + neg.rows();
  double hinge = 0.0;
  for (Eigen::Index i = 0; i < pos.rows(); ++i)
    hinge += std::max(0.0, 1.0 - (pos.row(i).dot(w) + b));
  for (Eigen::Index i = 0; i < neg.rows(); ++i)
    hinge += std::max(0.0, 1.0 + (neg.row(i).dot(w) + b));
  return 0.5 * svm_lambda(C, n) * w.squaredNorm() + hinge / static_cast<double>(n);
}

// Mini-batch subgradient descent with step 1/(λt), projection onto the
// ||w|| <= 1/sqrt(λ) ball, and averaging of the second half of the iterates.
// Labels: pos = +1, neg = -1.
inline LinearModel train_svm(const Matrix& pos, const Matrix& neg, const SvmParams& p = {}) {
  if (pos.rows() == 0 || neg.rows() == 0) throw DataError("train_svm: both classes must be non-empty");
  if (pos.cols() != neg.cols()) throw DataError("train_svm: class dimensions differ");
  if (!(p.C > 0.0) || p.epochs <= 0 || p.batch <= 0) throw ConfigError("train_svm: bad parameters");
  const Eigen::Index n = pos.rows() + neg.rows();
  const Eigen::Index d = pos.cols();
  Matrix X(n, d);
  X << pos, neg;
  Vector y(n);
  y.head(pos.rows()).setOnes();
  y.tail(neg.rows()).setConstant(-1.0);

  const double lambda = svm_lambda(p.C, n);
  const double w_radius = 1.0 / std::sqrt(lambda);
  const double b_limit = w_radius * X.rowwise().norm().maxCoeff() + 1.0;
  const auto batch = static_cast<Eigen::Index>(std::min<Eigen::Index>(p.batch, n));
  const std::int64_t steps_per_epoch = (n + batch - 1) / batch;
  const std::int64_t total = steps_per_epoch * p.epochs;
  const std::int64_t average_from = total / 2 + 1;

  Rng rng(p.seed);
  Vector w = Vector::Zero(d), w_sum = Vector::Zero(d);
  double b = 0.0, b_sum = 0.0;
  std::int64_t n_avg = 0, t = 0;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[i] = i;
  for (int epoch = 0; epoch < p.epochs; ++epoch) {
    rng.shuffle(order);
    for (Eigen::Index start = 0; start < n; start += batch) {
      ++t;
      const Eigen::Index stop = std::min(n, start + batch);
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      Vector gw = Vector::Zero(d);
      double gb = 0.0;
      for (Eigen::Index k = start; k < stop; ++k) {
        const Eigen::Index i = order[k];
        if (y[i] * (X.row(i).dot(w) + b) < 1.0) {
          gw.noalias() += y[i] * X.row(i).transpose();
          gb += y[i];
        }
      }
      const double m = static_cast<double>(stop - start);
      w = (1.0 - eta * lambda) * w + (eta / m) * gw;
      b += (eta / m) * gb;
      const double norm = w.norm();
      if (norm > w_radius) w *= w_radius / norm;
      b = std::clamp(b, -b_limit, b_limit);
      if (t >= average_from) {
        w_sum += w;
        b_sum += b;
        ++n_avg;
      }
    }
  }
  LinearModel model;
  model.kind = ModelKind::kHinge;
  model.weights = (w_sum / static_cast<double>(n_avg)).transpose();
  model.bias = Vector::Constant(1, b_sum / static_cast<double>(n_avg));
  model.label_names = {"positive", "negative"};
  model.hyperparameters = {{"C", p.C}, {"epochs", p.epochs}, {"batch", p.batch}, {"seed", p.seed}};
  return model;
}

// ---------------------------------------------------------------------------
// Exemplar LDA

// Direction (Σ + λI)^-1 (pos_mean - μ), unit-normalized, bias 0.
inline LinearModel lda_detector(const Vector& pos_mean, const WhiteningModel& w) {
  if (pos_mean.size() != w.dim()) throw DataError("lda_detector: dimension mismatch");
  const Vector diff = pos_mean - w.mean;
  if (diff.norm() <= 1e-12 * (1.0 + w.mean.norm()))
    throw NumericError("lda_detector: degenerate seed (positive mean equals background mean)");
  const Vector dir = w.solve(diff);
  const double norm = dir.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw NumericError("lda_detector: degenerate seed");
  LinearModel m;
  m.kind = ModelKind::kLda;
  m.weights = (dir / norm).transpose();
  m.bias = Vector::Zero(1);
  m.label_names = {"detector", "background"};
  return m;
}

// ---------------------------------------------------------------------------
// Multinomial softmax

struct SoftmaxParams {
  double lr = 0.001;
  double momentum = 0.9;
  double gamma = 0.1;
  int step_iters = 20000;
  int total_iters = 100000;
  int batch = 64;
  double weight_decay = 0.0;
  double mirror_prob = 0.5;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"lr", lr},         {"momentum", momentum},       {"gamma", gamma},
            {"step_iters", step_iters}, {"total_iters", total_iters}, {"batch", batch},
            {"weight_decay", weight_decay}, {"mirror_prob", mirror_prob}, {"seed", seed}};
  }
};

// Numerically stable softmax of a logit vector.
inline Vector softmax(const Vector& logits) {
  const double mx = logits.maxCoeff();
  Vector e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

struct SoftmaxGradient {
  double loss = 0.0;  // mean cross-entropy
  Matrix grad_weights;
  Vector grad_bias;
};

// Mean cross-entropy of rows of X under W, b and its exact gradient.
inline SoftmaxGradient softmax_loss_grad(const Matrix& W, const Vector& b, const Matrix& X,
                                         const std::vector<int>& y) {
  const Eigen::Index n = X.rows();
  Matrix logits = X * W.transpose();
  logits.rowwise() += b.transpose();
  SoftmaxGradient g;
  Matrix P(n, W.rows());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const auto e = (logits.row(i).array() - mx).exp();
    const double z = e.sum();
    P.row(i) = e / z;
    g.loss += -(logits(i, y[i]) - mx - std::log(z));
    P(i, y[i]) -= 1.0;
  }
  const double inv = 1.0 / static_cast<double>(n);
  g.loss *= inv;
  g.grad_weights = (P.transpose() * X) * inv;
  g.grad_bias = P.colwise().sum().transpose() * inv;
  return g;
}

// Mini-batch SGD with momentum (v = μ v + lr g; W -= v) and step decay
// lr * gamma^floor(iter / step_iters). Each epoch visits a fresh shuffle.
// When `mirrored` is supplied, row i of it is the mirror of row i of X and
// replaces it with probability mirror_prob each time it is sampled.
inline LinearModel train_softmax(const Matrix& X, const std::vector<int>& y, int classes,
                                 const SoftmaxParams& p = {}, const Matrix* mirrored = nullptr) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (classes < 2) throw ConfigError("train_softmax: need at least two classes");
  if (static_cast<Eigen::Index>(y.size()) != n) throw DataError("train_softmax: label count mismatch");
  if (n < classes) throw DataError("train_softmax: fewer samples than classes");
  for (int label : y)
    if (label < 0 || label >= classes)
      throw DataError("train_softmax: label " + std::to_string(label) + " out of range");
  if (mirrored && (mirrored->rows() != n || mirrored->cols() != d))
    throw DataError("train_softmax: mirrored matrix shape mismatch");
  if (p.batch <= 0 || p.total_iters < 0 || p.step_iters <= 0)
    throw ConfigError("train_softmax: bad schedule");

  Rng rng(p.seed);
  Matrix W = Matrix::Zero(classes, d);
  Vector b = Vector::Zero(classes);
  Matrix vW = Matrix::Zero(classes, d);
  Vector vb = Vector::Zero(classes);
  const Eigen::Index batch = std::min<Eigen::Index>(p.batch, n);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[i] = i;
  std::size_t cursor = order.size();
  Matrix Xb(batch, d);
  std::vector<int> yb(static_cast<std::size_t>(batch));
  for (int iter = 0; iter < p.total_iters; ++iter) {
    for (Eigen::Index k = 0; k < batch; ++k) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      const Eigen::Index i = order[cursor++];
      const bool flip = mirrored && rng.bernoulli(p.mirror_prob);
      Xb.row(k) = flip ? mirrored->row(i) : X.row(i);
      yb[k] = y[i];
    }
    const auto g = softmax_loss_grad(W, b, Xb, yb);
    const double lr = p.lr * std::pow(p.gamma, iter / p.step_iters);
    vW = p.momentum * vW + lr * (g.grad_weights + p.weight_decay * W);
    vb = p.momentum * vb + lr * g.grad_bias;
    W -= vW;
    b -= vb;
  }
  LinearModel m;
  m.kind = ModelKind::kSoftmax;
  m.weights = std::move(W);
  m.bias = std::move(b);
  for (int k = 0; k < classes; ++k) m.label_names.push_back(std::to_string(k));
  m.hyperparameters = p.to_json();
  m.hyperparameters["mirroring"] = mirrored != nullptr;
  return m;
}

inline Vector predict_proba(const LinearModel& m, const Vector& x) {
  if (m.kind != ModelKind::kSoftmax)
    throw DataError("predict_proba requires a softmax model, got " + kind_name(m.kind));
  return softmax(m.scores(x));
}

inline Eigen::Index argmax(const Vector& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// ---------------------------------------------------------------------------
// Model files: one line of JSON header, then K*d weights (row-major) and K
// biases as little-endian float64.

inline void write_model(const std::filesystem::path& path, const LinearModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model " + path.string());
  const nlohmann::json header = {{"format", "portraitminer-linear-model/1"},
                                 {"kind", kind_name(m.kind)},
                                 {"classes", m.classes()},
                                 {"dims", m.dim()},
                                 {"labels", m.label_names},
                                 {"hyperparameters", m.hyperparameters}};
  out << header.dump() << '\n';
  for (Eigen::Index r = 0; r < m.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < m.weights.cols(); ++c) detail::write_le(out, m.weights(r, c));
  for (Eigen::Index r = 0; r < m.bias.size(); ++r) detail::write_le(out, m.bias[r]);
  if (!out) throw DataError("write failed for " + path.string());
}

inline LinearModel read_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("model file not found: " + path.string());
  std::string line;
  std::getline(in, line);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("corrupt model header in " + path.string() + ": " + e.what());
  }
  LinearModel m;
  m.kind = parse_kind(h.at("kind").get<std::string>());
  const auto K = h.at("classes").get<Eigen::Index>();
  const auto d = h.at("dims").get<Eigen::Index>();
  m.label_names = h.at("labels").get<std::vector<std::string>>();
  m.hyperparameters = h.value("hyperparameters", nlohmann::json::object());
  m.weights.resize(K, d);
  m.bias.resize(K);
  for (Eigen::Index r = 0; r < K; ++r)
    for (Eigen::Index c = 0; c < d; ++c) m.weights(r, c) = detail::read_le<double>(in);
  for (Eigen::Index r = 0; r < K; ++r) m.bias[r] = detail::read_le<double>(in);
  if (!in) throw DataError("truncated model file " + path.string());
  return m;
}

}  // namespace portraitminer
