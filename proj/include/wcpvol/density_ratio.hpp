#pragma once

// Density-ratio weights from a calibration-vs-test probabilistic classifier:
//
//   p(x) = P(test | x)   (L2-regularized logistic regression, cross-fitted)
//   w(x) = p / (1 - p)   with p clipped to [0.01, 0.99]

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wcpvol/error.hpp"
#include "wcpvol/random.hpp"

namespace wcpvol {

// Per-feature affine map. Inactive (zero-variance) features map to 0.
struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
  std::vector<bool> active;

  Eigen::Index dims() const { return mean.size(); }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& rows) const {
    if (rows.cols() != dims()) throw DataError("standardization: feature count mismatch");
    Eigen::MatrixXd out(rows.rows(), rows.cols());
    for (Eigen::Index j = 0; j < dims(); ++j) {
      if (active[static_cast<std::size_t>(j)])
        out.col(j) = (rows.col(j).array() - mean[j]) / scale[j];
      else
        out.col(j).setZero();
    }
    return out;
  }

  static Standardization fit(const Eigen::MatrixXd& rows) {
    if (rows.rows() < 1 || rows.cols() < 1) throw DataError("standardization: empty feature matrix");
    if (!rows.allFinite()) throw DataError("standardization: non-finite features");
    Standardization s;
    const auto n = static_cast<double>(rows.rows());
    s.mean = rows.colwise().mean().transpose();
    s.scale.resize(rows.cols());
    s.active.assign(static_cast<std::size_t>(rows.cols()), false);
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      const double var = (rows.col(j).array() - s.mean[j]).square().sum() / n;
      const double sd = std::sqrt(var);
      s.scale[j] = sd > 0.0 ? sd : 1.0;
      s.active[static_cast<std::size_t>(j)] = sd > 1e-12 * std::max(1.0, std::abs(s.mean[j]));
    }
    return s;
  }
};

// Rows are standardized samples, labels 0 = calibration, 1 = test.
struct FeatureMatrix {
  Eigen::MatrixXd rows;
  std::vector<std::uint8_t> labels;
  Standardization standardization;

  // Standardizes `raw` with its own pooled mean / stddev.
  static FeatureMatrix from_raw(const Eigen::MatrixXd& raw, std::vector<std::uint8_t> labels) {
    if (static_cast<std::size_t>(raw.rows()) != labels.size())
      throw DataError("feature matrix: row count does not match label count");
    FeatureMatrix fm;
    fm.standardization = Standardization::fit(raw);
    fm.rows = fm.standardization.apply(raw);
    fm.labels = std::move(labels);
    return fm;
  }
};

struct LogisticModel {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  double l2_lambda = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
};

struct LogisticOptions {
  double l2_lambda = 1e-4;
  double tol = 1e-8;
  int max_iter = 500;
};

inline double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// log(1 + exp(eta)) without overflow.
inline double softplus(double eta) { return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

// sum_i [c_i eta_i - log(1 + e^eta_i)] - lambda/2 |coef|^2, intercept unpenalized.
inline double penalized_log_likelihood(const Eigen::MatrixXd& x, std::span<const std::uint8_t> labels,
                                       const Eigen::VectorXd& coef, double intercept, double l2_lambda) {
  const Eigen::VectorXd eta = (x * coef).array() + intercept;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += labels[static_cast<std::size_t>(i)] * eta[i] - softplus(eta[i]);
  return ll - 0.5 * l2_lambda * coef.squaredNorm();
}

// Gradient of penalized_log_likelihood; the last entry is d/d intercept.
inline Eigen::VectorXd penalized_gradient(const Eigen::MatrixXd& x, std::span<const std::uint8_t> labels,
                                          const Eigen::VectorXd& coef, double intercept, double l2_lambda) {
  const Eigen::Index d = x.cols();
  Eigen::VectorXd resid(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    resid[i] = labels[static_cast<std::size_t>(i)] - sigmoid(x.row(i).dot(coef) + intercept);
  Eigen::VectorXd g(d + 1);
  g.head(d) = x.transpose() * resid - l2_lambda * coef;
  g[d] = resid.sum();
  return g;
}

namespace detail {

inline void check_labels(std::span<const std::uint8_t> labels, Eigen::Index rows) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) throw DataError("logistic: labels and rows differ in length");
  std::size_t ones = 0;
  for (auto c : labels) {
    if (c > 1) throw DataError("logistic: labels must be 0 or 1");
    ones += c;
  }
  if (ones == 0 || ones == labels.size()) throw DataError("logistic: need samples of both classes");
}

// Newton / IRLS on the active columns with backtracking on the objective.
inline LogisticModel fit_logistic_active(const Eigen::MatrixXd& x, std::span<const std::uint8_t> labels,
                                         const std::vector<bool>& active, const LogisticOptions& opt) {
  const Eigen::Index n = x.rows();
  std::vector<Eigen::Index> cols;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    if (active[static_cast<std::size_t>(j)]) cols.push_back(j);
  const auto d = static_cast<Eigen::Index>(cols.size());

  // Design matrix with a trailing intercept column.
  Eigen::MatrixXd a(n, d + 1);
  for (Eigen::Index j = 0; j < d; ++j) a.col(j) = x.col(cols[static_cast<std::size_t>(j)]);
  a.col(d).setOnes();
  Eigen::VectorXd c(n);
  for (Eigen::Index i = 0; i < n; ++i) c[i] = labels[static_cast<std::size_t>(i)];

  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(d + 1, opt.l2_lambda);
  penalty[d] = 0.0;

  auto objective = [&](const Eigen::VectorXd& th) {
    const Eigen::VectorXd eta = a * th;
    double ll = c.dot(eta);
    for (Eigen::Index i = 0; i < n; ++i) ll -= softplus(eta[i]);
    return ll - 0.5 * (penalty.array() * th.array().square()).sum();
  };

  // Start from the intercept-only optimum.
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1);
  const double prior = c.mean();
  theta[d] = std::log(prior / (1.0 - prior));

  LogisticModel m;
  m.l2_lambda = opt.l2_lambda;
  double f = objective(theta);
  Eigen::VectorXd p(n), grad(d + 1);
  Eigen::MatrixXd hess(d + 1, d + 1);
  for (int it = 0;; ++it) {
    const Eigen::VectorXd eta = a * theta;
    for (Eigen::Index i = 0; i < n; ++i) p[i] = sigmoid(eta[i]);
    grad = a.transpose() * (c - p) - penalty.cwiseProduct(theta);
    m.gradient_norm = grad.lpNorm<Eigen::Infinity>();
    m.iterations = it;
    if (m.gradient_norm <= opt.tol) {
      m.converged = true;
      break;
    }
    if (it >= opt.max_iter) break;

    const Eigen::VectorXd w = (p.array() * (1.0 - p.array())).max(1e-12);
    hess.noalias() = a.transpose() * w.asDiagonal() * a;
    hess.diagonal() += penalty;
    hess.diagonal().array() += 1e-12;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);

    // Near the optimum the objective gain of a Newton step is below the
    // rounding error of f, so the full step is accepted within that noise.
    const double noise = 1e-12 * (1.0 + std::abs(f));
    Eigen::VectorXd next = theta + step;
    double f_next = objective(next);
    if (!(f_next >= f - noise)) {
      double t = 1.0;
      do {
        t *= 0.5;
        next = theta + t * step;
        f_next = objective(next);
      } while (!(f_next > f) && t > 1e-10);
      if (!(f_next > f)) break;  // no ascent possible at double precision
    }
    theta = next;
    f = f_next;
  }

  m.coefficients = Eigen::VectorXd::Zero(x.cols());
  for (Eigen::Index j = 0; j < d; ++j) m.coefficients[cols[static_cast<std::size_t>(j)]] = theta[j];
  m.intercept = theta[d];
  return m;
}

}  // namespace detail

// Maximizes the penalized log-likelihood. Zero-variance columns keep a zero
// coefficient.
inline LogisticModel fit_logistic(const FeatureMatrix& features, const LogisticOptions& opt = {}) {
  if (features.rows.cols() < 1) throw DataError("fit_logistic: need at least one feature");
  if (!features.rows.allFinite()) throw DataError("fit_logistic: non-finite features");
  detail::check_labels(features.labels, features.rows.rows());
  std::vector<bool> active = features.standardization.active;
  if (active.size() != static_cast<std::size_t>(features.rows.cols()))
    active.assign(static_cast<std::size_t>(features.rows.cols()), true);
  for (Eigen::Index j = 0; j < features.rows.cols(); ++j)
    if (features.rows.col(j).isZero(0.0)) active[static_cast<std::size_t>(j)] = false;
  return detail::fit_logistic_active(features.rows, features.labels, active, opt);
}

// `x` must already be standardized with the model's standardization.
inline double predict_proba(const LogisticModel& model, std::span<const double> x) {
  if (static_cast<Eigen::Index>(x.size()) != model.coefficients.size())
    throw DataError("predict_proba: expected " + std::to_string(model.coefficients.size()) + " features, got " +
                    std::to_string(x.size()));
  double eta = model.intercept;
  for (std::size_t j = 0; j < x.size(); ++j) eta += model.coefficients[static_cast<Eigen::Index>(j)] * x[j];
  return sigmoid(eta);
}

// Stratified fold ids: each class is shuffled on its own stream and dealt
// round-robin across folds.
inline std::vector<int> stratified_folds(std::span<const std::uint8_t> labels, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("stratified_folds: need at least 2 folds");
  std::vector<int> fold(labels.size(), 0);
  for (std::uint8_t cls = 0; cls <= 1; ++cls) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) idx.push_back(i);
    Rng rng(derive_seed(seed, cls));
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t r = 0; r < idx.size(); ++r) fold[idx[r]] = static_cast<int>(r % static_cast<std::size_t>(folds));
  }
  return fold;
}

// Out-of-fold probabilities for a standardized feature matrix and an explicit
// fold assignment.
inline std::vector<double> out_of_fold_probabilities(const FeatureMatrix& features, std::span<const int> fold,
                                                     const LogisticOptions& opt) {
  const Eigen::Index n = features.rows.rows();
  if (static_cast<Eigen::Index>(fold.size()) != n) throw DataError("out_of_fold: fold assignment length mismatch");
  const int folds = fold.empty() ? 0 : *std::max_element(fold.begin(), fold.end()) + 1;
  std::vector<double> probs(static_cast<std::size_t>(n), 0.5);
  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train_idx, held_idx;
    for (Eigen::Index i = 0; i < n; ++i) (fold[static_cast<std::size_t>(i)] == f ? held_idx : train_idx).push_back(i);
    if (held_idx.empty()) continue;
    FeatureMatrix train;
    train.rows.resize(static_cast<Eigen::Index>(train_idx.size()), features.rows.cols());
    train.labels.resize(train_idx.size());
    for (std::size_t r = 0; r < train_idx.size(); ++r) {
      train.rows.row(static_cast<Eigen::Index>(r)) = features.rows.row(train_idx[r]);
      train.labels[r] = features.labels[static_cast<std::size_t>(train_idx[r])];
    }
    train.standardization = features.standardization;
    const LogisticModel model = fit_logistic(train, opt);
    for (Eigen::Index i : held_idx) {
      const Eigen::VectorXd row = features.rows.row(i).transpose();
      probs[static_cast<std::size_t>(i)] = predict_proba(model, std::span<const double>(row.data(), row.size()));
    }
  }
  return probs;
}

struct CrossFitResult {
  std::vector<double> calib_probs;
  std::vector<double> test_probs;
  int folds_used = 0;
};

// Pools calibration (label 0) and test (label 1) rows, standardizes with the
// pooled statistics and returns out-of-fold P(test | x) for every row. If a
// class has fewer rows than `folds`, the fold count drops to that size.
inline CrossFitResult cross_fit_probabilities(const Eigen::MatrixXd& calib, const Eigen::MatrixXd& test, int folds,
                                              std::uint64_t seed, const LogisticOptions& opt = {}) {
  if (folds < 2) throw ConfigError("cross_fit_probabilities: folds must be >= 2");
  if (calib.cols() != test.cols()) throw DataError("cross_fit_probabilities: feature counts differ");
  const Eigen::Index n = calib.rows(), m = test.rows();
  const Eigen::Index min_class = std::min(n, m);
  if (min_class < 2) throw DataError("cross_fit_probabilities: need at least 2 samples per class");
  const int used = static_cast<int>(std::min<Eigen::Index>(folds, min_class));

  Eigen::MatrixXd pooled(n + m, calib.cols());
  pooled.topRows(n) = calib;
  pooled.bottomRows(m) = test;
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(n + m), 0);
  std::fill(labels.begin() + n, labels.end(), 1);
  const FeatureMatrix fm = FeatureMatrix::from_raw(pooled, labels);
  const auto fold = stratified_folds(fm.labels, used, seed);
  const auto probs = out_of_fold_probabilities(fm, fold, opt);

  CrossFitResult out;
  out.calib_probs.assign(probs.begin(), probs.begin() + n);
  out.test_probs.assign(probs.begin() + n, probs.end());
  out.folds_used = used;
  return out;
}

struct WeightEstimate {
  double prob = 0.5;
  double weight = 1.0;
};

inline constexpr double kMinProb = 0.01;
inline constexpr double kMaxProb = 0.99;

inline WeightEstimate weight_from_prob(double p) {
  if (!std::isfinite(p)) throw DataError("weights_from_probs: non-finite probability");
  const double clipped = std::clamp(p, kMinProb, kMaxProb);
  return WeightEstimate{clipped, clipped / (1.0 - clipped)};
}

inline std::vector<WeightEstimate> weights_from_probs(std::span<const double> probs) {
  std::vector<WeightEstimate> out;
  out.reserve(probs.size());
  for (double p : probs) out.push_back(weight_from_prob(p));
  return out;
}

// prob == 0.5 is predicted as class 0.
inline double classifier_accuracy(std::span<const double> probs, std::span<const std::uint8_t> labels) {
  if (probs.size() != labels.size()) throw DataError("classifier_accuracy: length mismatch");
  if (probs.empty()) throw DataError("classifier_accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) hits += static_cast<std::uint8_t>(probs[i] > 0.5) == labels[i];
  return static_cast<double>(hits) / static_cast<double>(probs.size());
}

}  // namespace wcpvol
