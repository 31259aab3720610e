#pragma once

// Split conformal calibration of volume intervals, standard and weighted.
//
//   score        s_i = max(l_i - Y_i, Y_i - u_i)
//   standard     q = k-th smallest score, k = ceil((n + 1)(1 - alpha)), +inf if k > n
//   weighted     q(x) = inf { s_j : sum_i p_i(x) 1{s_i <= s_j} >= 1 - alpha },
//                p_i(x) = w(X_i) / (sum_j w(X_j) + w(x)); +inf if no s_j qualifies
//   interval     [max(0, l - q), u + q]

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "wcpvol/error.hpp"
#include "wcpvol/trimask.hpp"

namespace wcpvol {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Relative slack on the quantile-level comparisons. Absorbs rounding in
// (n + 1)(1 - alpha) and in cumulative weight sums; far below any gap a real
// weight or alpha can produce.
inline constexpr double kLevelSlack = 1e-12;

struct QuantileResult {
  double q_hat = 0.0;  // +inf when the level cannot be reached
  double alpha = 0.05;
  bool weighted = false;

  bool infinite() const { return std::isinf(q_hat); }
};

struct NormalizedWeights {
  std::vector<double> p;
  double p_test = 0.0;
};

struct PredictiveInterval {
  double lo = 0.0;
  double hi = 0.0;  // may be +inf
  double alpha = 0.05;
  double q_hat_used = 0.0;

  bool contains(double y) const { return lo <= y && y <= hi; }
  double width() const { return hi - lo; }
};

inline double score(double lo, double hi, double y) {
  if (lo > hi) throw DataError("score: lower bound exceeds upper bound");
  return std::max(lo - y, y - hi);
}

inline double score(const VolumeTriple& vt, double y) { return score(vt.lo, vt.hi, y); }

namespace detail {

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
}

// Smallest count k with k >= level * total (up to kLevelSlack).
inline std::size_t required_rank(std::size_t n, double alpha) {
  const double target = static_cast<double>(n + 1) * (1.0 - alpha);
  return static_cast<std::size_t>(std::ceil(target * (1.0 - kLevelSlack)));
}

}  // namespace detail

inline QuantileResult standard_quantile(std::span<const double> scores, double alpha) {
  detail::check_alpha(alpha);
  if (scores.empty()) throw DataError("standard_quantile: empty score set");
  const std::size_t n = scores.size();
  const std::size_t k = std::max<std::size_t>(1, detail::required_rank(n, alpha));
  if (k > n) return QuantileResult{kInf, alpha, false};
  std::vector<double> s(scores.begin(), scores.end());
  std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(k - 1), s.end());
  return QuantileResult{s[k - 1], alpha, false};
}

inline NormalizedWeights normalized_weights(std::span<const double> w_calib, double w_test) {
  auto bad = [](double w) { return !(w > 0.0) || !std::isfinite(w); };
  if (bad(w_test) || std::any_of(w_calib.begin(), w_calib.end(), bad))
    throw DataError("normalized_weights: weights must be finite and positive");
  const double total = std::accumulate(w_calib.begin(), w_calib.end(), 0.0) + w_test;
  NormalizedWeights out;
  out.p.reserve(w_calib.size());
  for (double w : w_calib) out.p.push_back(w / total);
  out.p_test = w_test / total;
  return out;
}

inline QuantileResult weighted_quantile(std::span<const double> scores, const NormalizedWeights& weights,
                                        double alpha) {
  detail::check_alpha(alpha);
  if (scores.size() != weights.p.size()) throw DataError("weighted_quantile: scores and weights differ in length");
  if (scores.empty()) throw DataError("weighted_quantile: empty score set");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  const double level = (1.0 - alpha) * (1.0 - kLevelSlack);
  double cum = 0.0;
  for (std::size_t r = 0; r < order.size();) {
    // Mass at a score value includes every tie.
    const double s = scores[order[r]];
    while (r < order.size() && scores[order[r]] == s) cum += weights.p[order[r++]];
    if (cum >= level) return QuantileResult{s, alpha, true};
  }
  return QuantileResult{kInf, alpha, true};
}

// Sorted calibration scores with prefix sums of unnormalized weights; answers
// weighted_quantile for any test weight in O(log n).
class WeightedCalibrator {
 public:
  WeightedCalibrator(std::span<const double> scores, std::span<const double> w_calib, double alpha) : alpha_(alpha) {
    detail::check_alpha(alpha);
    if (scores.size() != w_calib.size()) throw DataError("WeightedCalibrator: scores and weights differ in length");
    if (scores.empty()) throw DataError("WeightedCalibrator: empty score set");
    for (double w : w_calib)
      if (!(w > 0.0) || !std::isfinite(w)) throw DataError("WeightedCalibrator: weights must be finite and positive");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double cum = 0.0;
    for (std::size_t r = 0; r < order.size();) {
      const double s = scores[order[r]];
      while (r < order.size() && scores[order[r]] == s) cum += w_calib[order[r++]];
      values_.push_back(s);
      cum_.push_back(cum);
    }
    total_ = cum;
  }

  QuantileResult quantile(double w_test) const {
    if (!(w_test > 0.0) || !std::isfinite(w_test)) throw DataError("WeightedCalibrator: test weight must be positive");
    const double need = (1.0 - alpha_) * (1.0 - kLevelSlack) * (total_ + w_test);
    const auto it = std::lower_bound(cum_.begin(), cum_.end(), need);
    if (it == cum_.end()) return QuantileResult{kInf, alpha_, true};
    return QuantileResult{values_[static_cast<std::size_t>(it - cum_.begin())], alpha_, true};
  }

  double total_weight() const { return total_; }

 private:
  double alpha_;
  std::vector<double> values_;
  std::vector<double> cum_;
  double total_ = 0.0;
};

// A negative q can cross the bounds; the interval then collapses to its
// midpoint.
inline PredictiveInterval calibrated_interval(const VolumeTriple& vt, const QuantileResult& q) {
  if (q.infinite()) return PredictiveInterval{0.0, kInf, q.alpha, q.q_hat};
  double lo = std::max(0.0, vt.lo - q.q_hat);
  double hi = vt.hi + q.q_hat;
  if (hi < lo) lo = hi = std::max(0.0, 0.5 * (vt.lo + vt.hi));
  return PredictiveInterval{lo, hi, q.alpha, q.q_hat};
}

inline double coverage(std::span<const PredictiveInterval> intervals, std::span<const double> truths) {
  if (intervals.size() != truths.size()) throw DataError("coverage: intervals and truths differ in length");
  if (intervals.empty()) throw DataError("coverage: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < intervals.size(); ++i) hit += intervals[i].contains(truths[i]);
  return static_cast<double>(hit) / static_cast<double>(intervals.size());
}

inline double mean_width(std::span<const PredictiveInterval> intervals) {
  if (intervals.empty()) throw DataError("mean_width: empty input");
  double sum = 0.0;
  for (const auto& iv : intervals) {
    if (std::isinf(iv.hi)) return kInf;
    sum += iv.width();
  }
  return sum / static_cast<double>(intervals.size());
}

}  // namespace wcpvol
