#pragma once

// Three-head volume estimator built from global intensity thresholds.
//
// Each head binarizes the image with `intensity > t`. The thresholds are tuned
// on training samples to minimize the mean of 1 - Tversky for
//   lower (restrictive): alpha = 1 - gamma, beta = gamma
//   mean  (balanced):    alpha = beta = 0.5
//   upper (permissive):  alpha = gamma,     beta = 1 - gamma

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "json.hpp"
#include "wcpvol/error.hpp"
#include "wcpvol/synthgen.hpp"
#include "wcpvol/volumetric_core.hpp"

namespace wcpvol {

struct TriThresholds {
  double t_lower = 0.0;
  double t_mean = 0.0;
  double t_upper = 0.0;
  double gamma = 0.2;
};

inline void to_json(nlohmann::json& j, const TriThresholds& t) {
  j = nlohmann::json{{"t_lower", t.t_lower}, {"t_mean", t.t_mean}, {"t_upper", t.t_upper}, {"gamma", t.gamma}};
}

inline void from_json(const nlohmann::json& j, TriThresholds& t) {
  t.t_lower = j.at("t_lower").get<double>();
  t.t_mean = j.at("t_mean").get<double>();
  t.t_upper = j.at("t_upper").get<double>();
  t.gamma = j.value("gamma", 0.2);
  if (!(t.t_upper <= t.t_mean && t.t_mean <= t.t_lower))
    throw DataError("thresholds must satisfy t_upper <= t_mean <= t_lower");
}

struct TriMask {
  Mask3D lower;
  Mask3D mean;
  Mask3D upper;
};

struct VolumeTriple {
  double lo = 0.0;
  double mid = 0.0;
  double hi = 0.0;
};

struct ThresholdSearch {
  int candidates = 512;
  double low_quantile = 0.001;
  double high_quantile = 0.999;
  double smooth = 1e-6;
};

namespace detail {

// Linear-interpolated quantile of an unsorted buffer (reorders it).
inline double quantile_inplace(std::vector<float>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo_idx = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo_idx);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo_idx), v.end());
  const double lo = v[lo_idx];
  if (frac == 0.0 || lo_idx + 1 >= v.size()) return lo;
  const double hi = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo_idx) + 1, v.end());
  return lo + frac * (hi - lo);
}

// Number of grid entries strictly below v (grid ascending).
inline std::size_t count_below(std::span<const double> grid, double start, double step, double v) {
  const std::size_t g = grid.size();
  double guess = std::ceil((v - start) / step);
  std::size_t m = guess <= 0.0 ? 0 : guess >= static_cast<double>(g) ? g : static_cast<std::size_t>(guess);
  while (m < g && grid[m] < v) ++m;
  while (m > 0 && !(grid[m - 1] < v)) --m;
  return m;
}

}  // namespace detail

// Candidate thresholds are the midpoints of `candidates` equal cells between
// the low and high pooled-intensity quantiles, so they never sit on the
// quantiles themselves.
inline std::vector<double> threshold_grid(std::span<const Sample> train, const ThresholdSearch& search) {
  if (train.empty()) throw ConfigError("threshold search needs a nonempty training set");
  if (search.candidates < 1) throw ConfigError("threshold search needs at least one candidate");
  std::size_t total = 0;
  for (const auto& s : train) total += s.image.size();
  std::vector<float> pooled;
  pooled.reserve(total);
  for (const auto& s : train) pooled.insert(pooled.end(), s.image.data().begin(), s.image.data().end());
  const double lo = detail::quantile_inplace(pooled, search.low_quantile);
  const double hi = detail::quantile_inplace(pooled, search.high_quantile);
  const double step = (hi - lo) / search.candidates;
  std::vector<double> grid(static_cast<std::size_t>(search.candidates));
  for (int c = 0; c < search.candidates; ++c) grid[static_cast<std::size_t>(c)] = lo + (c + 0.5) * step;
  return grid;
}

inline TriThresholds fit_thresholds(std::span<const Sample> train, double gamma, const ThresholdSearch& search = {}) {
  if (train.empty()) throw ConfigError("fit_thresholds: empty training set");
  if (!(gamma > 0.0 && gamma <= 0.5)) throw ConfigError("fit_thresholds: gamma must lie in (0, 0.5]");

  const auto grid = threshold_grid(train, search);
  const std::size_t g = grid.size();
  const double step = g > 1 ? grid[1] - grid[0] : 1.0;
  const double start = grid[0];

  const OverlapParams heads[3] = {
      {1.0 - gamma, gamma, search.smooth}, {0.5, 0.5, search.smooth}, {gamma, 1.0 - gamma, search.smooth}};
  std::vector<double> loss[3] = {std::vector<double>(g, 0.0), std::vector<double>(g, 0.0),
                                 std::vector<double>(g, 0.0)};

  // Per image: histogram voxels by how many candidates lie strictly below them;
  // a voxel is "on" for candidate c iff c < that count.
  std::vector<std::size_t> fg_hist(g + 1), bg_hist(g + 1);
  for (const auto& s : train) {
    if (s.image.dims() != s.truth.dims()) throw DataError("fit_thresholds: image/mask dimension mismatch");
    std::fill(fg_hist.begin(), fg_hist.end(), 0);
    std::fill(bg_hist.begin(), bg_hist.end(), 0);
    const auto px = s.image.data();
    const auto m = s.truth.data();
    for (std::size_t v = 0; v < px.size(); ++v) {
      const std::size_t b = detail::count_below(grid, start, step, px[v]);
      ++(m[v] ? fg_hist : bg_hist)[b];
    }
    const std::size_t fg_total = s.truth.count();
    std::size_t fg_above = 0, bg_above = 0;
    for (std::size_t c = g; c-- > 0;) {
      fg_above += fg_hist[c + 1];
      bg_above += bg_hist[c + 1];
      const ConfusionCounts cc{fg_above, bg_above, fg_total - fg_above};
      for (int h = 0; h < 3; ++h) loss[h][c] += 1.0 - tversky_index(cc, heads[h]);
    }
  }

  auto argmin = [&](const std::vector<double>& l, bool prefer_larger) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < g; ++c) {
      if (prefer_larger ? l[c] <= l[best] : l[c] < l[best]) best = c;
    }
    return grid[best];
  };
  double t[3] = {argmin(loss[0], true), argmin(loss[1], true), argmin(loss[2], false)};
  std::sort(t, t + 3);
  return TriThresholds{t[2], t[1], t[0], gamma};
}

inline Mask3D binarize(const Image3D& image, double threshold) {
  std::vector<std::uint8_t> out(image.size());
  const auto px = image.data();
  for (std::size_t v = 0; v < px.size(); ++v) out[v] = px[v] > threshold ? 1 : 0;
  return Mask3D(image.dims(), std::move(out));
}

inline TriMask predict(const Image3D& image, const TriThresholds& th) {
  return TriMask{binarize(image, th.t_lower), binarize(image, th.t_mean), binarize(image, th.t_upper)};
}

inline VolumeTriple volumes(const TriMask& tm, double voxel_volume) {
  return VolumeTriple{volume(tm.lower, voxel_volume), volume(tm.mean, voxel_volume), volume(tm.upper, voxel_volume)};
}

}  // namespace wcpvol
