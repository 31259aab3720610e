#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "wcpvol/synthgen.hpp"
#include "wcpvol/trimask.hpp"

using namespace wcpvol;

namespace {

std::vector<Sample> noiseless_train(int n) {
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) {
    const Sample s = generate_sample(static_cast<std::uint64_t>(i), 16, 5.0, 2, 6);
    std::vector<float> px(s.truth.data().size());
    for (std::size_t v = 0; v < px.size(); ++v) px[v] = s.truth.data()[v] ? 5.f : 0.f;
    out.push_back(Sample{Image3D(s.image.dims(), px), s.truth, s.spec, i});
  }
  return out;
}

std::vector<Sample> noisy(std::uint64_t seed, int n, double snr, int grid = 24) {
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i)
    out.push_back(generate_sample(derive_seed(seed, static_cast<std::uint64_t>(i)), grid, snr, 2.5, std::min(8.0, grid / 2.0)));
  return out;
}

double mean_loss(const std::vector<Sample>& train, double t, const OverlapParams& p) {
  double l = 0.0;
  for (const auto& s : train) l += 1.0 - tversky_index(binarize(s.image, t), s.truth, p);
  return l;
}

double precision(const Mask3D& pred, const Mask3D& truth) {
  const auto c = confusion(pred, truth);
  return c.tp + c.fp == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

double recall(const Mask3D& pred, const Mask3D& truth) {
  const auto c = confusion(pred, truth);
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

}  // namespace

TEST(FitThresholds, NoiselessSeparableData) {
  const auto train = noiseless_train(6);
  const TriThresholds th = fit_thresholds(train, 0.2);
  for (double t : {th.t_lower, th.t_mean, th.t_upper}) {
    EXPECT_GT(t, 0.0);
    EXPECT_LT(t, 5.0);
  }
  EXPECT_LE(th.t_upper, th.t_mean);
  EXPECT_LE(th.t_mean, th.t_lower);
  for (const auto& s : train) EXPECT_EQ(dice(binarize(s.image, th.t_mean), s.truth), 1.0);
}

TEST(FitThresholds, HalfGammaCollapsesHeads) {
  const TriThresholds th = fit_thresholds(noisy(3, 20, 2.0), 0.5);
  EXPECT_EQ(th.t_lower, th.t_mean);
  EXPECT_EQ(th.t_upper, th.t_mean);
}

TEST(FitThresholds, MatchesBruteForceSearch) {
  const auto train = noisy(8, 6, 1.5, 12);
  ThresholdSearch search;
  search.candidates = 40;
  const double gamma = 0.2;
  const TriThresholds th = fit_thresholds(train, gamma, search);
  const auto grid = threshold_grid(train, search);
  const OverlapParams heads[3] = {{1 - gamma, gamma, 1e-6}, {0.5, 0.5, 1e-6}, {gamma, 1 - gamma, 1e-6}};
  std::vector<double> best;
  for (int h = 0; h < 3; ++h) {
    double arg = grid[0], val = mean_loss(train, grid[0], heads[h]);
    for (std::size_t c = 1; c < grid.size(); ++c) {
      const double l = mean_loss(train, grid[c], heads[h]);
      const bool take = h == 2 ? l < val - 1e-12 : l <= val + 1e-12;
      if (take) arg = grid[c], val = l;
    }
    best.push_back(arg);
  }
  std::sort(best.begin(), best.end());
  EXPECT_DOUBLE_EQ(th.t_upper, best[0]);
  EXPECT_DOUBLE_EQ(th.t_mean, best[1]);
  EXPECT_DOUBLE_EQ(th.t_lower, best[2]);
}

TEST(FitThresholds, AsymmetricHeadsTradePrecisionForRecall) {
  const TriThresholds th = fit_thresholds(noisy(10, 60, 3.0), 0.2);
  EXPECT_LT(th.t_upper, th.t_mean);
  EXPECT_LT(th.t_mean, th.t_lower);
  double p_lo = 0, p_hi = 0, r_lo = 0, r_hi = 0;
  for (const auto& s : noisy(11, 60, 3.0)) {
    const TriMask tm = predict(s.image, th);
    p_lo += precision(tm.lower, s.truth);
    p_hi += precision(tm.upper, s.truth);
    r_lo += recall(tm.lower, s.truth);
    r_hi += recall(tm.upper, s.truth);
  }
  EXPECT_GT(p_lo, p_hi);
  EXPECT_GT(r_hi, r_lo);
}

TEST(FitThresholds, Errors) {
  EXPECT_THROW(fit_thresholds(std::vector<Sample>{}, 0.2), ConfigError);
  const auto train = noisy(1, 2, 2.0, 12);
  EXPECT_THROW(fit_thresholds(train, 0.0), ConfigError);
  EXPECT_THROW(fit_thresholds(train, 0.7), ConfigError);
}

TEST(Predict, ConstantImageBelowThresholds) {
  const Dims d = Dims::cube(5);
  const TriMask tm = predict(Image3D(d, std::vector<float>(d.count(), -1.f)), {1.0, 2.0, 3.0});
  EXPECT_EQ(tm.lower.count(), 0u);
  EXPECT_EQ(tm.mean.count(), 0u);
  EXPECT_EQ(tm.upper.count(), 0u);
  EXPECT_EQ(volumes(tm, 1.0).hi, 0.0);
}

TEST(Predict, EqualThresholdsGiveEqualMasks) {
  const Sample s = generate_sample(4, 16, 2.0, 3, 6);
  const TriMask tm = predict(s.image, {1.0, 1.0, 1.0});
  EXPECT_TRUE(std::equal(tm.lower.data().begin(), tm.lower.data().end(), tm.upper.data().begin()));
  EXPECT_TRUE(std::equal(tm.mean.data().begin(), tm.mean.data().end(), tm.upper.data().begin()));
}

TEST(Predict, FittedMeanMaskAtSnrFour) {
  const TriThresholds th = fit_thresholds(noisy(20, 80, 4.0, 32), 0.2);
  const Sample s = generate_sample(12345, 32, 4.0, 4, 10);
  EXPECT_GE(dice(predict(s.image, th).mean, s.truth), 0.85);
}

TEST(Predict, MasksAreNested) {
  const TriThresholds th{1.5, 1.0, 0.5, 0.2};
  for (const auto& s : noisy(30, 20, 2.0, 16)) {
    const TriMask tm = predict(s.image, th);
    for (std::size_t v = 0; v < s.image.size(); ++v) {
      EXPECT_LE(tm.lower.data()[v], tm.mean.data()[v]);
      EXPECT_LE(tm.mean.data()[v], tm.upper.data()[v]);
    }
  }
}

TEST(Volumes, HandCounts) {
  const Dims d{3, 1, 1};
  const TriMask tm{Mask3D(d, {1, 0, 0}), Mask3D(d, {1, 1, 0}), Mask3D(d, {1, 1, 1})};
  const VolumeTriple v = volumes(tm, 1.0);
  EXPECT_EQ(v.lo, 1.0);
  EXPECT_EQ(v.mid, 2.0);
  EXPECT_EQ(v.hi, 3.0);
}

TEST(Volumes, OrderedOnGeneratedSamples) {
  const TriThresholds th = fit_thresholds(noisy(40, 30, 3.0, 16), 0.2);
  for (const auto& s : noisy(41, 300, 2.5, 16)) {
    const VolumeTriple v = volumes(predict(s.image, th), 1.0);
    EXPECT_LE(v.lo, v.mid);
    EXPECT_LE(v.mid, v.hi);
  }
}

TEST(Thresholds, JsonRoundTripAndValidation) {
  const TriThresholds th{2.5, 1.25, 0.125, 0.2};
  const nlohmann::json j = th;
  const auto back = j.get<TriThresholds>();
  EXPECT_EQ(back.t_lower, th.t_lower);
  EXPECT_EQ(back.t_mean, th.t_mean);
  EXPECT_EQ(back.t_upper, th.t_upper);
  EXPECT_EQ(back.gamma, th.gamma);
  nlohmann::json bad = j;
  bad["t_upper"] = 3.0;
  EXPECT_ANY_THROW(bad.get<TriThresholds>());
}
