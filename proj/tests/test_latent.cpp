#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "wcpvol/latent.hpp"
#include "wcpvol/synthgen.hpp"

using namespace wcpvol;
namespace fs = std::filesystem;

namespace {

Image3D noise_image(std::uint64_t seed, Dims d) {
  Rng rng(seed);
  std::vector<float> px(d.count());
  for (auto& v : px) v = static_cast<float>(rng.normal());
  return Image3D(d, px);
}

// Direct valid cross-correlation, one kernel at a time.
std::vector<double> brute_force(const Image3D& img, const FilterBank& bank, LatentMode mode) {
  const int ks = bank.kernel_size();
  const Dims d = img.dims();
  std::vector<double> z;
  for (int f = 0; f < bank.count(); ++f) {
    const auto w = bank.kernel(f);
    double acc = 0.0;
    std::size_t n = 0;
    for (int k = 0; k + ks <= d.z; ++k)
      for (int j = 0; j + ks <= d.y; ++j)
        for (int i = 0; i + ks <= d.x; ++i, ++n) {
          double r = 0.0;
          for (int c = 0; c < ks; ++c)
            for (int b = 0; b < ks; ++b)
              for (int a = 0; a < ks; ++a)
                r += w[static_cast<std::size_t>((c * ks + b) * ks + a)] * img.at(i + a, j + b, k + c);
          acc += mode == LatentMode::raw ? r : mode == LatentMode::abs ? std::abs(r) : r * r;
        }
    z.push_back(acc / static_cast<double>(n));
  }
  return z;
}

FilterBank difference_kernel() {
  std::vector<double> w(27, 0.0);
  w[0] = 1.0 / std::sqrt(2.0);
  w[1] = -1.0 / std::sqrt(2.0);
  return FilterBank(1, 3, w);
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::string tmp_path(const char* name) { return (fs::temp_directory_path() / name).string(); }

}  // namespace

TEST(FilterBank, DeterministicAndNormalized) {
  const FilterBank a = make_filter_bank(5), b = make_filter_bank(5), c = make_filter_bank(6);
  EXPECT_EQ(a.count(), 64);
  EXPECT_EQ(a.kernel_size(), 3);
  EXPECT_TRUE(std::equal(a.weights().begin(), a.weights().end(), b.weights().begin()));
  EXPECT_FALSE(std::equal(a.weights().begin(), a.weights().end(), c.weights().begin()));
  for (int k = 0; k < a.count(); ++k) {
    double s = 0.0, q = 0.0;
    for (double w : a.kernel(k)) s += w, q += w * w;
    EXPECT_NEAR(s, 0.0, 1e-12);
    EXPECT_NEAR(q, 1.0, 1e-12);
  }
}

TEST(FilterBank, RejectsBadShapes) {
  EXPECT_THROW(make_filter_bank(1, 0), ConfigError);
  EXPECT_THROW(make_filter_bank(1, 8, 4), ConfigError);
  EXPECT_THROW(make_filter_bank(1, 8, 1), ConfigError);
  EXPECT_THROW(FilterBank(1, 3, std::vector<double>(27, 1.0)), DataError);
  EXPECT_THROW(FilterBank(1, 3, std::vector<double>(5, 0.0)), DataError);
}

TEST(Extract, ConstantImageGivesZeros) {
  const Dims d = Dims::cube(8);
  const Image3D img(d, std::vector<float>(d.count(), 3.25f));
  const FilterBank bank = make_filter_bank(1);
  for (auto mode : {LatentMode::raw, LatentMode::abs, LatentMode::square}) {
    const auto z = extract(img, bank, mode).values;
    ASSERT_EQ(z.size(), 64u);
    for (double v : z) EXPECT_NEAR(v, 0.0, 1e-12);
  }
}

TEST(Extract, DifferenceKernelMatchesHandLoop) {
  const Image3D img = noise_image(3, Dims::cube(8));
  for (auto mode : {LatentMode::raw, LatentMode::abs, LatentMode::square}) {
    double acc = 0.0;
    for (int k = 0; k < 6; ++k)
      for (int j = 0; j < 6; ++j)
        for (int i = 0; i < 6; ++i) {
          const double r = (static_cast<double>(img.at(i, j, k)) - img.at(i + 1, j, k)) / std::sqrt(2.0);
          acc += mode == LatentMode::raw ? r : mode == LatentMode::abs ? std::abs(r) : r * r;
        }
    EXPECT_NEAR(extract(img, difference_kernel(), mode).values[0], acc / 216.0, 1e-12);
  }
}

TEST(Extract, MatchesBruteForceCorrelation) {
  const Image3D img = noise_image(9, Dims{9, 7, 8});
  const FilterBank bank = make_filter_bank(2, 6, 3);
  for (auto mode : {LatentMode::raw, LatentMode::abs, LatentMode::square}) {
    const auto z = extract(img, bank, mode).values;
    const auto ref = brute_force(img, bank, mode);
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(z[i], ref[i], 1e-10);
  }
  const FilterBank five = make_filter_bank(4, 3, 5);
  const auto z = extract(img, five, LatentMode::abs).values;
  const auto ref = brute_force(img, five, LatentMode::abs);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(z[i], ref[i], 1e-10);
}

TEST(Extract, RawModeIsLinear) {
  const Image3D img = noise_image(4, Dims::cube(10));
  const FilterBank bank = make_filter_bank(8);
  const auto base = extract(img, bank).values;
  for (float a : {2.f, -0.5f, 4.f}) {
    std::vector<float> px(img.data().begin(), img.data().end());
    for (auto& v : px) v *= a;
    const auto scaled = extract(Image3D(img.dims(), px), bank).values;
    for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(scaled[i], a * base[i], 1e-9 * (1.0 + std::abs(base[i])));
  }
}

TEST(Extract, StableUnderOneVoxelTranslation) {
  const Dims d = Dims::cube(32);
  const Image3D noise = noise_image(12, d);
  auto with_sphere = [&](double cx) {
    const Mask3D m = digitize_sphere(d, cx, 15.0, 15.0, 7.0);
    std::vector<float> px(noise.data().begin(), noise.data().end());
    for (std::size_t v = 0; v < px.size(); ++v) px[v] += 3.f * m.data()[v];
    return Image3D(d, px);
  };
  const FilterBank bank = make_filter_bank(6);
  for (auto mode : {LatentMode::abs, LatentMode::square}) {
    const auto a = extract(with_sphere(15.0), bank, mode).values;
    const auto b = extract(with_sphere(16.0), bank, mode).values;
    std::vector<double> diff(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
    EXPECT_LT(norm(diff), 0.1 * norm(a));
  }
}

TEST(Extract, ImageSmallerThanKernel) {
  const Dims d{2, 5, 5};
  EXPECT_THROW(extract(Image3D(d, std::vector<float>(d.count())), make_filter_bank(1)), DataError);
}

TEST(Extract, EnergyGrowsWithContrast) {
  const FilterBank bank = make_filter_bank(7);
  const Sample lo = generate_sample(50, 32, 1.0, 7, 7);
  const Sample hi = generate_sample(50, 32, 4.0, 7, 7);
  EXPECT_GT(norm(extract(hi.image, bank, LatentMode::square).values),
            norm(extract(lo.image, bank, LatentMode::square).values));
}

TEST(LatentIo, RoundTrip) {
  std::vector<LatentVector> zs;
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    LatentVector z;
    z.sample_id = 100 + i;
    for (int k = 0; k < 64; ++k) z.values.push_back(rng.normal() * 1e-3);
    zs.push_back(z);
  }
  const auto path = tmp_path("wcpvol_latents.csv");
  save_latents(path, zs);
  const auto back = load_latents(path);
  ASSERT_EQ(back.size(), zs.size());
  for (std::size_t i = 0; i < zs.size(); ++i) {
    EXPECT_EQ(back[i].sample_id, zs[i].sample_id);
    EXPECT_EQ(back[i].values, zs[i].values);
  }
  fs::remove(path);
}

TEST(LatentIo, SingleRow) {
  LatentVector z;
  z.values.assign(64, 0.5);
  const auto path = tmp_path("wcpvol_latent_one.csv");
  save_latents(path, {z});
  const auto back = load_latents(path);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].values.size(), 64u);
  fs::remove(path);
}

TEST(LatentIo, MalformedFiles) {
  const auto path = tmp_path("wcpvol_latent_bad.csv");
  auto write = [&](const char* text) {
    std::ofstream(path) << text;
  };
  write("");
  EXPECT_THROW(load_latents(path), DataError);
  write("id,z0,z1\n0,1,2\n1,3\n");
  EXPECT_THROW(load_latents(path), DataError);
  write("id,a,b\n0,1,2\n");
  EXPECT_THROW(load_latents(path), DataError);
  write("id,z0\n0,abc\n");
  EXPECT_THROW(load_latents(path), DataError);
  write("id,z0,z1\n");
  EXPECT_THROW(load_latents(path), DataError);
  fs::remove(path);
  EXPECT_THROW(load_latents(path), DataError);
}

TEST(LatentMode, StringConversion) {
  for (auto m : {LatentMode::raw, LatentMode::abs, LatentMode::square})
    EXPECT_EQ(latent_mode_from_string(to_string(m)), m);
  EXPECT_THROW(latent_mode_from_string("max"), ConfigError);
}
