#pragma once

// Synthetic sphere phantoms with a controlled signal-to-noise ratio.
//
// Voxel (i, j, k) has its center at coordinate (i, j, k); the grid spans
// [-0.5, dim - 0.5] on every axis. A voxel belongs to a sphere iff its center
// lies within the radius.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "wcpvol/error.hpp"
#include "wcpvol/random.hpp"
#include "wcpvol/volumetric_core.hpp"

namespace wcpvol {

struct SphereSpec {
  double cx = 0.0, cy = 0.0, cz = 0.0;
  double radius = 1.0;
  double fg_intensity = 1.0;
  double bg_intensity = 0.0;
  double noise_sigma = 1.0;
  // (fg - bg) / noise_sigma
  double snr = 1.0;
};

struct Sample {
  Image3D image;
  Mask3D truth;
  SphereSpec spec;
  std::int64_t id = 0;
};

enum class Split { train, calib, id_test, shift_test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::calib: return "calib";
    case Split::id_test: return "id_test";
    case Split::shift_test: return "shift_test";
  }
  return "?";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "calib") return Split::calib;
  if (s == "id_test") return Split::id_test;
  if (s == "shift_test") return Split::shift_test;
  throw DataError("unknown split '" + s + "'");
}

enum class SnrLaw { uniform, normal };

// Distribution of the SNR covariate.
//   uniform: U(a, b)
//   normal:  N(a, b^2) truncated to [min_snr, max_snr] by redrawing
struct SnrDistribution {
  SnrLaw law = SnrLaw::uniform;
  double a = 2.0;
  double b = 5.0;
  double min_snr = 0.25;
  double max_snr = std::numeric_limits<double>::infinity();

  void validate(const std::string& name) const {
    if (!std::isfinite(a) || !std::isfinite(b)) throw ConfigError(name + ": parameters must be finite");
    if (law == SnrLaw::uniform) {
      if (!(a > 0.0) || !(b >= a)) throw ConfigError(name + ": uniform SNR range needs 0 < low <= high");
    } else {
      if (!(b > 0.0)) throw ConfigError(name + ": normal SNR stddev must be positive");
      if (!(min_snr > 0.0) || !(max_snr > min_snr))
        throw ConfigError(name + ": normal SNR truncation needs 0 < min_snr < max_snr");
      if (a + 6.0 * b < min_snr || a - 6.0 * b > max_snr)
        throw ConfigError(name + ": truncation window has negligible mass");
    }
  }

  double lowest() const { return law == SnrLaw::uniform ? a : min_snr; }
  double highest() const { return law == SnrLaw::uniform ? b : max_snr; }

  double draw(Rng& rng) const {
    if (law == SnrLaw::uniform) return rng.uniform(a, b);
    for (;;) {
      const double s = rng.normal(a, b);
      if (s >= min_snr && s <= max_snr) return s;
    }
  }
};

struct GenerationConfig {
  int grid_dim = 32;
  double radius_min = 4.0;
  double radius_max = 10.0;
  double bg_intensity = 0.0;
  double noise_sigma = 1.0;
  double voxel_volume = 1.0;
  int n_train = 1000;
  int n_calib = 1000;
  int n_id_test = 1000;
  int n_shift_test = 1000;
  SnrDistribution id_snr{SnrLaw::normal, 3.0, 0.8, 0.25};
  SnrDistribution shift_snr{SnrLaw::normal, 1.9, 0.8, 0.25};

  void validate() const {
    if (grid_dim < 8) throw ConfigError("grid_dim must be >= 8");
    if (!(radius_min > 0.0) || !(radius_max >= radius_min))
      throw ConfigError("radius range must satisfy 0 < min <= max");
    if (2.0 * radius_max > grid_dim) throw ConfigError("radius_max does not fit in the grid");
    if (!(noise_sigma > 0.0)) throw ConfigError("noise_sigma must be positive");
    if (!(voxel_volume > 0.0)) throw ConfigError("voxel_volume must be positive");
    if (n_train <= 0 || n_calib <= 0 || n_id_test <= 0 || n_shift_test <= 0)
      throw ConfigError("split sizes must be positive");
    id_snr.validate("id_snr");
    shift_snr.validate("shift_snr");
  }
};

struct DatasetSplits {
  std::vector<Sample> train;
  std::vector<Sample> calib;
  std::vector<Sample> id_test;
  std::vector<Sample> shift_test;

  std::size_t total() const { return train.size() + calib.size() + id_test.size() + shift_test.size(); }
};

// Center-sampled digitization of a sphere.
inline Mask3D digitize_sphere(Dims dims, double cx, double cy, double cz, double radius) {
  std::vector<std::uint8_t> data(dims.count(), 0);
  const double r2 = radius * radius;
  const int k0 = std::max(0, static_cast<int>(std::floor(cz - radius)));
  const int k1 = std::min(dims.z - 1, static_cast<int>(std::ceil(cz + radius)));
  const int j0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int j1 = std::min(dims.y - 1, static_cast<int>(std::ceil(cy + radius)));
  const int i0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int i1 = std::min(dims.x - 1, static_cast<int>(std::ceil(cx + radius)));
  for (int k = k0; k <= k1; ++k) {
    const double dz = k - cz;
    for (int j = j0; j <= j1; ++j) {
      const double dy = j - cy;
      for (int i = i0; i <= i1; ++i) {
        const double dx = i - cx;
        if (dx * dx + dy * dy + dz * dz <= r2) data[dims.index(i, j, k)] = 1;
      }
    }
  }
  return Mask3D(dims, std::move(data));
}

// Deterministic in `seed`: radius ~ U(radius_range), center uniform subject to
// full containment, intensities bg + N(0, sigma^2) and fg = bg + snr * sigma.
inline Sample generate_sample(std::uint64_t seed, int grid_dim, double snr, double radius_min, double radius_max,
                              double bg_intensity = 0.0, double noise_sigma = 1.0, double voxel_volume = 1.0,
                              std::int64_t id = 0) {
  if (grid_dim < 8) throw ConfigError("generate_sample: grid_dim must be >= 8");
  if (!(snr > 0.0) || !std::isfinite(snr)) throw ConfigError("generate_sample: snr must be positive");
  if (!(noise_sigma > 0.0)) throw ConfigError("generate_sample: noise_sigma must be positive");
  if (!(radius_min > 0.0) || !(radius_max >= radius_min) || 2.0 * radius_max > grid_dim)
    throw ConfigError("generate_sample: infeasible radius range [" + std::to_string(radius_min) + ", " +
                      std::to_string(radius_max) + "] for grid " + std::to_string(grid_dim));

  Rng rng(seed);
  SphereSpec spec;
  spec.radius = rng.uniform(radius_min, radius_max);
  const double lo = spec.radius - 0.5;
  const double hi = grid_dim - 0.5 - spec.radius;
  spec.cx = rng.uniform(lo, hi);
  spec.cy = rng.uniform(lo, hi);
  spec.cz = rng.uniform(lo, hi);
  spec.bg_intensity = bg_intensity;
  spec.noise_sigma = noise_sigma;
  spec.snr = snr;
  spec.fg_intensity = bg_intensity + snr * noise_sigma;

  const Dims dims = Dims::cube(grid_dim);
  Mask3D truth = digitize_sphere(dims, spec.cx, spec.cy, spec.cz, spec.radius);

  std::vector<float> pixels(dims.count());
  const auto mask = truth.data();
  for (std::size_t v = 0; v < pixels.size(); ++v) {
    const double base = mask[v] ? spec.fg_intensity : spec.bg_intensity;
    pixels[v] = static_cast<float>(base + noise_sigma * rng.normal());
  }
  return Sample{Image3D(dims, std::move(pixels), voxel_volume), std::move(truth), spec, id};
}

// (mean inside - mean outside) / stddev outside.
inline double snr_of(const Image3D& image, const Mask3D& truth) {
  if (image.dims() != truth.dims()) throw DataError("snr_of: image and mask dimensions differ");
  const std::size_t n_in = truth.count();
  const std::size_t n_out = truth.size() - n_in;
  if (n_in == 0) throw DataError("snr_of: empty truth mask");
  if (n_out < 2) throw DataError("snr_of: truth mask leaves no background");

  const auto px = image.data();
  const auto m = truth.data();
  double sum_in = 0.0, sum_out = 0.0;
  for (std::size_t v = 0; v < px.size(); ++v) (m[v] ? sum_in : sum_out) += px[v];
  const double mean_in = sum_in / static_cast<double>(n_in);
  const double mean_out = sum_out / static_cast<double>(n_out);
  double ss = 0.0;
  for (std::size_t v = 0; v < px.size(); ++v) {
    if (!m[v]) {
      const double d = px[v] - mean_out;
      ss += d * d;
    }
  }
  const double sd = std::sqrt(ss / static_cast<double>(n_out - 1));
  if (sd == 0.0) throw DataError("snr_of: background has zero variance");
  return (mean_in - mean_out) / sd;
}

// Sample ids are global: train [0, n_train), then calib, id_test, shift_test.
// Sample id i uses the streams derive_seed(seed, "snr"/"image", i) only, so any
// sample can be regenerated on its own.
inline Sample generate_split_sample(std::uint64_t seed, const GenerationConfig& cfg, std::int64_t id, Split split) {
  const auto& law = split == Split::shift_test ? cfg.shift_snr : cfg.id_snr;
  Rng snr_rng(derive_seed(derive_seed(seed, "snr"), static_cast<std::uint64_t>(id)));
  const double snr = law.draw(snr_rng);
  return generate_sample(derive_seed(derive_seed(seed, "image"), static_cast<std::uint64_t>(id)), cfg.grid_dim, snr,
                         cfg.radius_min, cfg.radius_max, cfg.bg_intensity, cfg.noise_sigma, cfg.voxel_volume, id);
}

inline DatasetSplits generate_splits(std::uint64_t seed, const GenerationConfig& cfg) {
  cfg.validate();
  DatasetSplits out;
  std::int64_t id = 0;
  auto fill = [&](std::vector<Sample>& dst, int n, Split split) {
    dst.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) dst.push_back(generate_split_sample(seed, cfg, id++, split));
  };
  fill(out.train, cfg.n_train, Split::train);
  fill(out.calib, cfg.n_calib, Split::calib);
  fill(out.id_test, cfg.n_id_test, Split::id_test);
  fill(out.shift_test, cfg.n_shift_test, Split::shift_test);
  return out;
}

}  // namespace wcpvol
