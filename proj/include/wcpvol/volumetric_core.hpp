#pragma once

// 3D grids, overlap metrics and volume measurement.
//
// Grids are linearized row-major with x fastest:
//   index(x, y, z) = x + dx * (y + dy * z)

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wcpvol/error.hpp"

namespace wcpvol {

struct Dims {
  int x = 0;
  int y = 0;
  int z = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(x) * static_cast<std::size_t>(y) * static_cast<std::size_t>(z);
  }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(x) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(y) * k);
  }
  bool valid() const { return x > 0 && y > 0 && z > 0; }
  static Dims cube(int n) { return {n, n, n}; }

  friend bool operator==(const Dims&, const Dims&) = default;
};

inline std::string to_string(const Dims& d) {
  return std::to_string(d.x) + "x" + std::to_string(d.y) + "x" + std::to_string(d.z);
}

// Dense scalar image. Intensities are stored as float so that the on-disk
// float32 format round-trips exactly.
class Image3D {
 public:
  Image3D(Dims dims, std::vector<float> data, double voxel_volume = 1.0)
      : dims_(dims), data_(std::move(data)), voxel_volume_(voxel_volume) {
    if (!dims_.valid()) throw DataError("Image3D: dimensions must be positive, got " + to_string(dims_));
    if (data_.size() != dims_.count())
      throw DataError("Image3D: data length " + std::to_string(data_.size()) + " does not match " +
                      to_string(dims_));
    if (!(voxel_volume_ > 0.0) || !std::isfinite(voxel_volume_))
      throw DataError("Image3D: voxel_volume must be finite and positive");
    if (!std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); }))
      throw DataError("Image3D: non-finite intensity");
  }

  const Dims& dims() const { return dims_; }
  std::span<const float> data() const { return data_; }
  double voxel_volume() const { return voxel_volume_; }
  float at(int i, int j, int k) const { return data_[dims_.index(i, j, k)]; }
  std::size_t size() const { return data_.size(); }

 private:
  Dims dims_;
  std::vector<float> data_;
  double voxel_volume_;
};

class Mask3D {
 public:
  Mask3D(Dims dims, std::vector<std::uint8_t> data) : dims_(dims), data_(std::move(data)) {
    if (!dims_.valid()) throw DataError("Mask3D: dimensions must be positive, got " + to_string(dims_));
    if (data_.size() != dims_.count())
      throw DataError("Mask3D: data length " + std::to_string(data_.size()) + " does not match " +
                      to_string(dims_));
    for (auto v : data_) {
      if (v > 1) throw DataError("Mask3D: values must be 0 or 1");
      count_ += v;
    }
  }

  static Mask3D empty(Dims dims) { return Mask3D(dims, std::vector<std::uint8_t>(dims.count(), 0)); }
  static Mask3D full(Dims dims) { return Mask3D(dims, std::vector<std::uint8_t>(dims.count(), 1)); }

  const Dims& dims() const { return dims_; }
  std::span<const std::uint8_t> data() const { return data_; }
  bool at(int i, int j, int k) const { return data_[dims_.index(i, j, k)] != 0; }
  std::size_t size() const { return data_.size(); }
  // Number of foreground voxels.
  std::size_t count() const { return count_; }

 private:
  Dims dims_;
  std::vector<std::uint8_t> data_;
  std::size_t count_ = 0;
};

// Tversky parameters: alpha weighs false positives, beta false negatives.
struct OverlapParams {
  double alpha = 0.5;
  double beta = 0.5;
  double smooth = 1e-6;
};

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

inline double volume(const Mask3D& mask, double voxel_volume) {
  if (!(voxel_volume > 0.0) || !std::isfinite(voxel_volume)) throw DataError("volume: voxel_volume must be finite and positive");
  return static_cast<double>(mask.count()) * voxel_volume;
}

inline ConfusionCounts confusion(const Mask3D& pred, const Mask3D& truth) {
  if (pred.dims() != truth.dims())
    throw DataError("mask dimension mismatch: " + to_string(pred.dims()) + " vs " + to_string(truth.dims()));
  ConfusionCounts c;
  const auto p = pred.data();
  const auto t = truth.data();
  for (std::size_t i = 0; i < p.size(); ++i) c.tp += static_cast<std::size_t>(p[i] & t[i]);
  c.fp = pred.count() - c.tp;
  c.fn = truth.count() - c.tp;
  return c;
}

// Both empty counts as perfect agreement.
inline double dice(const Mask3D& a, const Mask3D& b) {
  const auto c = confusion(a, b);
  const std::size_t denom = a.count() + b.count();
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

inline double tversky_index(const ConfusionCounts& c, const OverlapParams& params) {
  if (!(params.alpha >= 0.0) || !(params.beta >= 0.0) || !(params.smooth >= 0.0))
    throw ConfigError("tversky_index: alpha, beta and smooth must be non-negative");
  const double tp = static_cast<double>(c.tp);
  const double denom = tp + params.alpha * static_cast<double>(c.fp) + params.beta * static_cast<double>(c.fn) +
                       params.smooth;
  if (denom == 0.0) return 1.0;
  return (tp + params.smooth) / denom;
}

inline double tversky_index(const Mask3D& pred, const Mask3D& truth, const OverlapParams& params) {
  return tversky_index(confusion(pred, truth), params);
}

}  // namespace wcpvol
