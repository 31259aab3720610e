#pragma once

// Compressed image descriptors: a fixed bank of zero-mean 3D kernels,
// cross-correlated with the image over valid (unpadded) positions and averaged
// over space, one value per kernel.

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "wcpvol/error.hpp"
#include "wcpvol/random.hpp"
#include "wcpvol/volumetric_core.hpp"

namespace wcpvol {

// raw:    average the responses as they are.
// abs:    average |response|.
// square: average response^2 (local energy).
enum class LatentMode { raw, abs, square };

inline LatentMode latent_mode_from_string(const std::string& s) {
  if (s == "raw") return LatentMode::raw;
  if (s == "abs") return LatentMode::abs;
  if (s == "square") return LatentMode::square;
  throw ConfigError("unknown latent mode '" + s + "' (expected raw, abs or square)");
}

inline const char* to_string(LatentMode m) {
  switch (m) {
    case LatentMode::raw: return "raw";
    case LatentMode::abs: return "abs";
    case LatentMode::square: return "square";
  }
  return "?";
}

class FilterBank {
 public:
  // `weights` holds `count` kernels of kernel_size^3 coefficients, each in
  // x-fastest order. Every kernel must have zero mean and unit norm.
  FilterBank(int count, int kernel_size, std::vector<double> weights, std::uint64_t seed = 0)
      : count_(count), kernel_size_(kernel_size), weights_(std::move(weights)), seed_(seed) {
    if (count_ < 1) throw ConfigError("FilterBank: K must be >= 1");
    if (kernel_size_ < 1 || kernel_size_ % 2 == 0) throw ConfigError("FilterBank: kernel_size must be odd");
    if (weights_.size() != static_cast<std::size_t>(count_) * taps())
      throw DataError("FilterBank: expected " + std::to_string(count_ * taps()) + " coefficients");
    for (int k = 0; k < count_; ++k) {
      double sum = 0.0, sq = 0.0;
      for (double w : kernel(k)) {
        sum += w;
        sq += w * w;
      }
      if (std::abs(sum) > 1e-9 || std::abs(std::sqrt(sq) - 1.0) > 1e-9)
        throw DataError("FilterBank: kernel " + std::to_string(k) + " is not zero-mean with unit norm");
    }
  }

  int count() const { return count_; }
  int kernel_size() const { return kernel_size_; }
  std::size_t taps() const {
    return static_cast<std::size_t>(kernel_size_) * kernel_size_ * kernel_size_;
  }
  std::uint64_t seed() const { return seed_; }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> kernel(int k) const {
    return std::span<const double>(weights_).subspan(static_cast<std::size_t>(k) * taps(), taps());
  }

 private:
  int count_;
  int kernel_size_;
  std::vector<double> weights_;
  std::uint64_t seed_;
};

struct LatentVector {
  std::vector<double> values;
  std::int64_t sample_id = 0;
};

// Kernels are N(0,1) draws, centered and scaled to unit norm. A 1-tap kernel
// cannot be both zero-mean and unit-norm, so kernel_size must be >= 3.
inline FilterBank make_filter_bank(std::uint64_t seed, int count = 64, int kernel_size = 3) {
  if (count < 1) throw ConfigError("make_filter_bank: K must be >= 1");
  if (kernel_size < 3 || kernel_size % 2 == 0) throw ConfigError("make_filter_bank: kernel_size must be odd and >= 3");
  const std::size_t taps = static_cast<std::size_t>(kernel_size) * kernel_size * kernel_size;
  Rng rng(seed);
  std::vector<double> w(static_cast<std::size_t>(count) * taps);
  for (int k = 0; k < count; ++k) {
    double* ker = w.data() + static_cast<std::size_t>(k) * taps;
    double mean = 0.0;
    for (std::size_t t = 0; t < taps; ++t) mean += (ker[t] = rng.normal());
    mean /= static_cast<double>(taps);
    double sq = 0.0;
    for (std::size_t t = 0; t < taps; ++t) {
      ker[t] -= mean;
      sq += ker[t] * ker[t];
    }
    const double norm = std::sqrt(sq);
    for (std::size_t t = 0; t < taps; ++t) ker[t] /= norm;
  }
  return FilterBank(count, kernel_size, std::move(w), seed);
}

inline LatentVector extract(const Image3D& image, const FilterBank& bank, LatentMode mode = LatentMode::raw,
                            std::int64_t sample_id = 0) {
  const int ks = bank.kernel_size();
  const Dims d = image.dims();
  if (d.x < ks || d.y < ks || d.z < ks)
    throw DataError("extract: image " + to_string(d) + " is smaller than the " + std::to_string(ks) + "^3 kernel");
  const int ox = d.x - ks + 1, oy = d.y - ks + 1, oz = d.z - ks + 1;
  const auto positions = static_cast<Eigen::Index>(ox) * oy * oz;
  const auto taps = static_cast<Eigen::Index>(bank.taps());
  const auto px = image.data();

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> kernels(
      bank.weights().data(), bank.count(), taps);

  LatentVector out;
  out.sample_id = sample_id;
  out.values.assign(static_cast<std::size_t>(bank.count()), 0.0);

  if (mode == LatentMode::raw) {
    // Averaging commutes with the correlation: z = W * (mean of each shifted window).
    Eigen::VectorXd window_means = Eigen::VectorXd::Zero(taps);
    Eigen::Index t = 0;
    for (int c = 0; c < ks; ++c)
      for (int b = 0; b < ks; ++b)
        for (int a = 0; a < ks; ++a, ++t) {
          double s = 0.0;
          for (int k = 0; k < oz; ++k)
            for (int j = 0; j < oy; ++j) {
              const float* row = px.data() + d.index(a, j + b, k + c);
              for (int i = 0; i < ox; ++i) s += row[i];
            }
          window_means[t] = s / static_cast<double>(positions);
        }
    Eigen::Map<Eigen::VectorXd>(out.values.data(), bank.count()) = kernels * window_means;
    return out;
  }

  // One z-slab of patches at a time: patches(t, p) = image[p + offset(t)].
  const Eigen::Index slab = static_cast<Eigen::Index>(ox) * oy;
  Eigen::MatrixXd patches(taps, slab);
  Eigen::MatrixXd response(bank.count(), slab);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(bank.count());
  for (int k = 0; k < oz; ++k) {
    Eigen::Index t = 0;
    for (int c = 0; c < ks; ++c)
      for (int b = 0; b < ks; ++b)
        for (int a = 0; a < ks; ++a, ++t) {
          Eigen::Index p = 0;
          for (int j = 0; j < oy; ++j) {
            const float* row = px.data() + d.index(a, j + b, k + c);
            for (int i = 0; i < ox; ++i) patches(t, p++) = row[i];
          }
        }
    response.noalias() = kernels * patches;
    if (mode == LatentMode::abs)
      acc += response.cwiseAbs().rowwise().sum();
    else
      acc += response.array().square().matrix().rowwise().sum();
  }
  Eigen::Map<Eigen::VectorXd>(out.values.data(), bank.count()) = acc / static_cast<double>(positions);
  return out;
}

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
    throw DataError(where + ": cannot parse number '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

// CSV schema: header `id,z0,...,z{K-1}`, one row per sample.
inline void save_latents(const std::string& path, const std::vector<LatentVector>& latents) {
  if (latents.empty()) throw DataError("save_latents: nothing to write");
  const std::size_t k = latents.front().values.size();
  std::ofstream out(path);
  if (!out) throw DataError("save_latents: cannot open " + path);
  out << "id";
  for (std::size_t i = 0; i < k; ++i) out << ",z" << i;
  out << '\n';
  for (const auto& z : latents) {
    if (z.values.size() != k) throw DataError("save_latents: inconsistent latent lengths");
    out << z.sample_id;
    for (double v : z.values) out << ',' << detail::format_double(v);
    out << '\n';
  }
  if (!out) throw DataError("save_latents: write failed for " + path);
}

inline std::vector<LatentVector> load_latents(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_latents: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("load_latents: " + path + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv(line);
  if (header.size() < 2 || header[0] != "id") throw DataError("load_latents: header must start with 'id,z0'");
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i] != "z" + std::to_string(i - 1))
      throw DataError("load_latents: unexpected column '" + std::string(header[i]) + "'");
  }
  const std::size_t k = header.size() - 1;

  std::vector<LatentVector> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (fields.size() != k + 1)
      throw DataError(where + ": expected " + std::to_string(k + 1) + " fields, got " + std::to_string(fields.size()));
    LatentVector z;
    const double id = detail::parse_double(fields[0], where);
    if (id != std::floor(id)) throw DataError(where + ": id must be an integer");
    z.sample_id = static_cast<std::int64_t>(id);
    z.values.reserve(k);
    for (std::size_t i = 1; i <= k; ++i) {
      const double v = detail::parse_double(fields[i], where);
      if (!std::isfinite(v)) throw DataError(where + ": non-finite latent value");
      z.values.push_back(v);
    }
    out.push_back(std::move(z));
  }
  if (out.empty()) throw DataError("load_latents: " + path + " has no rows");
  return out;
}

}  // namespace wcpvol
