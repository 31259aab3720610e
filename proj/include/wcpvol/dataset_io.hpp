#pragma once

// Dataset directory layout:
//
//   metadata.json        dims, voxel volume, generation settings and one entry
//                        per sample (id, split, file, sphere spec, snr)
//   sample_<id>.bin      N little-endian float32 intensities followed by N mask
//                        bytes (0/1), N = dx*dy*dz, row-major with x fastest,
//                        no header
//
// Thresholds and filter banks are stored as small JSON documents.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wcpvol/config.hpp"
#include "wcpvol/error.hpp"
#include "wcpvol/latent.hpp"
#include "wcpvol/synthgen.hpp"
#include "wcpvol/trimask.hpp"

namespace wcpvol {

inline std::string sample_file_name(std::int64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%06lld.bin", static_cast<long long>(id));
  return buf;
}

namespace detail {

inline void write_sample_file(const std::filesystem::path& path, const Sample& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  std::vector<unsigned char> buf(s.image.size() * 4 + s.truth.size());
  std::size_t o = 0;
  for (float v : s.image.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) buf[o++] = static_cast<unsigned char>((bits >> (8 * b)) & 0xFFu);
  }
  for (auto m : s.truth.data()) buf[o++] = m;
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

inline Sample read_sample_file(const std::filesystem::path& path, Dims dims, double voxel_volume,
                               const SphereSpec& spec, std::int64_t id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::size_t n = dims.count();
  std::vector<unsigned char> buf(n * 5);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw DataError(path.string() + " is truncated");
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + " has trailing bytes");
  std::vector<float> px(n);
  for (std::size_t v = 0; v < n; ++v) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(buf[4 * v + static_cast<std::size_t>(b)]) << (8 * b);
    px[v] = std::bit_cast<float>(bits);
  }
  std::vector<std::uint8_t> mask(buf.begin() + static_cast<std::ptrdiff_t>(4 * n), buf.end());
  return Sample{Image3D(dims, std::move(px), voxel_volume), Mask3D(dims, std::move(mask)), spec, id};
}

}  // namespace detail

inline void write_dataset(const std::string& dir, const DatasetSplits& splits, const GenerationConfig& cfg,
                          std::uint64_t seed) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir + ": " + ec.message());

  nlohmann::json samples = nlohmann::json::array();
  auto emit = [&](const std::vector<Sample>& group, Split split) {
    for (const auto& s : group) {
      const std::string file = sample_file_name(s.id);
      detail::write_sample_file(fs::path(dir) / file, s);
      samples.push_back({{"id", s.id},
                         {"split", to_string(split)},
                         {"file", file},
                         {"center", {s.spec.cx, s.spec.cy, s.spec.cz}},
                         {"radius", s.spec.radius},
                         {"fg_intensity", s.spec.fg_intensity},
                         {"bg_intensity", s.spec.bg_intensity},
                         {"noise_sigma", s.spec.noise_sigma},
                         {"snr", s.spec.snr}});
    }
  };
  emit(splits.train, Split::train);
  emit(splits.calib, Split::calib);
  emit(splits.id_test, Split::id_test);
  emit(splits.shift_test, Split::shift_test);

  const Dims dims = Dims::cube(cfg.grid_dim);
  nlohmann::json meta{{"format", "wcpvol-dataset-1"},
                      {"seed", seed},
                      {"dims", {dims.x, dims.y, dims.z}},
                      {"voxel_volume", cfg.voxel_volume},
                      {"generation", to_json(cfg)},
                      {"samples", samples}};
  std::ofstream out(fs::path(dir) / "metadata.json");
  if (!out) throw DataError("cannot write metadata in " + dir);
  out << meta.dump(1) << '\n';
}

struct LoadedDataset {
  DatasetSplits splits;
  GenerationConfig generation;
  std::uint64_t seed = 0;
};

inline LoadedDataset read_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "metadata.json");
  if (!in) throw DataError("no metadata.json in " + dir);
  LoadedDataset out;
  try {
    nlohmann::json meta;
    in >> meta;
    const auto& d = meta.at("dims");
    const Dims dims{d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<int>()};
    const double vv = meta.at("voxel_volume").get<double>();
    out.seed = meta.value("seed", std::uint64_t{0});
    if (meta.contains("generation")) out.generation = generation_from_json(meta.at("generation"));
    for (const auto& s : meta.at("samples")) {
      SphereSpec spec;
      const auto& c = s.at("center");
      spec.cx = c.at(0).get<double>();
      spec.cy = c.at(1).get<double>();
      spec.cz = c.at(2).get<double>();
      spec.radius = s.at("radius").get<double>();
      spec.fg_intensity = s.at("fg_intensity").get<double>();
      spec.bg_intensity = s.at("bg_intensity").get<double>();
      spec.noise_sigma = s.at("noise_sigma").get<double>();
      spec.snr = s.at("snr").get<double>();
      const auto id = s.at("id").get<std::int64_t>();
      Sample sample = detail::read_sample_file(fs::path(dir) / s.at("file").get<std::string>(), dims, vv, spec, id);
      switch (split_from_string(s.at("split").get<std::string>())) {
        case Split::train: out.splits.train.push_back(std::move(sample)); break;
        case Split::calib: out.splits.calib.push_back(std::move(sample)); break;
        case Split::id_test: out.splits.id_test.push_back(std::move(sample)); break;
        case Split::shift_test: out.splits.shift_test.push_back(std::move(sample)); break;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed metadata in " + dir + ": " + e.what());
  }
  return out;
}

inline nlohmann::json to_json(const FilterBank& bank) {
  return nlohmann::json{{"k", bank.count()},
                        {"kernel_size", bank.kernel_size()},
                        {"seed", bank.seed()},
                        {"weights", std::vector<double>(bank.weights().begin(), bank.weights().end())}};
}

inline FilterBank filter_bank_from_json(const nlohmann::json& j) {
  try {
    return FilterBank(j.at("k").get<int>(), j.at("kernel_size").get<int>(), j.at("weights").get<std::vector<double>>(),
                      j.value("seed", std::uint64_t{0}));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed filter bank: ") + e.what());
  }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed for " + path);
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path + " is not valid JSON: " + e.what());
  }
}

}  // namespace wcpvol
