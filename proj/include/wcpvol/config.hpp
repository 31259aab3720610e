#pragma once

#include <cstdint>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "wcpvol/error.hpp"
#include "wcpvol/latent.hpp"
#include "wcpvol/synthgen.hpp"

namespace wcpvol {

enum class Variant { standard, w_oracle, w_latent };
enum class Setting { id, shift };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::standard: return "standard";
    case Variant::w_oracle: return "w_oracle";
    case Variant::w_latent: return "w_latent";
  }
  return "?";
}

inline const char* to_string(Setting s) { return s == Setting::id ? "id" : "shift"; }

inline Variant variant_from_string(const std::string& s) {
  if (s == "standard") return Variant::standard;
  if (s == "w_oracle") return Variant::w_oracle;
  if (s == "w_latent") return Variant::w_latent;
  throw ConfigError("unknown CP variant '" + s + "'");
}

inline Setting setting_from_string(const std::string& s) {
  if (s == "id") return Setting::id;
  if (s == "shift") return Setting::shift;
  throw ConfigError("unknown setting '" + s + "'");
}

inline bool is_weighted(Variant v) { return v != Variant::standard; }

struct ExperimentConfig {
  std::uint64_t seed = 2024;
  double alpha = 0.05;
  int trials = 250;
  GenerationConfig generation;
  double gamma = 0.2;
  int threshold_candidates = 512;
  int latent_k = 64;
  int kernel_size = 3;
  LatentMode latent_mode = LatentMode::square;
  std::vector<Variant> variants{Variant::standard, Variant::w_oracle, Variant::w_latent};
  int folds = 20;
  double l2_lambda = 1e-4;
  double tol = 1e-8;
  int max_iter = 500;
  std::string output_dir = "results";

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (trials < 1) throw ConfigError("trials must be >= 1");
    generation.validate();
    if (!(gamma > 0.0 && gamma <= 0.5)) throw ConfigError("gamma must lie in (0, 0.5]");
    if (threshold_candidates < 1) throw ConfigError("threshold_candidates must be >= 1");
    if (latent_k < 1) throw ConfigError("latent.k must be >= 1");
    if (kernel_size < 3 || kernel_size % 2 == 0) throw ConfigError("latent.kernel_size must be odd and >= 3");
    if (kernel_size > generation.grid_dim) throw ConfigError("latent.kernel_size exceeds grid_dim");
    if (variants.empty()) throw ConfigError("variants must not be empty");
    if (std::set<Variant>(variants.begin(), variants.end()).size() != variants.size())
      throw ConfigError("variants must not repeat");
    if (folds < 2) throw ConfigError("folds must be >= 2");
    if (!(l2_lambda >= 0.0)) throw ConfigError("l2_lambda must be >= 0");
    if (!(tol > 0.0)) throw ConfigError("tol must be positive");
    if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& dst, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline nlohmann::json snr_to_json(const SnrDistribution& d) {
  nlohmann::json j{{"law", d.law == SnrLaw::uniform ? "uniform" : "normal"}, {"a", d.a}, {"b", d.b},
                   {"min_snr", d.min_snr}};
  if (std::isfinite(d.max_snr))
    j["max_snr"] = d.max_snr;
  else
    j["max_snr"] = nullptr;
  return j;
}

inline SnrDistribution snr_from_json(const nlohmann::json& j, SnrDistribution d, const std::string& where) {
  reject_unknown_keys(j, {"law", "a", "b", "min_snr", "max_snr"}, where);
  if (j.contains("law")) {
    const auto law = j.at("law").get<std::string>();
    if (law == "uniform")
      d.law = SnrLaw::uniform;
    else if (law == "normal")
      d.law = SnrLaw::normal;
    else
      throw ConfigError(where + ".law must be 'uniform' or 'normal'");
  }
  read_opt(j, "a", d.a, where);
  read_opt(j, "b", d.b, where);
  read_opt(j, "min_snr", d.min_snr, where);
  if (j.contains("max_snr")) {
    d.max_snr = j.at("max_snr").is_null() ? std::numeric_limits<double>::infinity() : j.at("max_snr").get<double>();
  }
  return d;
}

}  // namespace detail

inline nlohmann::json to_json(const GenerationConfig& g) {
  return nlohmann::json{{"grid_dim", g.grid_dim},
                        {"radius_min", g.radius_min},
                        {"radius_max", g.radius_max},
                        {"bg_intensity", g.bg_intensity},
                        {"noise_sigma", g.noise_sigma},
                        {"voxel_volume", g.voxel_volume},
                        {"n_train", g.n_train},
                        {"n_calib", g.n_calib},
                        {"n_id_test", g.n_id_test},
                        {"n_shift_test", g.n_shift_test},
                        {"id_snr", detail::snr_to_json(g.id_snr)},
                        {"shift_snr", detail::snr_to_json(g.shift_snr)}};
}

inline GenerationConfig generation_from_json(const nlohmann::json& j, GenerationConfig g = {}) {
  const std::string where = "generation";
  detail::reject_unknown_keys(j,
                              {"grid_dim", "radius_min", "radius_max", "bg_intensity", "noise_sigma", "voxel_volume",
                               "n_train", "n_calib", "n_id_test", "n_shift_test", "id_snr", "shift_snr"},
                              where);
  detail::read_opt(j, "grid_dim", g.grid_dim, where);
  detail::read_opt(j, "radius_min", g.radius_min, where);
  detail::read_opt(j, "radius_max", g.radius_max, where);
  detail::read_opt(j, "bg_intensity", g.bg_intensity, where);
  detail::read_opt(j, "noise_sigma", g.noise_sigma, where);
  detail::read_opt(j, "voxel_volume", g.voxel_volume, where);
  detail::read_opt(j, "n_train", g.n_train, where);
  detail::read_opt(j, "n_calib", g.n_calib, where);
  detail::read_opt(j, "n_id_test", g.n_id_test, where);
  detail::read_opt(j, "n_shift_test", g.n_shift_test, where);
  if (j.contains("id_snr")) g.id_snr = detail::snr_from_json(j.at("id_snr"), g.id_snr, where + ".id_snr");
  if (j.contains("shift_snr"))
    g.shift_snr = detail::snr_from_json(j.at("shift_snr"), g.shift_snr, where + ".shift_snr");
  return g;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json variants = nlohmann::json::array();
  for (auto v : c.variants) variants.push_back(to_string(v));
  return nlohmann::json{{"seed", c.seed},
                        {"alpha", c.alpha},
                        {"trials", c.trials},
                        {"generation", to_json(c.generation)},
                        {"gamma", c.gamma},
                        {"threshold_candidates", c.threshold_candidates},
                        {"latent", {{"k", c.latent_k}, {"kernel_size", c.kernel_size}, {"mode", to_string(c.latent_mode)}}},
                        {"variants", variants},
                        {"folds", c.folds},
                        {"l2_lambda", c.l2_lambda},
                        {"tol", c.tol},
                        {"max_iter", c.max_iter},
                        {"output_dir", c.output_dir}};
}

// Missing keys keep their defaults; unknown keys are an error.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  const std::string where = "config";
  detail::reject_unknown_keys(j,
                              {"seed", "alpha", "trials", "generation", "gamma", "threshold_candidates", "latent",
                               "variants", "folds", "l2_lambda", "tol", "max_iter", "output_dir"},
                              where);
  detail::read_opt(j, "seed", c.seed, where);
  detail::read_opt(j, "alpha", c.alpha, where);
  detail::read_opt(j, "trials", c.trials, where);
  if (j.contains("generation")) c.generation = generation_from_json(j.at("generation"));
  detail::read_opt(j, "gamma", c.gamma, where);
  detail::read_opt(j, "threshold_candidates", c.threshold_candidates, where);
  if (j.contains("latent")) {
    const auto& l = j.at("latent");
    detail::reject_unknown_keys(l, {"k", "kernel_size", "mode"}, "latent");
    detail::read_opt(l, "k", c.latent_k, "latent");
    detail::read_opt(l, "kernel_size", c.kernel_size, "latent");
    if (l.contains("mode")) c.latent_mode = latent_mode_from_string(l.at("mode").get<std::string>());
  }
  if (j.contains("variants")) {
    c.variants.clear();
    for (const auto& v : j.at("variants")) c.variants.push_back(variant_from_string(v.get<std::string>()));
  }
  detail::read_opt(j, "folds", c.folds, where);
  detail::read_opt(j, "l2_lambda", c.l2_lambda, where);
  detail::read_opt(j, "tol", c.tol, where);
  detail::read_opt(j, "max_iter", c.max_iter, where);
  detail::read_opt(j, "output_dir", c.output_dir, where);
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace wcpvol
