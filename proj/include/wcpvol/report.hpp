#pragma once

// results.json / results.csv / weights.csv writers and the rank statistics
// used to read a weight profile.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "wcpvol/dataset_io.hpp"
#include "wcpvol/experiment.hpp"
#include "wcpvol/latent.hpp"

namespace wcpvol {

inline constexpr const char* kResultsCsvHeader =
    "variant,setting,coverage_mean,coverage_std,width_mean,width_std,accuracy_mean,accuracy_std,dice_mean,dice_std";

inline constexpr const char* kWeightsCsvHeader = "variant,setting,sample_id,covariate_value,weight";

namespace detail {

// JSON has no infinity; unbounded widths are written as null.
inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }
inline double finite_or_inf(const nlohmann::json& j) { return j.is_null() ? kInf : j.get<double>(); }

inline nlohmann::json stat_json(const Stat& s) { return {{"mean", finite_or_null(s.mean)}, {"std", finite_or_null(s.std)}}; }
inline Stat stat_from(const nlohmann::json& j) { return Stat{finite_or_inf(j.at("mean")), finite_or_inf(j.at("std"))}; }

inline std::string csv_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return format_double(v);
}

}  // namespace detail

inline nlohmann::json to_json(const AggregateResult& agg) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : agg.rows) {
    nlohmann::json row{{"variant", to_string(r.variant)},
                       {"setting", to_string(r.setting)},
                       {"trials", r.trials},
                       {"coverage", detail::stat_json(r.coverage)},
                       {"width", detail::stat_json(r.width)},
                       {"infinite_width_trials", r.infinite_width_trials},
                       {"dice", detail::stat_json(r.dice)}};
    row["accuracy"] = r.accuracy ? detail::stat_json(*r.accuracy) : nlohmann::json();
    rows.push_back(row);
  }
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : agg.trials) {
    trials.push_back({{"variant", to_string(t.variant)},
                      {"setting", to_string(t.setting)},
                      {"coverage", t.coverage},
                      {"mean_width", detail::finite_or_null(t.mean_width)},
                      {"classifier_accuracy", t.classifier_accuracy ? nlohmann::json(*t.classifier_accuracy) : nlohmann::json()},
                      {"dice_mean", t.dice_mean},
                      {"trial_seed", t.trial_seed}});
  }
  return nlohmann::json{{"rows", rows}, {"trials", trials}};
}

inline AggregateResult aggregate_from_json(const nlohmann::json& j) {
  AggregateResult agg;
  try {
    for (const auto& row : j.at("rows")) {
      AggregateRow r;
      r.variant = variant_from_string(row.at("variant").get<std::string>());
      r.setting = setting_from_string(row.at("setting").get<std::string>());
      r.trials = row.at("trials").get<int>();
      r.coverage = detail::stat_from(row.at("coverage"));
      r.width = detail::stat_from(row.at("width"));
      r.infinite_width_trials = row.at("infinite_width_trials").get<int>();
      if (!row.at("accuracy").is_null()) r.accuracy = detail::stat_from(row.at("accuracy"));
      r.dice = detail::stat_from(row.at("dice"));
      agg.rows.push_back(r);
    }
    for (const auto& t : j.at("trials")) {
      TrialResult tr;
      tr.variant = variant_from_string(t.at("variant").get<std::string>());
      tr.setting = setting_from_string(t.at("setting").get<std::string>());
      tr.coverage = t.at("coverage").get<double>();
      tr.mean_width = detail::finite_or_inf(t.at("mean_width"));
      if (!t.at("classifier_accuracy").is_null()) tr.classifier_accuracy = t.at("classifier_accuracy").get<double>();
      tr.dice_mean = t.at("dice_mean").get<double>();
      tr.trial_seed = t.at("trial_seed").get<std::uint64_t>();
      agg.trials.push_back(tr);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed results document: ") + e.what());
  }
  return agg;
}

inline std::string results_csv(const AggregateResult& agg) {
  std::string out = std::string(kResultsCsvHeader) + "\n";
  for (const auto& r : agg.rows) {
    out += std::string(to_string(r.variant)) + "," + to_string(r.setting) + ",";
    out += detail::csv_number(r.coverage.mean) + "," + detail::csv_number(r.coverage.std) + ",";
    out += detail::csv_number(r.width.mean) + "," + detail::csv_number(r.width.std) + ",";
    if (r.accuracy)
      out += detail::csv_number(r.accuracy->mean) + "," + detail::csv_number(r.accuracy->std) + ",";
    else
      out += ",,";
    out += detail::csv_number(r.dice.mean) + "," + detail::csv_number(r.dice.std) + "\n";
  }
  return out;
}

// Writes results.json and results.csv into `dir`.
inline void export_results(const AggregateResult& agg, const std::string& dir,
                           const nlohmann::json& extra = nlohmann::json::object()) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir + ": " + ec.message());
  nlohmann::json doc = to_json(agg);
  for (const auto& item : extra.items()) doc[item.key()] = item.value();
  write_json_file((std::filesystem::path(dir) / "results.json").string(), doc);
  std::ofstream csv(std::filesystem::path(dir) / "results.csv");
  if (!csv) throw DataError("cannot write results.csv in " + dir);
  csv << results_csv(agg);
  if (!csv) throw DataError("write failed for results.csv in " + dir);
}

inline void export_weight_profile(std::span<const WeightRow> rows, const std::string& path) {
  if (rows.empty()) throw DataError("export_weight_profile: no weighted variant in the trial output");
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << kWeightsCsvHeader << '\n';
  for (const auto& r : rows) {
    out << to_string(r.variant) << ',' << to_string(r.setting) << ',' << r.sample_id << ','
        << detail::format_double(r.covariate) << ',' << detail::format_double(r.weight) << '\n';
  }
  if (!out) throw DataError("write failed for " + path);
}

inline std::vector<WeightRow> load_weight_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kWeightsCsvHeader) throw DataError(path + ": unexpected header");
  std::vector<WeightRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 5) throw DataError(path + ": expected 5 fields per row");
    WeightRow r;
    r.variant = variant_from_string(std::string(f[0]));
    r.setting = setting_from_string(std::string(f[1]));
    r.sample_id = static_cast<std::int64_t>(detail::parse_double(f[2], path));
    r.covariate = detail::parse_double(f[3], path);
    r.weight = detail::parse_double(f[4], path);
    rows.push_back(r);
  }
  return rows;
}

// Average ranks, ties share the mean rank.
inline std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double spearman_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw DataError("spearman_correlation: need two equal-length samples");
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace wcpvol
