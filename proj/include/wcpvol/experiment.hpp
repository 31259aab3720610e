#pragma once

// Experiment orchestration: per-sample measurements, reshuffled trials over the
// in-distribution pool, the three CP variants and their aggregation.
//
// Everything is a deterministic function of ExperimentConfig. Thresholds and
// the filter bank depend only on the training split.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "wcpvol/config.hpp"
#include "wcpvol/conformal.hpp"
#include "wcpvol/density_ratio.hpp"
#include "wcpvol/latent.hpp"
#include "wcpvol/synthgen.hpp"
#include "wcpvol/trimask.hpp"

namespace wcpvol {

// What the conformal stage needs from one sample; images are not kept.
struct SampleRecord {
  std::int64_t id = 0;
  Split split = Split::train;
  VolumeTriple estimate;
  double truth_volume = 0.0;
  double covariate = 0.0;  // measured SNR (snr_of)
  double nominal_snr = 0.0;
  double dice_mean = 0.0;  // Dice of the balanced mask
  std::vector<double> latent;
};

struct ExperimentData {
  TriThresholds thresholds;
  FilterBank bank;
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> calib;
  std::vector<SampleRecord> id_test;
  std::vector<SampleRecord> shift_test;
};

inline SampleRecord make_record(const Sample& s, Split split, const TriThresholds& th, const FilterBank* bank,
                                LatentMode mode) {
  SampleRecord r;
  r.id = s.id;
  r.split = split;
  const TriMask tm = predict(s.image, th);
  r.estimate = volumes(tm, s.image.voxel_volume());
  r.truth_volume = volume(s.truth, s.image.voxel_volume());
  r.covariate = snr_of(s.image, s.truth);
  r.nominal_snr = s.spec.snr;
  r.dice_mean = dice(tm.mean, s.truth);
  if (bank) r.latent = extract(s.image, *bank, mode, s.id).values;
  return r;
}

inline FilterBank experiment_filter_bank(const ExperimentConfig& cfg) {
  return make_filter_bank(derive_seed(cfg.seed, "filter_bank"), cfg.latent_k, cfg.kernel_size);
}

inline ThresholdSearch experiment_search(const ExperimentConfig& cfg) {
  ThresholdSearch search;
  search.candidates = cfg.threshold_candidates;
  return search;
}

// From an in-memory (or loaded) dataset.
inline ExperimentData prepare_experiment(const ExperimentConfig& cfg, const DatasetSplits& splits) {
  cfg.validate();
  ExperimentData data{fit_thresholds(splits.train, cfg.gamma, experiment_search(cfg)), experiment_filter_bank(cfg), {},
                      {}, {}, {}};
  for (const auto& s : splits.train) data.train.push_back(make_record(s, Split::train, data.thresholds, nullptr, cfg.latent_mode));
  for (const auto& s : splits.calib) data.calib.push_back(make_record(s, Split::calib, data.thresholds, &data.bank, cfg.latent_mode));
  for (const auto& s : splits.id_test)
    data.id_test.push_back(make_record(s, Split::id_test, data.thresholds, &data.bank, cfg.latent_mode));
  for (const auto& s : splits.shift_test)
    data.shift_test.push_back(make_record(s, Split::shift_test, data.thresholds, &data.bank, cfg.latent_mode));
  return data;
}

// Generates the dataset from cfg.seed. Only the training images are held in
// memory at once; other samples are measured as they are generated.
inline ExperimentData prepare_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto& g = cfg.generation;
  std::vector<Sample> train;
  train.reserve(static_cast<std::size_t>(g.n_train));
  std::int64_t id = 0;
  for (int i = 0; i < g.n_train; ++i) train.push_back(generate_split_sample(cfg.seed, g, id++, Split::train));

  ExperimentData data{fit_thresholds(train, cfg.gamma, experiment_search(cfg)), experiment_filter_bank(cfg), {}, {}, {},
                      {}};
  for (const auto& s : train) data.train.push_back(make_record(s, Split::train, data.thresholds, nullptr, cfg.latent_mode));
  train.clear();
  train.shrink_to_fit();

  auto stream = [&](std::vector<SampleRecord>& dst, int n, Split split) {
    dst.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const Sample s = generate_split_sample(cfg.seed, g, id++, split);
      dst.push_back(make_record(s, split, data.thresholds, &data.bank, cfg.latent_mode));
    }
  };
  stream(data.calib, g.n_calib, Split::calib);
  stream(data.id_test, g.n_id_test, Split::id_test);
  stream(data.shift_test, g.n_shift_test, Split::shift_test);
  return data;
}

struct TrialResult {
  Variant variant = Variant::standard;
  Setting setting = Setting::id;
  double coverage = 0.0;
  double mean_width = 0.0;  // +inf if any interval is unbounded
  std::optional<double> classifier_accuracy;
  double dice_mean = 0.0;
  std::uint64_t trial_seed = 0;
};

struct WeightRow {
  Variant variant = Variant::w_oracle;
  Setting setting = Setting::id;
  std::int64_t sample_id = 0;
  double covariate = 0.0;
  double weight = 1.0;
};

struct TrialOutput {
  TrialResult result;
  std::vector<WeightRow> calib_weights;  // weighted variants only
};

struct TrialPartition {
  std::vector<const SampleRecord*> calib;
  std::vector<const SampleRecord*> id_test;
};

inline std::uint64_t trial_seed(const ExperimentConfig& cfg, int trial) {
  return derive_seed(derive_seed(cfg.seed, "trial"), static_cast<std::uint64_t>(trial));
}

// Pools the ID calibration and test records and redraws both halves with
// their original sizes.
inline TrialPartition reshuffle(const ExperimentData& data, std::uint64_t seed) {
  std::vector<const SampleRecord*> pool;
  pool.reserve(data.calib.size() + data.id_test.size());
  for (const auto& r : data.calib) pool.push_back(&r);
  for (const auto& r : data.id_test) pool.push_back(&r);
  Rng rng(seed);
  rng.shuffle(std::span<const SampleRecord*>(pool));
  TrialPartition part;
  part.calib.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(data.calib.size()));
  part.id_test.assign(pool.begin() + static_cast<std::ptrdiff_t>(data.calib.size()), pool.end());
  return part;
}

namespace detail {

inline Eigen::MatrixXd feature_rows(std::span<const SampleRecord* const> recs, Variant variant) {
  if (variant == Variant::w_oracle) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(recs.size()), 1);
    for (std::size_t i = 0; i < recs.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = recs[i]->covariate;
    return m;
  }
  const std::size_t k = recs.empty() ? 0 : recs.front()->latent.size();
  if (k == 0) throw DataError("latent features are missing");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(recs.size()), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i]->latent.size() != k) throw DataError("inconsistent latent lengths");
    for (std::size_t j = 0; j < k; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = recs[i]->latent[j];
  }
  return m;
}

}  // namespace detail

// One variant on one setting of one reshuffled trial. With
// `force_uniform_weights` a weighted variant skips the classifier and uses
// w = 1 everywhere.
inline TrialOutput run_trial_on(const ExperimentConfig& cfg, const TrialPartition& part,
                                std::span<const SampleRecord> shift_test, std::uint64_t seed, Setting setting,
                                Variant variant, bool force_uniform_weights = false) {
  std::vector<const SampleRecord*> test;
  if (setting == Setting::id)
    test = part.id_test;
  else
    for (const auto& r : shift_test) test.push_back(&r);
  const auto& calib = part.calib;
  if (calib.empty() || test.empty()) throw DataError("run_trial: empty calibration or test set");

  std::vector<double> scores;
  scores.reserve(calib.size());
  for (const auto* r : calib) scores.push_back(score(r->estimate, r->truth_volume));

  TrialOutput out;
  out.result.variant = variant;
  out.result.setting = setting;
  out.result.trial_seed = seed;

  std::vector<PredictiveInterval> intervals;
  intervals.reserve(test.size());
  std::vector<double> truths;
  truths.reserve(test.size());
  double dice_sum = 0.0;
  for (const auto* r : test) {
    truths.push_back(r->truth_volume);
    dice_sum += r->dice_mean;
  }
  out.result.dice_mean = dice_sum / static_cast<double>(test.size());

  if (!is_weighted(variant)) {
    const QuantileResult q = standard_quantile(scores, cfg.alpha);
    for (const auto* r : test) intervals.push_back(calibrated_interval(r->estimate, q));
  } else {
    std::vector<double> w_calib(calib.size(), 1.0), w_test(test.size(), 1.0);
    if (!force_uniform_weights) {
      const Eigen::MatrixXd xc = detail::feature_rows(calib, variant);
      const Eigen::MatrixXd xt = detail::feature_rows(test, variant);
      const std::uint64_t fold_seed = derive_seed(derive_seed(seed, to_string(setting)), to_string(variant));
      const LogisticOptions opt{cfg.l2_lambda, cfg.tol, cfg.max_iter};
      const CrossFitResult fit = cross_fit_probabilities(xc, xt, cfg.folds, fold_seed, opt);

      std::vector<double> probs = fit.calib_probs;
      probs.insert(probs.end(), fit.test_probs.begin(), fit.test_probs.end());
      std::vector<std::uint8_t> labels(calib.size(), 0);
      labels.resize(calib.size() + test.size(), 1);
      out.result.classifier_accuracy = classifier_accuracy(probs, labels);

      for (std::size_t i = 0; i < calib.size(); ++i) w_calib[i] = weight_from_prob(fit.calib_probs[i]).weight;
      for (std::size_t i = 0; i < test.size(); ++i) w_test[i] = weight_from_prob(fit.test_probs[i]).weight;
    }
    const WeightedCalibrator calibrator(scores, w_calib, cfg.alpha);
    for (std::size_t i = 0; i < test.size(); ++i)
      intervals.push_back(calibrated_interval(test[i]->estimate, calibrator.quantile(w_test[i])));
    out.calib_weights.reserve(calib.size());
    for (std::size_t i = 0; i < calib.size(); ++i)
      out.calib_weights.push_back(WeightRow{variant, setting, calib[i]->id, calib[i]->covariate, w_calib[i]});
  }

  out.result.coverage = coverage(intervals, truths);
  out.result.mean_width = mean_width(intervals);
  return out;
}

inline TrialOutput run_trial(const ExperimentConfig& cfg, const ExperimentData& data, std::uint64_t seed,
                             Setting setting, Variant variant, bool force_uniform_weights = false) {
  return run_trial_on(cfg, reshuffle(data, seed), data.shift_test, seed, setting, variant, force_uniform_weights);
}

struct Stat {
  double mean = 0.0;
  double std = 0.0;
};

// Sample standard deviation; 0 for a single value.
inline Stat summarize(std::span<const double> v) {
  Stat s;
  if (v.empty()) return Stat{std::nan(""), std::nan("")};
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

struct AggregateRow {
  Variant variant = Variant::standard;
  Setting setting = Setting::id;
  int trials = 0;
  Stat coverage;
  Stat width;  // over trials with a finite mean width
  int infinite_width_trials = 0;
  std::optional<Stat> accuracy;
  Stat dice;
};

struct AggregateResult {
  std::vector<AggregateRow> rows;
  std::vector<TrialResult> trials;  // ordered by trial, setting, variant

  const AggregateRow& row(Variant v, Setting s) const {
    for (const auto& r : rows)
      if (r.variant == v && r.setting == s) return r;
    throw DataError(std::string("no aggregate row for ") + to_string(v) + "/" + to_string(s));
  }
};

inline AggregateResult aggregate(std::span<const TrialResult> trials, std::span<const Variant> variants) {
  AggregateResult agg;
  agg.trials.assign(trials.begin(), trials.end());
  for (Setting setting : {Setting::id, Setting::shift}) {
    for (Variant variant : variants) {
      std::vector<double> cov, width, acc, dice_v;
      AggregateRow row;
      row.variant = variant;
      row.setting = setting;
      for (const auto& t : trials) {
        if (t.variant != variant || t.setting != setting) continue;
        ++row.trials;
        cov.push_back(t.coverage);
        if (std::isinf(t.mean_width))
          ++row.infinite_width_trials;
        else
          width.push_back(t.mean_width);
        if (t.classifier_accuracy) acc.push_back(*t.classifier_accuracy);
        dice_v.push_back(t.dice_mean);
      }
      row.coverage = summarize(cov);
      row.width = width.empty() ? Stat{kInf, 0.0} : summarize(width);
      if (!acc.empty()) row.accuracy = summarize(acc);
      row.dice = summarize(dice_v);
      agg.rows.push_back(row);
    }
  }
  return agg;
}

struct ExperimentOutcome {
  AggregateResult aggregate;
  std::vector<WeightRow> weight_profile;  // representative trial (trial 0)
  TriThresholds thresholds;
};

inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const ExperimentData& data) {
  cfg.validate();
  std::vector<TrialResult> results;
  results.reserve(static_cast<std::size_t>(cfg.trials) * 2 * cfg.variants.size());
  ExperimentOutcome out;
  out.thresholds = data.thresholds;
  for (int t = 0; t < cfg.trials; ++t) {
    const std::uint64_t seed = trial_seed(cfg, t);
    const TrialPartition part = reshuffle(data, seed);
    for (Setting setting : {Setting::id, Setting::shift}) {
      for (Variant variant : cfg.variants) {
        TrialOutput o = run_trial_on(cfg, part, data.shift_test, seed, setting, variant);
        results.push_back(o.result);
        if (t == 0) out.weight_profile.insert(out.weight_profile.end(), o.calib_weights.begin(), o.calib_weights.end());
      }
    }
  }
  out.aggregate = aggregate(results, cfg.variants);
  return out;
}

inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg) {
  return run_experiment(cfg, prepare_experiment(cfg));
}

// Weighted-variant calibration weights for one trial, without the full loop.
inline std::vector<WeightRow> weight_profile(const ExperimentConfig& cfg, const ExperimentData& data, int trial = 0) {
  std::vector<WeightRow> rows;
  const std::uint64_t seed = trial_seed(cfg, trial);
  const TrialPartition part = reshuffle(data, seed);
  for (Setting setting : {Setting::id, Setting::shift})
    for (Variant variant : cfg.variants) {
      if (!is_weighted(variant)) continue;
      auto o = run_trial_on(cfg, part, data.shift_test, seed, setting, variant);
      rows.insert(rows.end(), o.calib_weights.begin(), o.calib_weights.end());
    }
  if (rows.empty()) throw ConfigError("weight profile needs at least one weighted variant");
  return rows;
}

}  // namespace wcpvol
