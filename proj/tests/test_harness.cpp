#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "wcpvol/wcpvol.hpp"

using namespace wcpvol;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.trials = 3;
  c.generation.grid_dim = 16;
  c.generation.radius_min = 2.5;
  c.generation.radius_max = 5.0;
  c.generation.n_train = 20;
  c.generation.n_calib = 60;
  c.generation.n_id_test = 50;
  c.generation.n_shift_test = 40;
  c.threshold_candidates = 64;
  c.latent_k = 8;
  c.folds = 5;
  return c;
}

const ExperimentData& small_data() {
  static const ExperimentData data = prepare_experiment(small_config());
  return data;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

fs::path scratch(const char* name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const ExperimentConfig c;
  EXPECT_EQ(c.alpha, 0.05);
  EXPECT_EQ(c.trials, 250);
  EXPECT_EQ(c.latent_k, 64);
  EXPECT_EQ(c.folds, 20);
  EXPECT_EQ(c.generation.n_calib, 1000);
  const nlohmann::json j = to_json(c);
  EXPECT_EQ(to_json(config_from_json(j)), j);
}

TEST(Config, PartialOverrides) {
  const ExperimentConfig c = config_from_json(nlohmann::json::parse(
      R"({"alpha": 0.1, "latent": {"mode": "raw"}, "generation": {"n_calib": 7, "shift_snr": {"law": "uniform", "a": 0.5, "b": 2}}})"));
  EXPECT_EQ(c.alpha, 0.1);
  EXPECT_EQ(c.latent_mode, LatentMode::raw);
  EXPECT_EQ(c.generation.n_calib, 7);
  EXPECT_EQ(c.generation.n_train, 1000);
  EXPECT_EQ(c.generation.shift_snr.law, SnrLaw::uniform);
  EXPECT_EQ(c.latent_k, 64);
}

TEST(Config, Rejections) {
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"alpah": 0.1})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"generation": {"gird_dim": 8}})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"alpha": 1.5})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"variants": ["standard", "standard"]})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"variants": ["w_magic"]})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"folds": 1})")), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), std::exception);
}

TEST(Prepare, RecordsAreConsistent) {
  const ExperimentData& d = small_data();
  EXPECT_EQ(d.train.size(), 20u);
  EXPECT_EQ(d.calib.size(), 60u);
  EXPECT_EQ(d.shift_test.size(), 40u);
  for (const auto* g : {&d.calib, &d.id_test, &d.shift_test})
    for (const auto& r : *g) {
      EXPECT_LE(r.estimate.lo, r.estimate.mid);
      EXPECT_LE(r.estimate.mid, r.estimate.hi);
      EXPECT_EQ(r.latent.size(), 8u);
      EXPECT_GT(r.truth_volume, 0.0);
    }
}

TEST(Prepare, StreamingMatchesInMemory) {
  const ExperimentConfig c = small_config();
  const ExperimentData a = small_data();
  const ExperimentData b = prepare_experiment(c, generate_splits(c.seed, c.generation));
  EXPECT_EQ(a.thresholds.t_mean, b.thresholds.t_mean);
  ASSERT_EQ(a.shift_test.size(), b.shift_test.size());
  for (std::size_t i = 0; i < a.shift_test.size(); ++i) {
    EXPECT_EQ(a.shift_test[i].latent, b.shift_test[i].latent);
    EXPECT_EQ(a.shift_test[i].estimate.hi, b.shift_test[i].estimate.hi);
  }
}

TEST(Prepare, FittedStateDependsOnlyOnTrain) {
  const ExperimentConfig c = small_config();
  DatasetSplits s = generate_splits(c.seed, c.generation);
  const ExperimentData a = prepare_experiment(c, s);
  s.calib.erase(s.calib.begin() + 10, s.calib.end());
  s.shift_test = generate_splits(c.seed + 1, c.generation).shift_test;
  const ExperimentData b = prepare_experiment(c, s);
  EXPECT_EQ(a.thresholds.t_lower, b.thresholds.t_lower);
  EXPECT_EQ(a.thresholds.t_mean, b.thresholds.t_mean);
  EXPECT_EQ(a.thresholds.t_upper, b.thresholds.t_upper);
  EXPECT_TRUE(std::equal(a.bank.weights().begin(), a.bank.weights().end(), b.bank.weights().begin()));
}

TEST(Trial, ReshufflePreservesSizesAndPool) {
  const ExperimentData& d = small_data();
  const TrialPartition p = reshuffle(d, 77);
  EXPECT_EQ(p.calib.size(), d.calib.size());
  EXPECT_EQ(p.id_test.size(), d.id_test.size());
  std::set<std::int64_t> ids;
  for (const auto* r : p.calib) ids.insert(r->id);
  for (const auto* r : p.id_test) ids.insert(r->id);
  EXPECT_EQ(ids.size(), d.calib.size() + d.id_test.size());
}

TEST(Trial, UniformWeightsReproduceStandard) {
  const ExperimentConfig c = small_config();
  const ExperimentData& d = small_data();
  for (Setting s : {Setting::id, Setting::shift})
    for (Variant v : {Variant::w_oracle, Variant::w_latent}) {
      const TrialResult std_r = run_trial(c, d, 5, s, Variant::standard).result;
      const TrialResult w_r = run_trial(c, d, 5, s, v, true).result;
      EXPECT_EQ(std_r.coverage, w_r.coverage);
      EXPECT_EQ(std_r.mean_width, w_r.mean_width);
    }
}

TEST(Trial, WeightedTrialReportsAccuracyAndWeights) {
  const ExperimentConfig c = small_config();
  const TrialOutput o = run_trial(c, small_data(), 9, Setting::shift, Variant::w_oracle);
  ASSERT_TRUE(o.result.classifier_accuracy.has_value());
  EXPECT_EQ(o.calib_weights.size(), 60u);
  for (const auto& w : o.calib_weights) {
    EXPECT_GE(w.weight, 1.0 / 99.0 - 1e-12);
    EXPECT_LE(w.weight, 99.0 + 1e-9);
  }
  EXPECT_FALSE(run_trial(c, small_data(), 9, Setting::shift, Variant::standard).result.classifier_accuracy);
}

TEST(Experiment, SingleTrialHasZeroSpread) {
  ExperimentConfig c = small_config();
  c.trials = 1;
  const ExperimentOutcome o = run_experiment(c, small_data());
  EXPECT_EQ(o.aggregate.rows.size(), 6u);
  for (const auto& r : o.aggregate.rows) {
    EXPECT_EQ(r.trials, 1);
    EXPECT_EQ(r.coverage.std, 0.0);
    EXPECT_EQ(r.dice.std, 0.0);
  }
}

TEST(Experiment, DeterministicOutputFiles) {
  const ExperimentConfig c = small_config();
  const fs::path a = scratch("wcpvol_det_a"), b = scratch("wcpvol_det_b");
  for (const fs::path& dir : {a, b}) {
    const ExperimentOutcome o = run_experiment(c);
    export_results(o.aggregate, dir.string(), {{"config", to_json(c)}});
    export_weight_profile(o.weight_profile, (dir / "weights.csv").string());
  }
  for (const char* f : {"results.json", "results.csv", "weights.csv"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Export, ResultsRoundTripAndCsvShape) {
  const ExperimentConfig c = small_config();
  const ExperimentOutcome o = run_experiment(c, small_data());
  const fs::path dir = scratch("wcpvol_export");
  export_results(o.aggregate, dir.string());
  const AggregateResult back = aggregate_from_json(read_json_file((dir / "results.json").string()));
  ASSERT_EQ(back.rows.size(), o.aggregate.rows.size());
  for (std::size_t i = 0; i < back.rows.size(); ++i) {
    const auto &x = o.aggregate.rows[i], &y = back.rows[i];
    EXPECT_EQ(x.variant, y.variant);
    EXPECT_NEAR(x.coverage.mean, y.coverage.mean, 1e-12);
    EXPECT_NEAR(x.coverage.std, y.coverage.std, 1e-12);
    if (std::isfinite(x.width.mean)) EXPECT_NEAR(x.width.mean, y.width.mean, 1e-12 * x.width.mean);
    EXPECT_EQ(x.accuracy.has_value(), y.accuracy.has_value());
  }
  EXPECT_EQ(back.trials.size(), o.aggregate.trials.size());

  std::ifstream csv(dir / "results.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, kResultsCsvHeader);
  int rows = 0;
  while (std::getline(csv, line)) rows += !line.empty();
  EXPECT_EQ(rows, 6);
  fs::remove_all(dir);
}

TEST(Export, WeightProfile) {
  const ExperimentConfig c = small_config();
  const auto rows = weight_profile(c, small_data(), 0);
  EXPECT_EQ(rows.size(), 4u * 60u);
  const fs::path dir = scratch("wcpvol_weights");
  export_weight_profile(rows, (dir / "weights.csv").string());
  const auto back = load_weight_profile((dir / "weights.csv").string());
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].sample_id, rows[i].sample_id);
    EXPECT_EQ(back[i].weight, rows[i].weight);
    EXPECT_EQ(back[i].covariate, rows[i].covariate);
  }
  fs::remove_all(dir);

  ExperimentConfig unweighted = c;
  unweighted.variants = {Variant::standard};
  EXPECT_THROW(weight_profile(unweighted, small_data(), 0), ConfigError);
  EXPECT_THROW(export_weight_profile({}, (dir / "w.csv").string()), DataError);
}

TEST(Stats, SummarizeAndSpearman) {
  const Stat s = summarize(std::vector<double>{1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.std, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(summarize(std::vector<double>{7}).std, 0.0);
  const std::vector<double> a{1, 2, 3, 4, 5}, b{50, 40, 30, 20, 10}, c{1, 3, 2, 5, 4};
  EXPECT_DOUBLE_EQ(spearman_correlation(a, b), -1.0);
  EXPECT_DOUBLE_EQ(spearman_correlation(a, a), 1.0);
  EXPECT_DOUBLE_EQ(spearman_correlation(a, c), 0.8);
  EXPECT_EQ(ranks(std::vector<double>{3, 1, 3}), (std::vector<double>{2.5, 1, 2.5}));
}
