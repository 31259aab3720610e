// wcpvol: dataset generation, estimator fitting and conformal experiments.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime or data error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "wcpvol/wcpvol.hpp"

namespace fs = std::filesystem;
using namespace wcpvol;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data_dir;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_data) {
  cmd->add_option("-c,--config", o.config_path, "JSON experiment config (defaults when omitted)");
  cmd->add_option("--seed", o.seed, "Override config seed");
  cmd->add_option("-o,--out", o.out, "Output directory (overrides config output_dir)");
  if (with_data) cmd->add_option("--data", o.data_dir, "Read a dataset directory instead of generating one");
  cmd->add_flag("-q,--quiet", o.quiet, "Only print errors");
}

ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  cfg.validate();
  return cfg;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

ExperimentData load_or_prepare(const ExperimentConfig& cfg, const CommonOptions& o) {
  if (o.data_dir.empty()) return prepare_experiment(cfg);
  const LoadedDataset ds = read_dataset(o.data_dir);
  return prepare_experiment(cfg, ds.splits);
}

int cmd_generate(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve(o);
  Stopwatch sw;
  const DatasetSplits splits = generate_splits(cfg.seed, cfg.generation);
  write_dataset(cfg.output_dir, splits, cfg.generation, cfg.seed);
  if (!o.quiet)
    std::printf("wrote %zu samples to %s (%.1fs)\n", splits.total(), cfg.output_dir.c_str(), sw.seconds());
  return 0;
}

int cmd_fit(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve(o);
  Stopwatch sw;
  std::vector<Sample> train;
  if (o.data_dir.empty()) {
    for (int i = 0; i < cfg.generation.n_train; ++i)
      train.push_back(generate_split_sample(cfg.seed, cfg.generation, i, Split::train));
  } else {
    train = read_dataset(o.data_dir).splits.train;
  }
  const TriThresholds th = fit_thresholds(train, cfg.gamma, experiment_search(cfg));
  const FilterBank bank = experiment_filter_bank(cfg);
  fs::create_directories(cfg.output_dir);
  write_json_file((fs::path(cfg.output_dir) / "thresholds.json").string(), th);
  write_json_file((fs::path(cfg.output_dir) / "filter_bank.json").string(), to_json(bank));
  if (!o.quiet)
    std::printf("thresholds: lower=%.6g mean=%.6g upper=%.6g (gamma=%.3g), %d kernels, %.1fs\n", th.t_lower,
                th.t_mean, th.t_upper, th.gamma, bank.count(), sw.seconds());
  return 0;
}

void print_table(const AggregateResult& agg) {
  std::printf("%-9s %-6s %9s %9s %12s %10s %9s %9s\n", "variant", "setting", "cov_mean", "cov_std", "width_mean",
              "width_std", "acc_mean", "dice");
  for (const auto& r : agg.rows) {
    std::printf("%-9s %-6s %9.4f %9.4f %12.2f %10.2f %9s %9.4f", to_string(r.variant), to_string(r.setting),
                r.coverage.mean, r.coverage.std, r.width.mean, r.width.std,
                r.accuracy ? std::to_string(r.accuracy->mean).substr(0, 6).c_str() : "-", r.dice.mean);
    if (r.infinite_width_trials > 0) std::printf("  (%d trials with unbounded width)", r.infinite_width_trials);
    std::printf("\n");
  }
}

int cmd_run(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve(o);
  Stopwatch sw;
  const ExperimentData data = load_or_prepare(cfg, o);
  if (!o.quiet) std::printf("prepared %zu samples (%.1fs)\n", data.train.size() + data.calib.size() +
                                                                   data.id_test.size() + data.shift_test.size(),
                            sw.seconds());
  const ExperimentOutcome outcome = run_experiment(cfg, data);
  nlohmann::json extra{{"config", to_json(cfg)}, {"thresholds", outcome.thresholds}};
  export_results(outcome.aggregate, cfg.output_dir, extra);
  if (!outcome.weight_profile.empty())
    export_weight_profile(outcome.weight_profile, (fs::path(cfg.output_dir) / "weights.csv").string());
  if (!o.quiet) {
    print_table(outcome.aggregate);
    std::printf("results in %s (%.1fs)\n", cfg.output_dir.c_str(), sw.seconds());
  }
  return 0;
}

int cmd_export_weights(const CommonOptions& o, int trial) {
  const ExperimentConfig cfg = resolve(o);
  if (trial < 0 || trial >= cfg.trials) throw ConfigError("--trial must lie in [0, trials)");
  const ExperimentData data = load_or_prepare(cfg, o);
  const auto rows = weight_profile(cfg, data, trial);
  const std::string path = (fs::path(cfg.output_dir) / "weights.csv").string();
  export_weight_profile(rows, path);
  if (!o.quiet) std::printf("wrote %zu weight rows to %s\n", rows.size(), path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal predictive intervals for 3D object volumes under covariate shift"};
  app.require_subcommand(1);

  CommonOptions gen_opt, fit_opt, run_opt, exp_opt;
  int trial = 0;
  auto* gen = app.add_subcommand("generate", "Generate the synthetic sphere dataset to disk");
  add_common(gen, gen_opt, false);
  auto* fit = app.add_subcommand("fit", "Fit the three thresholds and build the filter bank");
  add_common(fit, fit_opt, true);
  auto* run = app.add_subcommand("run", "Run the full experiment and write results");
  add_common(run, run_opt, true);
  auto* exp = app.add_subcommand("export-weights", "Write calibration weights of one trial");
  add_common(exp, exp_opt, true);
  exp->add_option("--trial", trial, "Trial index")->default_val(0);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_generate(gen_opt);
    if (*fit) return cmd_fit(fit_opt);
    if (*run) return cmd_run(run_opt);
    if (*exp) return cmd_export_weights(exp_opt, trial);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
