// dmlshift command-line driver: run, aggregate, report.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "dmlshift/errors.h"
#include "dmlshift/harness.h"

namespace fs = std::filesystem;
using namespace dmlshift;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Command-line overrides; applied on top of --config.
struct RunFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool resume = false;

  std::optional<int> num_specs, reps_per_spec;
  std::optional<Index> n_train, n_field, n_validate;
  std::vector<int> epochs;
  std::vector<std::string> estimators;
  std::optional<std::string> learner;
  std::vector<int> hidden;
  std::optional<double> learn_rate, l2;
  std::optional<int> batch_size, max_epochs;
  std::optional<double> lasso_c;
  std::optional<bool> lasso_penalize_intercept;
  std::optional<int> dictionary_order;
  std::optional<double> riesz_c, riesz_penalty;
  std::optional<std::string> trim_rule;
  std::optional<double> trim_value, level;
  std::optional<std::string> variance_mode;
  std::optional<int> folds;
  std::optional<int> sim_dim, sim_order;
  std::optional<double> sparsity, noise_sd, shift, uniform_weight, target_sd;
  std::optional<std::string> shift_units;
  std::optional<Index> pilot_size, oracle_n;
  std::optional<int> threads, bootstrap;
};

template <class T, class U>
void apply(const std::optional<T>& flag, U& into) {
  if (flag) into = *flag;
}

ExperimentConfig build_config(const RunFlags& f) {
  ExperimentConfig c;
  if (!f.config_path.empty()) c = ExperimentConfig::from_json(slurp(f.config_path));
  apply(f.seed, c.master_seed);
  apply(f.out, c.out_dir);
  apply(f.num_specs, c.num_specs);
  apply(f.reps_per_spec, c.reps_per_spec);
  apply(f.n_train, c.n_train);
  apply(f.n_field, c.n_field);
  apply(f.n_validate, c.n_validate);
  if (!f.epochs.empty()) c.epoch_grid = f.epochs;
  if (!f.estimators.empty()) {
    c.estimators.clear();
    for (const auto& e : f.estimators) c.estimators.push_back(parse_estimator(e));
  }
  if (f.learner) {
    if (*f.learner == "mlp") c.learner = LearnerKind::Mlp;
    else if (*f.learner == "lasso") c.learner = LearnerKind::Lasso;
    else throw ConfigError("unknown learner '" + *f.learner + "'");
  }
  if (!f.hidden.empty()) c.mlp.hidden_layers = f.hidden;
  apply(f.learn_rate, c.mlp.learn_rate);
  apply(f.l2, c.mlp.l2_penalty);
  apply(f.batch_size, c.mlp.batch_size);
  apply(f.max_epochs, c.mlp.max_epochs);
  apply(f.lasso_c, c.lasso_c);
  apply(f.lasso_penalize_intercept, c.lasso_penalize_intercept);
  apply(f.dictionary_order, c.dictionary_order);
  apply(f.riesz_c, c.riesz_c);
  if (f.riesz_penalty) c.riesz_penalty = *f.riesz_penalty;
  if (f.trim_rule) {
    if (*f.trim_rule == "growth") c.trim.rule = TrimSpec::Rule::Growth;
    else if (*f.trim_rule == "fixed") c.trim.rule = TrimSpec::Rule::Fixed;
    else throw ConfigError("unknown trim rule '" + *f.trim_rule + "'");
  }
  apply(f.trim_value, c.trim.value);
  apply(f.level, c.level);
  if (f.variance_mode) {
    if (*f.variance_mode == "xi_corrected") c.variance_mode = VarianceMode::XiCorrected;
    else if (*f.variance_mode == "as_printed") c.variance_mode = VarianceMode::AsPrinted;
    else throw ConfigError("unknown variance mode '" + *f.variance_mode + "'");
  }
  apply(f.folds, c.num_folds);
  apply(f.sim_dim, c.sim.dim);
  apply(f.sim_order, c.sim.order);
  apply(f.sparsity, c.sim.sparsity);
  apply(f.noise_sd, c.sim.noise_sd);
  apply(f.shift, c.sim.shift);
  if (f.shift_units) {
    if (*f.shift_units == "covariate_sd") c.sim.shift_units = ShiftUnits::CovariateSd;
    else if (*f.shift_units == "noise_sd") c.sim.shift_units = ShiftUnits::NoiseSd;
    else throw ConfigError("unknown shift units '" + *f.shift_units + "'");
  }
  apply(f.uniform_weight, c.sim.uniform_weight);
  apply(f.target_sd, c.sim.target_sd);
  apply(f.pilot_size, c.sim.pilot_size);
  apply(f.oracle_n, c.oracle_n);
  apply(f.threads, c.threads);
  apply(f.bootstrap, c.bootstrap_resamples);
  c.validate();
  return c;
}

void add_run_flags(CLI::App* run, RunFlags& f) {
  run->add_option("--config", f.config_path, "JSON experiment configuration")->check(CLI::ExistingFile);
  run->add_option("--seed", f.seed, "master seed");
  run->add_option("--out", f.out, "output directory");
  run->add_flag("--resume", f.resume, "keep records already in <out>/records.csv");
  run->add_option("--num-specs", f.num_specs);
  run->add_option("--reps-per-spec", f.reps_per_spec);
  run->add_option("--n-train", f.n_train);
  run->add_option("--n-field", f.n_field);
  run->add_option("--n-validate", f.n_validate, "0 means n-train");
  run->add_option("--epochs", f.epochs, "epoch grid, ascending")->delimiter(',');
  run->add_option("--estimators", f.estimators, "plug_in,crossfit,nocrossfit,sample_split,pinv")
      ->delimiter(',');
  run->add_option("--learner", f.learner, "mlp or lasso");
  run->add_option("--hidden", f.hidden, "hidden layer widths")->delimiter(',');
  run->add_option("--learn-rate", f.learn_rate);
  run->add_option("--batch-size", f.batch_size);
  run->add_option("--max-epochs", f.max_epochs);
  run->add_option("--l2", f.l2, "MLP weight penalty");
  run->add_option("--lasso-c", f.lasso_c);
  run->add_option("--lasso-penalize-intercept", f.lasso_penalize_intercept);
  run->add_option("--dictionary-order", f.dictionary_order);
  run->add_option("--riesz-c", f.riesz_c);
  run->add_option("--riesz-penalty", f.riesz_penalty, "fixed Riesz penalty; overrides --riesz-c");
  run->add_option("--trim-rule", f.trim_rule, "growth or fixed");
  run->add_option("--trim-value", f.trim_value);
  run->add_option("--level", f.level, "confidence level");
  run->add_option("--variance-mode", f.variance_mode, "xi_corrected or as_printed");
  run->add_option("--folds", f.folds);
  run->add_option("--sim-dim", f.sim_dim);
  run->add_option("--sim-order", f.sim_order);
  run->add_option("--sparsity", f.sparsity);
  run->add_option("--noise-sd", f.noise_sd);
  run->add_option("--shift", f.shift);
  run->add_option("--shift-units", f.shift_units, "covariate_sd or noise_sd");
  run->add_option("--uniform-weight", f.uniform_weight);
  run->add_option("--target-sd", f.target_sd);
  run->add_option("--pilot-size", f.pilot_size);
  run->add_option("--oracle-n", f.oracle_n);
  run->add_option("--threads", f.threads);
  run->add_option("--bootstrap", f.bootstrap, "bootstrap resamples for standard errors");
}

int do_run(const RunFlags& f) {
  const ExperimentConfig cfg = build_config(f);
  fs::create_directories(cfg.out_dir);
  const fs::path dir(cfg.out_dir);
  {
    std::ofstream out(dir / "config.json", std::ios::binary | std::ios::trunc);
    out << cfg.to_json() << '\n';
  }
  const std::string records_path = (dir / "records.csv").string();
  std::vector<ReplicationRecord> existing;
  if (f.resume) existing = read_records_csv(records_path);

  std::ofstream stream;
  if (f.resume && fs::exists(records_path)) {
    stream.open(records_path, std::ios::binary | std::ios::app);
  } else {
    stream.open(records_path, std::ios::binary | std::ios::trunc);
    stream << kRecordsHeader << '\n';
  }
  if (!stream) throw IoError("cannot open '" + records_path + "'");
  std::size_t produced = 0;
  auto sink = [&](const ReplicationRecord& r) {
    stream << format_record_csv_line(r) << '\n';
    stream.flush();
    ++produced;
  };
  const auto records = run_experiment(cfg, existing, sink);
  stream.close();

  const auto rows = aggregate(records, cfg.bootstrap_resamples, cfg.master_seed);
  emit_outputs(rows, records, cfg.out_dir);
  std::cerr << "computed " << produced << " records (" << records.size() << " total) into "
            << cfg.out_dir << '\n';
  std::cout << format_report(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Debiased estimation under covariate shift: simulation driver"};
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "run the simulation sweep and write records plus aggregates");
  add_run_flags(run, run_flags);

  std::string agg_in, agg_out;
  int agg_bootstrap = 1000;
  std::uint64_t agg_seed = ExperimentConfig{}.master_seed;
  auto* agg = app.add_subcommand("aggregate", "recompute aggregates from an existing records.csv");
  agg->add_option("--in", agg_in, "directory holding records.csv")->required();
  agg->add_option("--out", agg_out, "output directory (defaults to --in)");
  agg->add_option("--bootstrap", agg_bootstrap, "bootstrap resamples");
  agg->add_option("--seed", agg_seed, "bootstrap seed");

  std::string report_in;
  auto* report = app.add_subcommand("report", "print the aggregate table");
  report->add_option("--in", report_in, "directory holding aggregate.json")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return do_run(run_flags);
    if (agg->parsed()) {
      const auto records = read_records_csv((fs::path(agg_in) / "records.csv").string());
      if (records.empty()) throw IoError("no records found under '" + agg_in + "'");
      const auto rows = aggregate(records, agg_bootstrap, agg_seed);
      emit_outputs(rows, records, agg_out.empty() ? agg_in : agg_out);
      std::cout << format_report(rows);
      return 0;
    }
    if (report->parsed()) {
      const auto rows = aggregate_from_json(slurp((fs::path(report_in) / "aggregate.json").string()));
      std::cout << format_report(rows);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
