#include <algorithm>
#include <set>

#include <json.hpp>

#include "dmlshift/errors.h"
#include "dmlshift/harness.h"

namespace dmlshift {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

std::string learner_name(LearnerKind k) { return k == LearnerKind::Mlp ? "mlp" : "lasso"; }

LearnerKind parse_learner(const std::string& s) {
  if (s == "mlp") return LearnerKind::Mlp;
  if (s == "lasso") return LearnerKind::Lasso;
  throw ConfigError("unknown learner '" + s + "'");
}

std::string variance_name(VarianceMode m) {
  return m == VarianceMode::XiCorrected ? "xi_corrected" : "as_printed";
}

VarianceMode parse_variance(const std::string& s) {
  if (s == "xi_corrected") return VarianceMode::XiCorrected;
  if (s == "as_printed") return VarianceMode::AsPrinted;
  throw ConfigError("unknown variance_mode '" + s + "'");
}

std::string units_name(ShiftUnits u) {
  return u == ShiftUnits::CovariateSd ? "covariate_sd" : "noise_sd";
}

ShiftUnits parse_units(const std::string& s) {
  if (s == "covariate_sd") return ShiftUnits::CovariateSd;
  if (s == "noise_sd") return ShiftUnits::NoiseSd;
  throw ConfigError("unknown shift_units '" + s + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (num_specs < 1 || reps_per_spec < 1) throw ConfigError("num_specs and reps_per_spec must be >= 1");
  if (n_train < 2 || n_field < 2) throw ConfigError("n_train and n_field must be >= 2");
  if (n_validate < 0) throw ConfigError("n_validate must be >= 0");
  if (estimators.empty()) throw ConfigError("at least one estimator is required");
  for (std::size_t i = 0; i < estimators.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (estimators[i] == estimators[k]) throw ConfigError("duplicate estimator " + estimator_name(estimators[i]));
    }
  }
  if (learner == LearnerKind::Mlp) {
    mlp.validate();
    if (epoch_grid.empty()) throw ConfigError("epoch_grid must not be empty");
    for (std::size_t i = 0; i < epoch_grid.size(); ++i) {
      if (epoch_grid[i] < 1) throw ConfigError("epoch_grid entries must be >= 1");
      if (i > 0 && epoch_grid[i] <= epoch_grid[i - 1]) throw ConfigError("epoch_grid must be strictly increasing");
    }
  }
  if (!(lasso_c > 0.0) || !(riesz_c >= 0.0)) throw ConfigError("penalty constants must be positive");
  if (riesz_penalty && !(*riesz_penalty >= 0.0)) throw ConfigError("riesz_penalty must be >= 0");
  if (dictionary_order < 1) throw ConfigError("dictionary_order must be >= 1");
  trim.validate();
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("level must lie in (0, 1)");
  if (num_folds < 2) throw ConfigError("num_folds must be >= 2");
  if (std::find(estimators.begin(), estimators.end(), EstimatorKind::CrossFit) != estimators.end() &&
      n_train < num_folds) {
    throw ConfigError("n_train smaller than num_folds");
  }
  sim.validate();
  if (oracle_n < 10000) throw ConfigError("oracle_n must be >= 10000");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (bootstrap_resamples < 0) throw ConfigError("bootstrap_resamples must be >= 0");
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["num_specs"] = num_specs;
  j["reps_per_spec"] = reps_per_spec;
  j["n_train"] = n_train;
  j["n_field"] = n_field;
  j["n_validate"] = n_validate;
  j["epoch_grid"] = epoch_grid;
  json est = json::array();
  for (auto e : estimators) est.push_back(estimator_name(e));
  j["estimators"] = est;
  j["learner"] = learner_name(learner);
  j["mlp"] = {{"hidden_layers", mlp.hidden_layers}, {"learn_rate", mlp.learn_rate},
              {"batch_size", mlp.batch_size},       {"max_epochs", mlp.max_epochs},
              {"l2_penalty", mlp.l2_penalty},       {"seed", mlp.seed}};
  j["lasso_c"] = lasso_c;
  j["lasso_penalize_intercept"] = lasso_penalize_intercept;
  j["dictionary_order"] = dictionary_order;
  j["riesz_c"] = riesz_c;
  j["riesz_penalty"] = riesz_penalty ? json(*riesz_penalty) : json(nullptr);
  j["trim"] = {{"rule", trim.rule == TrimSpec::Rule::Growth ? "growth" : "fixed"}, {"value", trim.value}};
  j["level"] = level;
  j["variance_mode"] = variance_name(variance_mode);
  j["num_folds"] = num_folds;
  j["sim"] = {{"dim", sim.dim},
              {"order", sim.order},
              {"sparsity", sim.sparsity},
              {"first_dim_scale", sim.first_dim_scale},
              {"last_dim_scale", sim.last_dim_scale},
              {"noise_sd", sim.noise_sd},
              {"shift", sim.shift},
              {"shift_units", units_name(sim.shift_units)},
              {"uniform_weight", sim.uniform_weight},
              {"uniform_half_width", sim.uniform_half_width},
              {"pilot_size", sim.pilot_size},
              {"target_sd", sim.target_sd}};
  j["oracle_n"] = oracle_n;
  j["master_seed"] = master_seed;
  j["threads"] = threads;
  j["bootstrap_resamples"] = bootstrap_resamples;
  j["out_dir"] = out_dir;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  ExperimentConfig c;
  try {
    const json j = json::parse(text);
    reject_unknown(j,
                   {"num_specs", "reps_per_spec", "n_train", "n_field", "n_validate", "epoch_grid",
                    "estimators", "learner", "mlp", "lasso_c", "lasso_penalize_intercept",
                    "dictionary_order", "riesz_c", "riesz_penalty", "trim", "level",
                    "variance_mode", "num_folds", "sim", "oracle_n", "master_seed", "threads",
                    "bootstrap_resamples", "out_dir"},
                   "config");
    read(j, "num_specs", c.num_specs);
    read(j, "reps_per_spec", c.reps_per_spec);
    read(j, "n_train", c.n_train);
    read(j, "n_field", c.n_field);
    read(j, "n_validate", c.n_validate);
    read(j, "epoch_grid", c.epoch_grid);
    if (j.contains("estimators")) {
      c.estimators.clear();
      for (const auto& e : j.at("estimators")) c.estimators.push_back(parse_estimator(e.get<std::string>()));
    }
    if (j.contains("learner")) c.learner = parse_learner(j.at("learner").get<std::string>());
    if (j.contains("mlp")) {
      const auto& m = j.at("mlp");
      reject_unknown(m, {"hidden_layers", "learn_rate", "batch_size", "max_epochs", "l2_penalty", "seed"},
                     "config.mlp");
      read(m, "hidden_layers", c.mlp.hidden_layers);
      read(m, "learn_rate", c.mlp.learn_rate);
      read(m, "batch_size", c.mlp.batch_size);
      read(m, "max_epochs", c.mlp.max_epochs);
      read(m, "l2_penalty", c.mlp.l2_penalty);
      read(m, "seed", c.mlp.seed);
    }
    read(j, "lasso_c", c.lasso_c);
    read(j, "lasso_penalize_intercept", c.lasso_penalize_intercept);
    read(j, "dictionary_order", c.dictionary_order);
    read(j, "riesz_c", c.riesz_c);
    if (j.contains("riesz_penalty") && !j.at("riesz_penalty").is_null()) {
      c.riesz_penalty = j.at("riesz_penalty").get<double>();
    }
    if (j.contains("trim")) {
      const auto& t = j.at("trim");
      reject_unknown(t, {"rule", "value"}, "config.trim");
      if (t.contains("rule")) {
        const auto rule = t.at("rule").get<std::string>();
        if (rule == "growth") c.trim.rule = TrimSpec::Rule::Growth;
        else if (rule == "fixed") c.trim.rule = TrimSpec::Rule::Fixed;
        else throw ConfigError("unknown trim rule '" + rule + "'");
      }
      read(t, "value", c.trim.value);
    }
    read(j, "level", c.level);
    if (j.contains("variance_mode")) c.variance_mode = parse_variance(j.at("variance_mode").get<std::string>());
    read(j, "num_folds", c.num_folds);
    if (j.contains("sim")) {
      const auto& s = j.at("sim");
      reject_unknown(s,
                     {"dim", "order", "sparsity", "first_dim_scale", "last_dim_scale", "noise_sd",
                      "shift", "shift_units", "uniform_weight", "uniform_half_width", "pilot_size",
                      "target_sd"},
                     "config.sim");
      read(s, "dim", c.sim.dim);
      read(s, "order", c.sim.order);
      read(s, "sparsity", c.sim.sparsity);
      read(s, "first_dim_scale", c.sim.first_dim_scale);
      read(s, "last_dim_scale", c.sim.last_dim_scale);
      read(s, "noise_sd", c.sim.noise_sd);
      read(s, "shift", c.sim.shift);
      if (s.contains("shift_units")) c.sim.shift_units = parse_units(s.at("shift_units").get<std::string>());
      read(s, "uniform_weight", c.sim.uniform_weight);
      read(s, "uniform_half_width", c.sim.uniform_half_width);
      read(s, "pilot_size", c.sim.pilot_size);
      read(s, "target_sd", c.sim.target_sd);
    }
    read(j, "oracle_n", c.oracle_n);
    read(j, "master_seed", c.master_seed);
    read(j, "threads", c.threads);
    read(j, "bootstrap_resamples", c.bootstrap_resamples);
    read(j, "out_dir", c.out_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace dmlshift
