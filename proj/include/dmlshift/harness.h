#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dmlshift/debias.h"
#include "dmlshift/learners.h"
#include "dmlshift/simgen.h"
#include "dmlshift/solvers.h"

namespace dmlshift {

enum class EstimatorKind {
  PlugIn,         // "plug_in"
  CrossFit,       // "crossfit": L-fold cross-fitting
  NoCrossFit,     // "nocrossfit": gamma and alpha from all training rows
  SampleSplit,    // "sample_split": residuals on the independent validation sample
  PseudoInverse,  // "pinv": generalized-inverse correction
};

std::string estimator_name(EstimatorKind kind);
EstimatorKind parse_estimator(const std::string& name);

enum class LearnerKind { Mlp, Lasso };

struct ExperimentConfig {
  int num_specs = 30;
  int reps_per_spec = 60;
  Index n_train = 10000;
  Index n_field = 10000;
  Index n_validate = 0;  // 0 means n_train
  // Epoch counts at which the network is evaluated (ascending). Ignored
  // by the Lasso learner, whose records carry epoch 0.
  std::vector<int> epoch_grid{25, 50, 100, 250, 500};
  std::vector<EstimatorKind> estimators{EstimatorKind::PlugIn, EstimatorKind::SampleSplit};

  LearnerKind learner = LearnerKind::Mlp;
  MlpConfig mlp;
  double lasso_c = kLassoPenaltyC;  // r_gamma = c sqrt(log J / T)
  bool lasso_penalize_intercept = true;

  int dictionary_order = 2;
  double riesz_c = kRieszPenaltyC;       // r = c sqrt(log J / N)
  std::optional<double> riesz_penalty;  // overrides riesz_c when set
  TrimSpec trim = TrimSpec::growth(5.0);
  double level = 0.95;
  VarianceMode variance_mode = VarianceMode::XiCorrected;
  int num_folds = 5;

  SimKnobs sim;
  Index oracle_n = 1000000;
  std::uint64_t master_seed = 20230601;
  int threads = 1;
  int bootstrap_resamples = 1000;
  std::string out_dir = "out";

  void validate() const;
  std::string to_json() const;
  // Keys absent from the JSON keep their defaults; unknown keys are errors.
  static ExperimentConfig from_json(const std::string& text);
};

struct ReplicationRecord {
  int spec_id = 0;
  int rep_id = 0;
  int epoch = 0;
  std::string estimator;
  double theta_hat = 0.0;
  double plug_in = 0.0;
  double correction = 0.0;
  double v_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double truth_theta = 0.0;
  double truth_mc_se = 0.0;
  bool failed = false;
  double wall_time_ms = 0.0;
};

// Records are identified by (spec_id, rep_id, epoch, estimator).
bool same_key(const ReplicationRecord& a, const ReplicationRecord& b);
bool key_less(const ReplicationRecord& a, const ReplicationRecord& b);

struct AggregateRow {
  std::string estimator;
  int epoch = 0;
  double rms_bias = 0.0;
  double rms_bias_se = 0.0;  // bootstrap over specifications
  double avg_rmse = 0.0;
  double avg_rmse_se = 0.0;  // bootstrap over specifications
  double coverage_rate = 0.0;
  Index n_records = 0;
  Index n_specs = 0;
  Index n_failed = 0;
};

// Called once per newly computed record, serialized across workers.
using RecordSink = std::function<void(const ReplicationRecord&)>;

// Runs every spec x rep x epoch x estimator cell not already present in
// `existing` and returns the union sorted by key.
std::vector<ReplicationRecord> run_experiment(const ExperimentConfig& cfg,
                                              const std::vector<ReplicationRecord>& existing = {},
                                              const RecordSink& sink = {});

// Per (estimator, epoch) group, failed records excluded:
//   bias_s  = mean over reps of (theta_hat - truth_theta)
//   rms_bias = sqrt(mean over specs of bias_s^2)
//   avg_rmse = mean over specs of sqrt(mean over reps of (theta_hat - truth)^2)
//   coverage_rate = share of records whose CI contains truth_theta
std::vector<AggregateRow> aggregate(const std::vector<ReplicationRecord>& records,
                                    int bootstrap_resamples = 1000,
                                    std::uint64_t bootstrap_seed = 0);

// ---- persistence ----

extern const char* const kRecordsHeader;
extern const std::vector<std::string> kAggregateKeys;

void write_records_csv(const std::string& path, const std::vector<ReplicationRecord>& records);
std::string format_record_csv_line(const ReplicationRecord& r);
// Missing file yields an empty list.
std::vector<ReplicationRecord> read_records_csv(const std::string& path);

std::string aggregate_to_json(const std::vector<AggregateRow>& rows);
std::vector<AggregateRow> aggregate_from_json(const std::string& text);
void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows);

// Writes records.csv, aggregate.csv, aggregate.json and plot_data.csv
// (epoch vs rms_bias / avg_rmse per estimator) under out_dir.
void emit_outputs(const std::vector<AggregateRow>& rows,
                  const std::vector<ReplicationRecord>& records, const std::string& out_dir);

std::string format_report(const std::vector<AggregateRow>& rows);

}  // namespace dmlshift
