#include "dmlshift/harness.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <thread>
#include <tuple>

#include "dmlshift/errors.h"
#include "dmlshift/random.h"
#include "dmlshift/riesz.h"
#include "dmlshift/stats.h"

namespace dmlshift {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

using RecordKey = std::tuple<int, int, int, std::string>;

RecordKey key_of(const ReplicationRecord& r) {
  return {r.spec_id, r.rep_id, r.epoch, r.estimator};
}

struct SpecContext {
  SimSpec spec;
  OracleTheta truth;
};

template <class Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  const int workers = std::min(threads, count);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

ReplicationRecord failed_record(int spec_id, int rep_id, int epoch, EstimatorKind kind,
                                const OracleTheta& truth) {
  ReplicationRecord r;
  r.spec_id = spec_id;
  r.rep_id = rep_id;
  r.epoch = epoch;
  r.estimator = estimator_name(kind);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.theta_hat = r.plug_in = r.correction = r.v_hat = r.ci_low = r.ci_high = nan;
  r.truth_theta = truth.value;
  r.truth_mc_se = truth.mc_se;
  r.failed = true;
  return r;
}

DebiasResult plug_in_result(const LinearFunctional& func, const Dataset& field,
                            const RegressionLearner& gamma, double level) {
  const Vector m = func.apply_learner(field, gamma);
  DebiasResult out;
  const double n = static_cast<double>(m.size());
  out.plug_in = m.sum() / n;
  out.theta_hat = out.plug_in;
  out.v_hat = (m.array() - out.plug_in).square().sum() / n;
  out.v_hat_printed = out.v_hat;
  out.std_error = std::sqrt(out.v_hat / n);
  const double z = stats::normal_quantile(1.0 - 0.5 * (1.0 - level));
  out.ci_low = out.theta_hat - z * out.std_error;
  out.ci_high = out.theta_hat + z * out.std_error;
  out.level = level;
  out.n_field = m.size();
  return out;
}

class ReplicationRunner {
 public:
  ReplicationRunner(const ExperimentConfig& cfg, int spec_id, int rep_id, const SpecContext& ctx,
                    const std::set<RecordKey>& done)
      : cfg_(cfg), spec_id_(spec_id), rep_id_(rep_id), ctx_(ctx), done_(done) {}

  std::vector<ReplicationRecord> run() {
    const std::vector<int> epochs =
        cfg_.learner == LearnerKind::Mlp ? cfg_.epoch_grid : std::vector<int>{0};
    bool pending = false;
    for (int e : epochs) {
      for (auto kind : cfg_.estimators) pending |= !is_done(e, kind);
    }
    if (!pending) return {};

    const std::uint64_t rep_seed =
        derive_seed(cfg_.master_seed, StreamRole::Replication,
                    static_cast<std::uint64_t>(spec_id_), static_cast<std::uint64_t>(rep_id_));
    SampleSizes sizes{cfg_.n_train, cfg_.n_validate > 0 ? cfg_.n_validate : cfg_.n_train,
                      cfg_.n_field};
    sample_ = draw_sample(ctx_.spec, sizes, rep_seed, ctx_.truth);
    dict_spec_ = DictionarySpec{ctx_.spec.dim, cfg_.dictionary_order, true};
    const Index num_terms = dict_spec_.output_dim();
    r_riesz_ = cfg_.riesz_penalty ? *cfg_.riesz_penalty
                                  : default_penalty(num_terms, cfg_.n_field, cfg_.riesz_c);
    if (needs(EstimatorKind::CrossFit)) {
      plan_ = FoldPlan::make(sample_.x_train.rows(), cfg_.num_folds,
                             derive_seed(cfg_.master_seed, StreamRole::Folds,
                                         static_cast<std::uint64_t>(spec_id_),
                                         static_cast<std::uint64_t>(rep_id_)));
    }
    if (cfg_.learner == LearnerKind::Mlp) {
      run_mlp();
    } else {
      run_lasso();
    }
    return std::move(out_);
  }

 private:
  bool is_done(int epoch, EstimatorKind kind) const {
    return done_.count({spec_id_, rep_id_, epoch, estimator_name(kind)}) > 0;
  }

  bool needs(EstimatorKind kind) const {
    return std::find(cfg_.estimators.begin(), cfg_.estimators.end(), kind) != cfg_.estimators.end();
  }

  Dataset rows_of(const Dataset& data, const std::vector<Index>& rows) const {
    Dataset out(static_cast<Index>(rows.size()), data.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = data.row(rows[k]);
    return out;
  }

  Vector rows_of(const Vector& v, const std::vector<Index>& rows) const {
    Vector out(static_cast<Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) out(static_cast<Index>(k)) = v(rows[k]);
    return out;
  }

  void emit(int epoch, const RegressionLearner& gamma,
            const std::vector<const RegressionLearner*>& fold_learners, Clock::time_point start) {
    const MeanOutcome func(ctx_.spec.dim);
    const DebiasOptions opts{cfg_.level, cfg_.variance_mode, {}};
    const double train_ms = elapsed_ms(start);
    for (auto kind : cfg_.estimators) {
      if (is_done(epoch, kind)) continue;
      const auto t0 = Clock::now();
      ReplicationRecord rec = failed_record(spec_id_, rep_id_, epoch, kind, ctx_.truth);
      try {
        DebiasResult res;
        switch (kind) {
          case EstimatorKind::PlugIn:
            res = plug_in_result(func, sample_.z_field, gamma, cfg_.level);
            break;
          case EstimatorKind::CrossFit:
            res = crossfit_with_learners(func, dict_spec_, sample_.x_train, sample_.y_train,
                                         sample_.z_field, plan_, fold_learners, r_riesz_,
                                         cfg_.trim, opts);
            break;
          case EstimatorKind::NoCrossFit:
            res = nocrossfit_estimate(func, dict_spec_, sample_.x_train, sample_.y_train,
                                      sample_.z_field, gamma, r_riesz_, cfg_.trim, opts);
            break;
          case EstimatorKind::SampleSplit:
            res = sample_split_estimate(func, dict_spec_, sample_.x_train, sample_.v_validate,
                                        sample_.y_validate, sample_.z_field, gamma, r_riesz_,
                                        cfg_.trim, opts);
            break;
          case EstimatorKind::PseudoInverse:
            res = pseudo_inverse_estimate(func, dict_spec_, sample_.x_train, sample_.y_train,
                                          sample_.z_field, gamma, cfg_.trim, opts);
            break;
        }
        if (std::isfinite(res.theta_hat)) {
          rec.theta_hat = res.theta_hat;
          rec.plug_in = res.plug_in;
          rec.correction = res.correction;
          rec.v_hat = res.v_hat;
          rec.ci_low = res.ci_low;
          rec.ci_high = res.ci_high;
          rec.failed = false;
        }
      } catch (const Error&) {
        // Recorded as failed; the sweep continues.
      }
      rec.wall_time_ms = train_ms + elapsed_ms(t0);
      out_.push_back(std::move(rec));
    }
  }

  void emit_failed(int epoch) {
    for (auto kind : cfg_.estimators) {
      if (!is_done(epoch, kind)) out_.push_back(failed_record(spec_id_, rep_id_, epoch, kind, ctx_.truth));
    }
  }

  void run_mlp() {
    MlpConfig net_cfg = cfg_.mlp;
    net_cfg.max_epochs = std::max(net_cfg.max_epochs, cfg_.epoch_grid.back());
    const std::uint64_t learner_seed =
        derive_seed(cfg_.master_seed ^ cfg_.mlp.seed, StreamRole::Learner,
                    static_cast<std::uint64_t>(spec_id_), static_cast<std::uint64_t>(rep_id_));
    net_cfg.seed = learner_seed;
    if (sample_.x_train.rows() < net_cfg.batch_size) {
      throw FoldSizeError("training sample smaller than the MLP batch size");
    }
    MlpLearner net(net_cfg, ctx_.spec.dim);

    std::vector<MlpLearner> fold_nets;
    std::vector<Dataset> fold_x;
    std::vector<Vector> fold_y;
    if (needs(EstimatorKind::CrossFit)) {
      for (int l = 0; l < plan_.num_folds(); ++l) {
        const auto complement = plan_.complement_rows(l);
        if (static_cast<Index>(complement.size()) < net_cfg.batch_size) {
          throw FoldSizeError("fold complement smaller than the MLP batch size");
        }
        fold_x.push_back(rows_of(sample_.x_train, complement));
        fold_y.push_back(rows_of(sample_.y_train, complement));
        MlpConfig fold_cfg = net_cfg;
        fold_cfg.seed = derive_seed(learner_seed, StreamRole::Learner, static_cast<std::uint64_t>(l + 1));
        fold_nets.emplace_back(fold_cfg, ctx_.spec.dim);
      }
    }

    int trained = 0;
    bool diverged = false;
    for (int epoch : cfg_.epoch_grid) {
      const auto start = Clock::now();
      if (!diverged) {
        try {
          net.train(sample_.x_train, sample_.y_train, epoch - trained);
          for (std::size_t l = 0; l < fold_nets.size(); ++l) {
            fold_nets[l].train(fold_x[l], fold_y[l], epoch - trained);
          }
        } catch (const TrainingDivergenceError&) {
          diverged = true;
        }
      }
      trained = epoch;
      if (diverged) {
        emit_failed(epoch);
        continue;
      }
      std::vector<const RegressionLearner*> ptrs;
      for (const auto& f : fold_nets) ptrs.push_back(&f);
      emit(epoch, net, ptrs, start);
    }
  }

  void run_lasso() {
    const auto start = Clock::now();
    const Index num_terms = dict_spec_.output_dim();
    LassoLearnerOptions lasso_opts;
    lasso_opts.penalize_intercept = cfg_.lasso_penalize_intercept;
    const double r_gamma = default_penalty(num_terms, cfg_.n_train, cfg_.lasso_c);
    const LassoLearner gamma =
        fit_lasso_learner(dict_spec_, sample_.x_train, sample_.y_train, r_gamma, lasso_opts);
    std::vector<LassoLearner> fold_fits;
    if (needs(EstimatorKind::CrossFit)) {
      for (int l = 0; l < plan_.num_folds(); ++l) {
        const auto complement = plan_.complement_rows(l);
        fold_fits.push_back(fit_lasso_learner(dict_spec_, rows_of(sample_.x_train, complement),
                                              rows_of(sample_.y_train, complement), r_gamma,
                                              lasso_opts));
      }
    }
    std::vector<const RegressionLearner*> ptrs;
    for (const auto& f : fold_fits) ptrs.push_back(&f);
    emit(0, gamma, ptrs, start);
  }

  const ExperimentConfig& cfg_;
  int spec_id_;
  int rep_id_;
  const SpecContext& ctx_;
  const std::set<RecordKey>& done_;

  SimSample sample_;
  DictionarySpec dict_spec_;
  double r_riesz_ = 0.0;
  FoldPlan plan_;
  std::vector<ReplicationRecord> out_;
};

}  // namespace

std::string estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::PlugIn: return "plug_in";
    case EstimatorKind::CrossFit: return "crossfit";
    case EstimatorKind::NoCrossFit: return "nocrossfit";
    case EstimatorKind::SampleSplit: return "sample_split";
    case EstimatorKind::PseudoInverse: return "pinv";
  }
  return "unknown";
}

EstimatorKind parse_estimator(const std::string& name) {
  for (auto kind : {EstimatorKind::PlugIn, EstimatorKind::CrossFit, EstimatorKind::NoCrossFit,
                    EstimatorKind::SampleSplit, EstimatorKind::PseudoInverse}) {
    if (estimator_name(kind) == name) return kind;
  }
  throw ConfigError("unknown estimator '" + name + "'");
}

bool same_key(const ReplicationRecord& a, const ReplicationRecord& b) {
  return key_of(a) == key_of(b);
}

bool key_less(const ReplicationRecord& a, const ReplicationRecord& b) {
  return key_of(a) < key_of(b);
}

std::vector<ReplicationRecord> run_experiment(const ExperimentConfig& cfg,
                                              const std::vector<ReplicationRecord>& existing,
                                              const RecordSink& sink) {
  cfg.validate();
  std::set<RecordKey> done;
  for (const auto& r : existing) done.insert(key_of(r));

  std::vector<SpecContext> contexts(static_cast<std::size_t>(cfg.num_specs));
  parallel_for(cfg.num_specs, cfg.threads, [&](int s) {
    auto& ctx = contexts[static_cast<std::size_t>(s)];
    ctx.spec = random_spec(derive_seed(cfg.master_seed, StreamRole::Spec, static_cast<std::uint64_t>(s)),
                           cfg.sim);
    Rng oracle = make_stream(cfg.master_seed, StreamRole::Oracle, static_cast<std::uint64_t>(s));
    ctx.truth = oracle_theta(ctx.spec, cfg.oracle_n, oracle);
  });

  const int jobs = cfg.num_specs * cfg.reps_per_spec;
  std::vector<std::vector<ReplicationRecord>> produced(static_cast<std::size_t>(jobs));
  std::mutex sink_mutex;
  parallel_for(jobs, cfg.threads, [&](int job) {
    const int s = job / cfg.reps_per_spec;
    const int r = job % cfg.reps_per_spec;
    ReplicationRunner runner(cfg, s, r, contexts[static_cast<std::size_t>(s)], done);
    auto records = runner.run();
    if (sink) {
      std::lock_guard<std::mutex> lock(sink_mutex);
      for (const auto& rec : records) sink(rec);
    }
    produced[static_cast<std::size_t>(job)] = std::move(records);
  });

  std::vector<ReplicationRecord> all = existing;
  for (auto& batch : produced) {
    all.insert(all.end(), std::make_move_iterator(batch.begin()), std::make_move_iterator(batch.end()));
  }
  std::stable_sort(all.begin(), all.end(), key_less);
  all.erase(std::unique(all.begin(), all.end(), same_key), all.end());
  return all;
}

std::vector<AggregateRow> aggregate(const std::vector<ReplicationRecord>& records,
                                    int bootstrap_resamples, std::uint64_t bootstrap_seed) {
  if (bootstrap_resamples < 0) throw ConfigError("aggregate: bootstrap_resamples must be >= 0");
  using GroupKey = std::pair<std::string, int>;
  std::map<GroupKey, std::vector<const ReplicationRecord*>> groups;
  for (const auto& r : records) groups[{r.estimator, r.epoch}].push_back(&r);

  std::vector<AggregateRow> rows;
  std::uint64_t group_index = 0;
  for (auto& [key, members] : groups) {
    std::sort(members.begin(), members.end(),
              [](const ReplicationRecord* a, const ReplicationRecord* b) { return key_less(*a, *b); });
    AggregateRow row;
    row.estimator = key.first;
    row.epoch = key.second;
    std::map<int, std::vector<double>> errors_by_spec;
    Index covered = 0;
    for (const auto* r : members) {
      if (r->failed || !std::isfinite(r->theta_hat)) {
        ++row.n_failed;
        continue;
      }
      errors_by_spec[r->spec_id].push_back(r->theta_hat - r->truth_theta);
      if (r->ci_low <= r->truth_theta && r->truth_theta <= r->ci_high) ++covered;
      ++row.n_records;
    }
    if (row.n_records == 0) {
      throw AggregationError("aggregate: group (estimator=" + key.first +
                             ", epoch=" + std::to_string(key.second) + ") has no usable records");
    }
    std::vector<double> bias, rmse;
    for (const auto& [spec, errs] : errors_by_spec) {
      double sum = 0.0, sq = 0.0;
      for (double e : errs) {
        sum += e;
        sq += e * e;
      }
      const double n = static_cast<double>(errs.size());
      bias.push_back(sum / n);
      rmse.push_back(std::sqrt(sq / n));
    }
    auto rms = [](const std::vector<double>& v, const std::vector<std::size_t>& idx) {
      double s = 0.0;
      for (std::size_t i : idx) s += v[i] * v[i];
      return std::sqrt(s / static_cast<double>(idx.size()));
    };
    auto avg = [](const std::vector<double>& v, const std::vector<std::size_t>& idx) {
      double s = 0.0;
      for (std::size_t i : idx) s += v[i];
      return s / static_cast<double>(idx.size());
    };
    const std::size_t num_specs = bias.size();
    std::vector<std::size_t> identity(num_specs);
    for (std::size_t i = 0; i < num_specs; ++i) identity[i] = i;
    row.n_specs = static_cast<Index>(num_specs);
    row.rms_bias = rms(bias, identity);
    row.avg_rmse = avg(rmse, identity);
    row.coverage_rate = static_cast<double>(covered) / static_cast<double>(row.n_records);

    if (bootstrap_resamples > 1 && num_specs > 1) {
      Rng rng = make_stream(bootstrap_seed, StreamRole::Bootstrap, group_index);
      std::uniform_int_distribution<std::size_t> pick(0, num_specs - 1);
      std::vector<double> boot_bias, boot_rmse;
      std::vector<std::size_t> idx(num_specs);
      for (int b = 0; b < bootstrap_resamples; ++b) {
        for (auto& i : idx) i = pick(rng);
        boot_bias.push_back(rms(bias, idx));
        boot_rmse.push_back(avg(rmse, idx));
      }
      row.rms_bias_se = std::sqrt(stats::sample_variance(boot_bias));
      row.avg_rmse_se = std::sqrt(stats::sample_variance(boot_rmse));
    }
    rows.push_back(std::move(row));
    ++group_index;
  }
  return rows;
}

}  // namespace dmlshift
