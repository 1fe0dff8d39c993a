#include "dmlshift/debias.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "dmlshift/errors.h"
#include "dmlshift/moments.h"
#include "dmlshift/stats.h"
#include "numfmt.h"

namespace dmlshift {

namespace {

void check_training(const Dataset& x, const Vector& y, const Dictionary& dict) {
  if (x.rows() != y.size()) {
    throw ShapeError("training x has " + std::to_string(x.rows()) + " rows but y has length " +
                     std::to_string(y.size()));
  }
  if (x.rows() == 0) throw EmptySampleError("training sample is empty");
  if (x.cols() != dict.input_dim()) {
    throw ShapeError("training x has " + std::to_string(x.cols()) +
                     " columns, dictionary expects " + std::to_string(dict.input_dim()));
  }
}

Dataset take_rows(const Dataset& data, std::span<const Index> rows) {
  Dataset out(static_cast<Index>(rows.size()), data.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = data.row(rows[k]);
  return out;
}

Vector take(const Vector& v, std::span<const Index> rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out(static_cast<Index>(k)) = v(rows[k]);
  return out;
}

FoldComponents single_sample_components(const LinearFunctional& func, const Dictionary& dict,
                                        const Dataset& x_eval, const Vector& y_eval,
                                        const Dataset& field, const RegressionLearner& gamma,
                                        const Vector& rho) {
  FoldComponents comp;
  comp.m_values = func.apply_learner(field, gamma);
  comp.residuals = y_eval - gamma.predict_batch(x_eval);
  comp.alpha_hat = dict.expand_matrix(x_eval) * rho;
  return comp;
}

// Replaces the correction with an algebraically equal alternative route
// while keeping theta_hat = plug_in + correction exact.
void override_correction(DebiasResult& result, double correction) {
  result.correction = correction;
  result.theta_hat = result.plug_in + correction;
  const double half = result.ci_high - result.ci_low;
  result.ci_low = result.theta_hat - 0.5 * half;
  result.ci_high = result.theta_hat + 0.5 * half;
  if (result.per_fold.size() == 1) {
    result.per_fold[0].correction = correction;
    result.per_fold[0].theta = result.per_fold[0].plug_in + correction;
  }
}

}  // namespace

void TrimSpec::validate() const {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw ConfigError("TrimSpec: value must be a positive finite number");
  }
}

double TrimSpec::tau_bar(Index n_field) const {
  validate();
  if (rule == Rule::Fixed) return value;
  return value * std::pow(static_cast<double>(std::max<Index>(n_field, 1)), 0.25);
}

double trim(double a, double tau_bar) {
  if (std::abs(a) < tau_bar) return a;
  return a < 0.0 ? -tau_bar : tau_bar;
}

FoldPlan FoldPlan::make(Index num_rows, int num_folds, std::uint64_t seed) {
  if (num_folds < 1) throw ConfigError("FoldPlan: num_folds must be >= 1");
  if (num_rows < num_folds) {
    throw FoldSizeError("FoldPlan: " + std::to_string(num_rows) + " rows cannot fill " +
                        std::to_string(num_folds) + " folds");
  }
  std::vector<Index> perm(static_cast<std::size_t>(num_rows));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  FoldPlan plan;
  plan.num_folds_ = num_folds;
  plan.seed_ = seed;
  plan.assignments_.resize(static_cast<std::size_t>(num_rows));
  for (Index k = 0; k < num_rows; ++k) {
    plan.assignments_[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])] =
        static_cast<int>(k % num_folds);
  }
  return plan;
}

FoldPlan FoldPlan::from_assignments(std::vector<int> assignments, int num_folds) {
  if (num_folds < 1) throw ConfigError("FoldPlan: num_folds must be >= 1");
  std::vector<Index> counts(static_cast<std::size_t>(num_folds), 0);
  for (int a : assignments) {
    if (a < 0 || a >= num_folds) throw ConfigError("FoldPlan: assignment out of range");
    ++counts[static_cast<std::size_t>(a)];
  }
  for (Index c : counts) {
    if (c == 0) throw FoldSizeError("FoldPlan: every fold needs at least one row");
  }
  FoldPlan plan;
  plan.num_folds_ = num_folds;
  plan.assignments_ = std::move(assignments);
  return plan;
}

std::vector<Index> FoldPlan::fold_rows(int fold) const {
  std::vector<Index> rows;
  for (std::size_t i = 0; i < assignments_.size(); ++i) {
    if (assignments_[i] == fold) rows.push_back(static_cast<Index>(i));
  }
  return rows;
}

std::vector<Index> FoldPlan::complement_rows(int fold) const {
  std::vector<Index> rows;
  for (std::size_t i = 0; i < assignments_.size(); ++i) {
    if (assignments_[i] != fold) rows.push_back(static_cast<Index>(i));
  }
  return rows;
}

Index FoldPlan::fold_size(int fold) const {
  return static_cast<Index>(std::count(assignments_.begin(), assignments_.end(), fold));
}

std::string DebiasResult::to_json() const {
  using detail::json_number;
  std::string s = "{";
  auto field = [&](const char* key, const std::string& value) {
    if (s.size() > 1) s += ',';
    s += '"';
    s += key;
    s += "\":";
    s += value;
  };
  field("theta_hat", json_number(theta_hat));
  field("plug_in", json_number(plug_in));
  field("correction", json_number(correction));
  field("v_hat", json_number(v_hat));
  field("v_hat_printed", json_number(v_hat_printed));
  field("std_error", json_number(std_error));
  field("ci_low", json_number(ci_low));
  field("ci_high", json_number(ci_high));
  field("level", json_number(level));
  field("xi_hat", json_number(xi_hat));
  field("tau_bar", json_number(tau_bar));
  field("n_field", std::to_string(n_field));
  field("n_train", std::to_string(n_train));
  std::string folds = "[";
  for (std::size_t l = 0; l < per_fold.size(); ++l) {
    const auto& f = per_fold[l];
    if (l > 0) folds += ',';
    folds += "{\"theta\":" + json_number(f.theta) + ",\"plug_in\":" + json_number(f.plug_in) +
             ",\"correction\":" + json_number(f.correction) + ",\"v\":" + json_number(f.v) +
             ",\"s2_m\":" + json_number(f.s2_m) + ",\"s2_alpha\":" + json_number(f.s2_alpha) +
             ",\"fold_size\":" + std::to_string(f.fold_size) + "}";
  }
  folds += "]";
  field("per_fold", folds);
  s += '}';
  return s;
}

DebiasResult variance_and_ci(std::span<const FoldComponents> folds, const TrimSpec& trim_spec,
                             const DebiasOptions& opts) {
  if (!(opts.level > 0.0 && opts.level < 1.0)) {
    throw ConfigError("variance_and_ci: level must lie in (0, 1)");
  }
  if (folds.empty()) throw EmptySampleError("variance_and_ci: no folds");
  const Index n_field = folds.front().m_values.size();
  if (n_field == 0) throw EmptySampleError("variance_and_ci: empty field sample");

  Index n_train = 0;
  for (const auto& f : folds) {
    if (f.m_values.size() != n_field) {
      throw ShapeError("variance_and_ci: folds disagree on the field sample size");
    }
    if (f.alpha_hat.size() != f.residuals.size()) {
      throw ShapeError("variance_and_ci: alpha and residual lengths differ within a fold");
    }
    if (f.residuals.size() == 0) throw FoldSizeError("variance_and_ci: empty fold");
    n_train += f.residuals.size();
  }

  DebiasResult out;
  out.level = opts.level;
  out.n_field = n_field;
  out.n_train = n_train;
  out.xi_hat = static_cast<double>(n_field) / static_cast<double>(n_train);
  out.tau_bar = trim_spec.tau_bar(n_field);
  const double xi_factor = opts.variance_mode == VarianceMode::XiCorrected ? out.xi_hat : 1.0;

  for (const auto& f : folds) {
    FoldDiagnostics d;
    d.fold_size = f.residuals.size();
    const double nf = static_cast<double>(n_field);
    const double tl = static_cast<double>(d.fold_size);
    d.plug_in = f.m_values.sum() / nf;
    d.correction = f.alpha_hat.dot(f.residuals) / tl;
    d.theta = d.plug_in + d.correction;
    d.s2_m = (f.m_values.array() - d.plug_in).square().sum() / nf;
    double s2a = 0.0;
    for (Index t = 0; t < f.residuals.size(); ++t) {
      const double a = trim(f.alpha_hat(t), out.tau_bar);
      s2a += a * a * f.residuals(t) * f.residuals(t);
    }
    d.s2_alpha = s2a / tl;
    d.v = d.s2_m + xi_factor * d.s2_alpha;

    const double w = tl / static_cast<double>(n_train);
    out.plug_in += w * d.plug_in;
    out.correction += w * d.correction;
    out.v_hat += w * d.v;
    out.v_hat_printed += w * (d.s2_m + d.s2_alpha);
    out.per_fold.push_back(d);
  }
  out.theta_hat = out.plug_in + out.correction;
  out.std_error = std::sqrt(out.v_hat / static_cast<double>(n_field));
  const double z = stats::normal_quantile(1.0 - 0.5 * (1.0 - opts.level));
  out.ci_low = out.theta_hat - z * out.std_error;
  out.ci_high = out.theta_hat + z * out.std_error;
  return out;
}

DebiasResult crossfit_with_learners(const LinearFunctional& func, const DictionarySpec& spec,
                                    const Dataset& x, const Vector& y, const Dataset& field,
                                    const FoldPlan& plan,
                                    std::span<const RegressionLearner* const> learners,
                                    double r_riesz, const TrimSpec& trim_spec,
                                    const DebiasOptions& opts) {
  const Dictionary dict(spec);
  check_training(x, y, dict);
  if (plan.num_rows() != x.rows()) {
    throw ShapeError("crossfit: fold plan covers " + std::to_string(plan.num_rows()) +
                     " rows, training sample has " + std::to_string(x.rows()));
  }
  if (static_cast<int>(learners.size()) != plan.num_folds()) {
    throw ShapeError("crossfit: expected one learner per fold");
  }
  const Vector m_hat = field_moments(func, dict, field);

  std::vector<FoldComponents> comps;
  comps.reserve(static_cast<std::size_t>(plan.num_folds()));
  for (int l = 0; l < plan.num_folds(); ++l) {
    const auto rows = plan.fold_rows(l);
    const auto complement = plan.complement_rows(l);
    if (rows.empty() || complement.empty()) {
      throw FoldSizeError("crossfit: fold " + std::to_string(l) + " or its complement is empty");
    }
    const RegressionLearner& gamma = *learners[static_cast<std::size_t>(l)];
    RieszProblemMoments moments{m_hat, second_moment(dict, x, complement), field.rows(),
                                static_cast<Index>(complement.size())};
    const RieszFit riesz = fit_riesz(moments, r_riesz, opts.riesz_solver);
    const Dataset x_fold = take_rows(x, rows);
    comps.push_back(
        single_sample_components(func, dict, x_fold, take(y, rows), field, gamma, riesz.rho));
  }
  return variance_and_ci(comps, trim_spec, opts);
}

DebiasResult crossfit_estimate(const LinearFunctional& func, const DictionarySpec& spec,
                               const Dataset& x, const Vector& y, const Dataset& field,
                               const FoldPlan& plan, const LearnerFactory& factory,
                               double r_riesz, const TrimSpec& trim_spec,
                               const DebiasOptions& opts) {
  if (plan.num_rows() != x.rows() || x.rows() != y.size()) {
    throw ShapeError("crossfit: fold plan, x and y disagree on the number of rows");
  }
  std::vector<std::unique_ptr<RegressionLearner>> owned;
  std::vector<const RegressionLearner*> learners;
  for (int l = 0; l < plan.num_folds(); ++l) {
    const auto complement = plan.complement_rows(l);
    if (complement.empty()) {
      throw FoldSizeError("crossfit: complement of fold " + std::to_string(l) + " is empty");
    }
    owned.push_back(factory(take_rows(x, complement), take(y, complement), l));
    if (!owned.back()) throw ConfigError("crossfit: learner factory returned null");
    learners.push_back(owned.back().get());
  }
  return crossfit_with_learners(func, spec, x, y, field, plan, learners, r_riesz, trim_spec, opts);
}

TrainingSummaries training_summaries(const DictionarySpec& spec, const Dataset& x,
                                     const Vector& y, const Vector& gamma_hat) {
  const Dictionary dict(spec);
  check_training(x, y, dict);
  if (gamma_hat.size() != y.size()) {
    throw ShapeError("training_summaries: gamma_hat has length " +
                     std::to_string(gamma_hat.size()) + ", expected " + std::to_string(y.size()));
  }
  SecondMomentAccumulator acc(dict.output_dim());
  Vector b(dict.output_dim());
  std::span<double> bspan{b.data(), static_cast<std::size_t>(b.size())};
  for (Index t = 0; t < x.rows(); ++t) {
    dict.expand_into(row_span(x, t), bspan);
    acc.add(bspan, y(t) - gamma_hat(t));
  }
  return {acc.second_moment(), acc.cross_moment(), x.rows()};
}

SummaryEstimate estimate_from_summaries(const LinearFunctional& func, const DictionarySpec& spec,
                                        const TrainingSummaries& summaries,
                                        const RegressionLearner& gamma, const Dataset& field,
                                        double r_riesz, const SolverOptions& riesz_solver) {
  const Dictionary dict(spec);
  RieszProblemMoments moments{field_moments(func, dict, field), summaries.q_hat, field.rows(),
                              summaries.n_train};
  SummaryEstimate out;
  out.riesz = fit_riesz(moments, r_riesz, riesz_solver);
  out.plug_in = func.apply_learner(field, gamma).sum() / static_cast<double>(field.rows());
  out.correction = out.riesz.rho.dot(summaries.residual_crossprod);
  out.theta_hat = out.plug_in + out.correction;
  return out;
}

DebiasResult nocrossfit_estimate(const LinearFunctional& func, const DictionarySpec& spec,
                                 const Dataset& x, const Vector& y, const Dataset& field,
                                 const RegressionLearner& gamma, double r_riesz,
                                 const TrimSpec& trim_spec, const DebiasOptions& opts) {
  const Dictionary dict(spec);
  check_training(x, y, dict);
  const Vector gamma_hat = gamma.predict_batch(x);
  const TrainingSummaries summaries = training_summaries(spec, x, y, gamma_hat);
  const SummaryEstimate point =
      estimate_from_summaries(func, spec, summaries, gamma, field, r_riesz, opts.riesz_solver);

  FoldComponents comp;
  comp.m_values = func.apply_learner(field, gamma);
  comp.residuals = y - gamma_hat;
  comp.alpha_hat = dict.expand_matrix(x) * point.riesz.rho;
  const FoldComponents comps[] = {std::move(comp)};
  DebiasResult result = variance_and_ci(comps, trim_spec, opts);
  override_correction(result, point.correction);
  return result;
}

DebiasResult nocrossfit_estimate(const LinearFunctional& func, const DictionarySpec& spec,
                                 const Dataset& x, const Vector& y, const Dataset& field,
                                 double r_gamma, double r_riesz, const TrimSpec& trim_spec,
                                 const DebiasOptions& opts, const LassoLearnerOptions& lasso) {
  const LassoLearner gamma = fit_lasso_learner(spec, x, y, r_gamma, lasso);
  return nocrossfit_estimate(func, spec, x, y, field, gamma, r_riesz, trim_spec, opts);
}

DebiasResult sample_split_estimate(const LinearFunctional& func, const DictionarySpec& spec,
                                   const Dataset& q_train, const Dataset& x_eval,
                                   const Vector& y_eval, const Dataset& field,
                                   const RegressionLearner& gamma, double r_riesz,
                                   const TrimSpec& trim_spec, const DebiasOptions& opts) {
  const Dictionary dict(spec);
  check_training(x_eval, y_eval, dict);
  RieszProblemMoments moments = compute_moments(func, spec, field, q_train);
  const RieszFit riesz = fit_riesz(moments, r_riesz, opts.riesz_solver);
  const FoldComponents comps[] = {
      single_sample_components(func, dict, x_eval, y_eval, field, gamma, riesz.rho)};
  return variance_and_ci(comps, trim_spec, opts);
}

DebiasResult pseudo_inverse_estimate(const LinearFunctional& func, const DictionarySpec& spec,
                                     const Dataset& x, const Vector& y, const Dataset& field,
                                     const RegressionLearner& gamma, const TrimSpec& trim_spec,
                                     const DebiasOptions& opts, double rank_tol) {
  const Dictionary dict(spec);
  check_training(x, y, dict);
  const DesignMatrix design = dict.expand_matrix(x);
  const Vector gamma_hat = gamma.predict_batch(x);
  const Vector m_hat = field_moments(func, dict, field);
  const Vector phi = pseudo_inverse_debias_coefficients(design, y, gamma_hat, rank_tol);
  const Vector rho = pseudo_inverse_riesz_coefficients(design, m_hat, rank_tol);

  FoldComponents comp;
  comp.m_values = func.apply_learner(field, gamma);
  comp.residuals = y - gamma_hat;
  comp.alpha_hat = design * rho;
  const FoldComponents comps[] = {std::move(comp)};
  DebiasResult result = variance_and_ci(comps, trim_spec, opts);
  override_correction(result, m_hat.dot(phi));
  return result;
}

}  // namespace dmlshift
