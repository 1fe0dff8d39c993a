// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dmlshift/debias.h"
#include "dmlshift/errors.h"
#include "dmlshift/featmap.h"
#include "dmlshift/harness.h"
#include "dmlshift/learners.h"
#include "dmlshift/moments.h"
#include "dmlshift/riesz.h"
#include "dmlshift/simgen.h"
#include "dmlshift/solvers.h"
#include "dmlshift/stats.h"

using namespace dmlshift;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

template <class... Args>
std::string fmtn(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Dataset normal_data(Index n, const Vector& mean, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Dataset x(n, mean.size());
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < mean.size(); ++k) x(i, k) = mean(k) + nd(rng);
  }
  return x;
}

Matrix random_spd(Index j, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix a(j + 3, j);
  for (Index r = 0; r < a.rows(); ++r) {
    for (Index c = 0; c < j; ++c) a(r, c) = nd(rng);
  }
  return a.transpose() * a / static_cast<double>(a.rows()) + 0.05 * Matrix::Identity(j, j);
}

// Independent subgradient check for -2M'b + b'Qb + 2r|b|_1.
double independent_kkt(const Vector& m, const Matrix& q, const Vector& b, double r) {
  const Vector g = m - q * b;
  double worst = 0.0;
  for (Index j = 0; j < b.size(); ++j) {
    const double v = b(j) != 0.0 ? std::abs(g(j) - r * (b(j) > 0 ? 1.0 : -1.0))
                                 : std::max(0.0, std::abs(g(j)) - r);
    worst = std::max(worst, v);
  }
  return worst;
}

// ---- 1 ----------------------------------------------------------------
Outcome solver_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> dim(1, 10);
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst = 0.0;
  for (int p = 0; p < 50; ++p) {
    const Index j = dim(rng);
    // Penalized quadratic with r = 0: Q rho = M.
    const Matrix q = random_spd(j, rng);
    Vector m(j);
    for (Index k = 0; k < j; ++k) m(k) = nd(rng);
    const Vector dense = q.fullPivLu().solve(m);
    const LassoFit fit = penalized_quadratic(PenalizedQuadraticProblem(m, q, 0.0));
    worst = std::max(worst, (fit.coefficients - dense).cwiseAbs().maxCoeff());

    // Least squares with r = 0 against a QR solve of the raw design.
    const Index n = 40 + 5 * j;
    DesignMatrix b(n, j);
    Vector y(n);
    for (Index i = 0; i < n; ++i) {
      for (Index k = 0; k < j; ++k) b(i, k) = nd(rng);
      y(i) = nd(rng);
    }
    const Matrix bm = b;
    const Vector ols = bm.colPivHouseholderQr().solve(y);
    const LassoFit lfit = lasso_regression(b, y, 0.0);
    worst = std::max(worst, (lfit.coefficients - ols).cwiseAbs().maxCoeff());
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst <= 1e-8 && secs < 5.0,
          fmtn("max abs error %.3g over 100 fits, %.2f s", worst, secs)};
}

// ---- 2 ----------------------------------------------------------------
Outcome kkt_certification() {
  std::mt19937_64 rng(202);
  std::normal_distribution<double> nd(0.0, 1.0);
  const DictionarySpec spec{6, 2, true};
  const Index j = spec.output_dim();
  const Index n = 500;
  const double base = default_penalty(j, n);
  const std::vector<double> grid{0.1 * base, 0.3 * base, base, 3.0 * base, 10.0 * base};
  double worst = 0.0;
  int converged = 0, total = 0;
  for (int p = 0; p < 50; ++p) {
    const Dataset x = normal_data(n, Vector::Zero(6), rng);
    const DesignMatrix b = expand_matrix(spec, x);
    Vector coef(j);
    for (Index k = 0; k < j; ++k) coef(k) = nd(rng) * (k % 3 == 0 ? 1.0 : 0.1);
    const Vector y = b * coef + Vector::NullaryExpr(n, [&] { return nd(rng); });
    const double r = grid[static_cast<std::size_t>(p % 5)];
    const LassoFit fit = lasso_regression(b, y, r);
    ++total;
    if (!fit.converged) continue;
    ++converged;
    const Matrix q = b.transpose() * b / static_cast<double>(n);
    const Vector m = b.transpose() * y / static_cast<double>(n);
    worst = std::max(worst, independent_kkt(m, q, fit.coefficients, r));
  }
  return {converged == total && worst <= 1e-6,
          fmtn("%d/%d converged, max KKT violation %.3g", converged, total, worst)};
}

// ---- 3 ----------------------------------------------------------------
Outcome riesz_no_shift() {
  const auto t0 = std::chrono::steady_clock::now();
  const DictionarySpec spec{6, 2, true};
  const Index n = 20000;
  const MeanOutcome func(6);
  const double r = default_penalty(spec.output_dim(), n, kRieszPenaltyC);
  int good = 0;
  double worst = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(3000 + seed);
    const Dataset train = normal_data(n, Vector::Zero(6), rng);
    const Dataset field = normal_data(n, Vector::Zero(6), rng);
    const Dataset probe = normal_data(100, Vector::Zero(6), rng);
    const RieszFit fit = fit_riesz(compute_moments(func, spec, field, train), r);
    const Dictionary dict(spec);
    const Vector alpha = evaluate_alpha_batch(fit, dict, probe);
    const double sup = (alpha.array() - 1.0).abs().maxCoeff();
    worst = std::max(worst, sup);
    if (sup <= 0.1) ++good;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {good >= 18 && secs < 120.0,
          fmtn("%d/20 seeds with sup|alpha-1| <= 0.1 (worst %.4f), %.1f s", good, worst, secs)};
}

// ---- 4 ----------------------------------------------------------------
// gamma_0(x) = 1 + x1 - 0.5 x2 + 0.3 x1 x2, X ~ N(0, I), Z ~ N(mu, I).
double gamma0_c4(std::span<const double> x) { return 1.0 + x[0] - 0.5 * x[1] + 0.3 * x[0] * x[1]; }

Outcome double_robustness() {
  const auto t0 = std::chrono::steady_clock::now();
  const DictionarySpec spec{2, 2, true};
  const MeanOutcome func(2);
  Vector mu(2);
  mu << 0.4, -0.3;
  const double theta0 = 1.0 + mu(0) - 0.5 * mu(1) + 0.3 * mu(0) * mu(1);
  const double delta = 0.5;
  const Index n = 2000;
  const int reps = 200;
  std::vector<double> deb_err, plug_err;
  const FunctionLearner biased(2, [&](std::span<const double> x) { return gamma0_c4(x) + delta; });
  const std::vector<const RegressionLearner*> learners(5, &biased);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int rep = 0; rep < reps; ++rep) {
    std::mt19937_64 rng(4000 + rep);
    const Dataset x = normal_data(n, Vector::Zero(2), rng);
    Vector y(n);
    for (Index i = 0; i < n; ++i) y(i) = gamma0_c4(row_span(x, i)) + nd(rng);
    const Dataset z = normal_data(n, mu, rng);
    const FoldPlan plan = FoldPlan::make(n, 5, 9000 + rep);
    const DebiasResult res = crossfit_with_learners(func, spec, x, y, z, plan, learners, 1e-8,
                                                    TrimSpec::growth());
    deb_err.push_back(res.theta_hat - theta0);
    plug_err.push_back(res.plug_in - theta0);
  }
  const double deb_bias = stats::mean(deb_err);
  const double deb_se = std::sqrt(stats::sample_variance(deb_err) / reps);
  const double plug_bias = stats::mean(plug_err);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool pass = std::abs(deb_bias) <= 3.0 * deb_se &&
                    std::abs(plug_bias - delta) <= 0.1 * delta && secs < 300.0;
  return {pass, fmtn("debiased bias %.4g (MC se %.4g), plug-in bias %.4g, %.1f s", deb_bias,
                     deb_se, plug_bias, secs)};
}

// ---- 5 ----------------------------------------------------------------
// Linear gamma_0(x) = 0.5 + x1 - 0.8 x2, Lasso on a quadratic dictionary.
Outcome coverage() {
  const auto t0 = std::chrono::steady_clock::now();
  const DictionarySpec spec{2, 2, true};
  const MeanOutcome func(2);
  Vector mu(2);
  mu << 0.5, 0.5;
  auto gamma0 = [](std::span<const double> x) { return 0.5 + x[0] - 0.8 * x[1]; };
  const double theta0 = 0.5 + mu(0) - 0.8 * mu(1);
  const Index n = 2000;
  const int reps = 500;
  const double r_gamma = default_penalty(spec.output_dim(), n);
  const double r_riesz = default_penalty(spec.output_dim(), n, kRieszPenaltyC);
  std::normal_distribution<double> nd(0.0, 1.0);
  int covered = 0;
  std::vector<double> standardized;
  for (int rep = 0; rep < reps; ++rep) {
    std::mt19937_64 rng(5000 + rep);
    const Dataset x = normal_data(n, Vector::Zero(2), rng);
    Vector y(n);
    for (Index i = 0; i < n; ++i) y(i) = gamma0(row_span(x, i)) + nd(rng);
    const Dataset z = normal_data(n, mu, rng);
    const FoldPlan plan = FoldPlan::make(n, 5, 15000 + rep);
    const LearnerFactory factory = [&](const Dataset& xs, const Vector& ys, int) {
      return std::make_unique<LassoLearner>(fit_lasso_learner(spec, xs, ys, r_gamma));
    };
    const DebiasResult res =
        crossfit_estimate(func, spec, x, y, z, plan, factory, r_riesz, TrimSpec::growth());
    if (res.ci_low <= theta0 && theta0 <= res.ci_high) ++covered;
    standardized.push_back((res.theta_hat - theta0) / res.std_error);
  }
  const double rate = static_cast<double>(covered) / reps;
  const auto ad = stats::anderson_darling_normal(standardized);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool pass = rate >= 0.90 && rate <= 0.98 && ad.p_value > 0.01 && secs < 600.0;
  return {pass, fmtn("coverage %.3f, Anderson-Darling A2*=%.3f p=%.3g, %.1f s", rate,
                     ad.adjusted_statistic, ad.p_value, secs)};
}

// ---- 6 ----------------------------------------------------------------
// g(x) = 0.2 + 0.7 x1 - 0.4 x2, noise sd 1, X ~ N(0, I), Z ~ N(mu, I).
// alpha_0 is the density ratio with E_X[alpha_0^2] = exp(|mu|^2), so
// V = |beta|^2 + xi * sigma^2 * exp(|mu|^2).
Outcome variance_structure() {
  const DictionarySpec spec{2, 2, true};
  const MeanOutcome func(2);
  Vector mu(2);
  mu << 0.3, 0.3;
  Vector beta(2);
  beta << 0.7, -0.4;
  const double sigma = 1.0;
  const Index n = 20000;
  const double analytic = beta.squaredNorm() + sigma * sigma * std::exp(mu.squaredNorm());
  const double r = default_penalty(spec.output_dim(), n, kRieszPenaltyC);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v_hats;
  for (int rep = 0; rep < 20; ++rep) {
    std::mt19937_64 rng(6000 + rep);
    const Dataset x = normal_data(n, Vector::Zero(2), rng);
    Vector y(n);
    for (Index i = 0; i < n; ++i) y(i) = 0.2 + beta.dot(x.row(i).transpose()) + sigma * nd(rng);
    const Dataset z = normal_data(n, mu, rng);
    const FoldPlan plan = FoldPlan::make(n, 5, 16000 + rep);
    const LearnerFactory factory = [&](const Dataset& xs, const Vector& ys, int) {
      return std::make_unique<LassoLearner>(fit_lasso_learner(spec, xs, ys, r));
    };
    v_hats.push_back(
        crossfit_estimate(func, spec, x, y, z, plan, factory, r, TrimSpec::growth()).v_hat);
  }
  const double avg = stats::mean(v_hats);
  const double rel = std::abs(avg - analytic) / analytic;
  return {rel <= 0.10, fmtn("mean V_hat %.4f vs analytic %.4f (rel. error %.3f)", avg, analytic, rel)};
}

// ---- 7 ----------------------------------------------------------------
Outcome mlp_bias_curves() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg;
  cfg.num_specs = 10;
  cfg.reps_per_spec = 20;
  cfg.n_train = 2000;
  cfg.n_field = 2000;
  cfg.epoch_grid = {25, 50, 100, 250};
  cfg.mlp.max_epochs = 250;
  cfg.estimators = {EstimatorKind::PlugIn, EstimatorKind::SampleSplit};
  cfg.sim.dim = 6;
  cfg.sim.order = 3;
  cfg.bootstrap_resamples = 1000;
  cfg.master_seed = 7007;
  if (const char* t = std::getenv("DMLSHIFT_THREADS")) cfg.threads = std::max(1, std::atoi(t));
  const auto rows = aggregate(run_experiment(cfg), cfg.bootstrap_resamples, cfg.master_seed);
  bool pass = true;
  std::string detail;
  for (int epoch : cfg.epoch_grid) {
    const AggregateRow* plug = nullptr;
    const AggregateRow* deb = nullptr;
    for (const auto& r : rows) {
      if (r.epoch != epoch) continue;
      if (r.estimator == "plug_in") plug = &r;
      if (r.estimator == "sample_split") deb = &r;
    }
    if (!plug || !deb) return {false, "missing aggregate rows"};
    const double se = std::sqrt(plug->rms_bias_se * plug->rms_bias_se +
                                deb->rms_bias_se * deb->rms_bias_se);
    const double gap = (plug->rms_bias - deb->rms_bias) / se;
    pass &= deb->rms_bias < plug->rms_bias;
    if (epoch == cfg.epoch_grid.front()) pass &= gap >= 3.0;
    detail += fmtn("e%d: %.4f vs %.4f (%.1f se); ", epoch, deb->rms_bias, plug->rms_bias, gap);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  detail += fmtn("%.0f s", secs);
  return {pass, detail};
}

// ---- 8 ----------------------------------------------------------------
Outcome pinv_equivalence() {
  const DictionarySpec spec{3, 2, true};
  const MeanOutcome func(3);
  const Index n = 800;
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    std::mt19937_64 rng(8000 + inst);
    Vector mu(3);
    for (Index k = 0; k < 3; ++k) mu(k) = 0.3 * nd(rng);
    const Dataset x = normal_data(n, Vector::Zero(3), rng);
    Vector y(n);
    for (Index i = 0; i < n; ++i) {
      y(i) = std::sin(x(i, 0)) + x(i, 1) * std::abs(x(i, 2)) + 0.3 * nd(rng);
    }
    const Dataset z = normal_data(n, mu, rng);
    // A smooth non-dictionary regression, so residuals are not orthogonal to b(X).
    const FunctionLearner gamma(3, [](std::span<const double> v) {
      return 0.8 * std::tanh(v[0]) + 0.5 * v[1] * v[2];
    });
    const DebiasResult pinv =
        pseudo_inverse_estimate(func, spec, x, y, z, gamma, TrimSpec::growth());
    const DebiasResult riesz =
        nocrossfit_estimate(func, spec, x, y, z, gamma, 1e-8, TrimSpec::growth());
    const double rel = std::abs(pinv.correction - riesz.correction) /
                       std::max(std::abs(riesz.correction), 1e-12);
    worst = std::max(worst, rel);
  }
  return {worst <= 1e-4, fmtn("max relative difference %.3g over 20 instances", worst)};
}

// ---- 9 ----------------------------------------------------------------
Outcome summary_sufficiency() {
  const DictionarySpec spec{3, 2, true};
  const MeanOutcome func(3);
  const Index n = 1000;
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    std::mt19937_64 rng(9000 + inst);
    Vector mu = Vector::Constant(3, 0.25);
    const Dataset x = normal_data(n, Vector::Zero(3), rng);
    Vector y(n);
    for (Index i = 0; i < n; ++i) y(i) = x(i, 0) - x(i, 1) * x(i, 2) + 0.5 * nd(rng);
    const Dataset z = normal_data(n, mu, rng);
    const FunctionLearner gamma(3, [](std::span<const double> v) { return 0.9 * v[0] - 0.2 * v[1]; });
    const double r = default_penalty(spec.output_dim(), n);

    // Raw-data estimate, assembled by hand.
    const RieszFit fit = fit_riesz(compute_moments(func, spec, z, x), r);
    const Dictionary dict(spec);
    double plug = 0.0, corr = 0.0;
    for (Index i = 0; i < z.rows(); ++i) plug += gamma.predict(row_span(z, i));
    plug /= static_cast<double>(z.rows());
    for (Index t = 0; t < n; ++t) {
      corr += evaluate_alpha(fit, dict, row_span(x, t)) * (y(t) - gamma.predict(row_span(x, t)));
    }
    corr /= static_cast<double>(n);

    const TrainingSummaries s = training_summaries(spec, x, y, gamma.predict_batch(x));
    const SummaryEstimate est = estimate_from_summaries(func, spec, s, gamma, z, r);
    worst = std::max(worst, std::abs(est.theta_hat - (plug + corr)));
  }
  return {worst <= 1e-12, fmtn("max abs difference %.3g over 20 instances", worst)};
}

// ---- 10 ---------------------------------------------------------------
std::string strip_timing(const std::vector<ReplicationRecord>& records) {
  std::string out;
  for (auto r : records) {
    r.wall_time_ms = 0.0;
    out += format_record_csv_line(r) + '\n';
  }
  return out;
}

Outcome determinism() {
  std::vector<std::string> mismatches;
  auto check = [&](const std::string& stage, const std::function<std::string()>& produce) {
    if (produce() != produce()) mismatches.push_back(stage);
  };
  SimKnobs knobs;
  knobs.pilot_size = 20000;
  check("spec", [&] { return random_spec(11, knobs).to_json(); });
  check("sample", [&] {
    const SimSpec spec = random_spec(11, knobs);
    const SimSample s = draw_sample(spec, {300, 300, 300}, 99, {0.0, 0.0});
    Vector flat(s.x_train.size() + s.y_train.size() + s.z_field.size() + s.y_validate.size());
    flat << s.x_train.reshaped(), s.y_train, s.z_field.reshaped(), s.y_validate;
    std::string out;
    for (Index i = 0; i < flat.size(); ++i) out += fmt("%.17g,", flat(i));
    return out;
  });
  check("oracle", [&] {
    Rng rng(5);
    const auto o = oracle_theta(random_spec(11, knobs), 20000, rng);
    return fmtn("%.17g %.17g", o.value, o.mc_se);
  });
  check("mlp", [&] {
    const SimSpec spec = random_spec(11, knobs);
    const SimSample s = draw_sample(spec, {600, 600, 600}, 3, {0.0, 0.0});
    MlpConfig cfg;
    cfg.batch_size = 128;
    cfg.seed = 77;
    MlpLearner net(cfg, spec.dim);
    net.train(s.x_train, s.y_train, 5);
    return net.to_json();
  });
  check("crossfit", [&] {
    const SimSpec spec = random_spec(11, knobs);
    const SimSample s = draw_sample(spec, {600, 600, 600}, 3, {0.0, 0.0});
    const DictionarySpec dspec{spec.dim, 2, true};
    const FoldPlan plan = FoldPlan::make(600, 5, 42);
    const double r = default_penalty(dspec.output_dim(), 600);
    const LearnerFactory factory = [&](const Dataset& xs, const Vector& ys, int) {
      return std::make_unique<LassoLearner>(fit_lasso_learner(dspec, xs, ys, r));
    };
    return crossfit_estimate(MeanOutcome(spec.dim), dspec, s.x_train, s.y_train, s.z_field, plan,
                             factory, r, TrimSpec::growth())
        .to_json();
  });

  ExperimentConfig cfg;
  cfg.num_specs = 2;
  cfg.reps_per_spec = 2;
  cfg.n_train = 600;
  cfg.n_field = 600;
  cfg.epoch_grid = {2, 4};
  cfg.mlp.batch_size = 128;
  cfg.mlp.max_epochs = 4;
  cfg.estimators = {EstimatorKind::PlugIn, EstimatorKind::CrossFit, EstimatorKind::NoCrossFit,
                    EstimatorKind::SampleSplit, EstimatorKind::PseudoInverse};
  cfg.sim.pilot_size = 20000;
  cfg.oracle_n = 20000;
  cfg.bootstrap_resamples = 200;
  const auto first = run_experiment(cfg);
  check("records", [&] { return strip_timing(run_experiment(cfg)); });
  if (strip_timing(first) != strip_timing(run_experiment(cfg))) mismatches.push_back("records-vs-first");
  ExperimentConfig threaded = cfg;
  threaded.threads = 3;
  if (strip_timing(first) != strip_timing(run_experiment(threaded))) mismatches.push_back("threads");
  check("aggregate", [&] { return aggregate_to_json(aggregate(first, 200, cfg.master_seed)); });
  check("config", [&] { return cfg.to_json(); });

  std::string detail = "7 stages plus thread-count check";
  if (!mismatches.empty()) {
    detail = "mismatch in:";
    for (const auto& m : mismatches) detail += " " + m;
  }
  return {mismatches.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
  };
  const std::vector<Criterion> criteria{
      {1, "solver oracle equivalence", solver_oracle},
      {2, "KKT certification", kkt_certification},
      {3, "Riesz no-shift identity", riesz_no_shift},
      {4, "double robustness", double_robustness},
      {5, "cross-fit coverage and normality", coverage},
      {6, "variance structure", variance_structure},
      {7, "MLP bias curves at desk scale", mlp_bias_curves},
      {8, "pseudo-inverse equivalence", pinv_equivalence},
      {9, "no-cross-fit sufficiency", summary_sufficiency},
      {10, "determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] criterion %d: %s -- %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
