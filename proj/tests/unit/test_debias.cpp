#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include <json.hpp>

#include "dmlshift/debias.h"
#include "dmlshift/errors.h"
#include "dmlshift/stats.h"

using namespace dmlshift;

namespace {

Dataset normal_data(Index n, Index k, std::mt19937_64& rng, double shift = 0.0) {
  std::normal_distribution<double> nd;
  Dataset x(n, k);
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < k; ++c) x(i, c) = shift + nd(rng);
  return x;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double d : v) out(i++) = d;
  return out;
}

double linear_gamma(std::span<const double> x) { return 0.3 + x[0] - 0.5 * x[1]; }

struct Draw {
  Dataset x;
  Vector y;
  Dataset z;
};

Draw linear_draw(Index n, std::mt19937_64& rng, double shift = 0.3) {
  std::normal_distribution<double> nd;
  Draw d{normal_data(n, 2, rng), Vector(n), normal_data(n, 2, rng, shift)};
  for (Index i = 0; i < n; ++i) d.y(i) = linear_gamma(row_span(d.x, i)) + nd(rng);
  return d;
}

}  // namespace

TEST_CASE("trim") {
  CHECK(trim(0.5, 2.0) == 0.5);
  CHECK(trim(5.0, 2.0) == 2.0);
  CHECK(trim(-5.0, 2.0) == -2.0);
  CHECK(trim(2.0, 2.0) == 2.0);
  CHECK(TrimSpec::growth(5.0).tau_bar(10000) == doctest::Approx(50.0));
  CHECK(TrimSpec::fixed(3.0).tau_bar(10000) == 3.0);
  CHECK_THROWS_AS(TrimSpec::fixed(0.0).validate(), ConfigError);
}

TEST_CASE("fold plans partition the rows") {
  for (Index n : {5, 17, 100}) {
    for (int l : {2, 5}) {
      const FoldPlan plan = FoldPlan::make(n, l, 9);
      std::vector<int> seen(static_cast<std::size_t>(n), 0);
      Index min_size = n, max_size = 0;
      for (int f = 0; f < l; ++f) {
        const auto rows = plan.fold_rows(f);
        for (Index r : rows) ++seen[static_cast<std::size_t>(r)];
        min_size = std::min<Index>(min_size, static_cast<Index>(rows.size()));
        max_size = std::max<Index>(max_size, static_cast<Index>(rows.size()));
        CHECK(static_cast<Index>(plan.complement_rows(f).size()) == n - plan.fold_size(f));
      }
      CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
      CHECK(max_size - min_size <= 1);
    }
  }
  CHECK(FoldPlan::make(50, 5, 1).assignments() == FoldPlan::make(50, 5, 1).assignments());
  CHECK_THROWS_AS(FoldPlan::make(3, 5, 1), FoldSizeError);
  CHECK_THROWS_AS(FoldPlan::from_assignments({0, 0, 2}, 3), FoldSizeError);
  CHECK_THROWS_AS(FoldPlan::from_assignments({0, 3}, 3), ConfigError);
}

TEST_CASE("hand-computed single fold") {
  FoldComponents f{vec({1, 2, 3, 4}), vec({1, -1, 2, 0.5}), vec({0.5, 1, -0.5, 2})};
  const DebiasResult r = variance_and_ci(std::span<const FoldComponents>(&f, 1), TrimSpec::fixed(10.0));
  // plug-in 2.5, correction (0.5 - 1 - 1 + 1)/4, s2_m 1.25, s2_alpha (0.25 + 1 + 1 + 1)/4.
  CHECK(r.plug_in == 2.5);
  CHECK(r.correction == -0.125);
  CHECK(r.theta_hat == 2.375);
  CHECK(r.per_fold[0].s2_m == 1.25);
  CHECK(r.per_fold[0].s2_alpha == 0.8125);
  CHECK(r.v_hat == 2.0625);
  CHECK(r.xi_hat == 1.0);
  CHECK(r.std_error == doctest::Approx(std::sqrt(2.0625 / 4.0)));
  CHECK(r.ci_high - r.theta_hat == doctest::Approx(1.959963984540054 * r.std_error).epsilon(1e-12));
  CHECK(r.theta_hat - r.ci_low == doctest::Approx(r.ci_high - r.theta_hat).epsilon(1e-12));

  // Clamping alpha at 1 changes only the variance: s2_alpha = (0.25 + 1 + 0.25 + 1)/4.
  const DebiasResult t = variance_and_ci(std::span<const FoldComponents>(&f, 1), TrimSpec::fixed(1.0));
  CHECK(t.per_fold[0].s2_alpha == 0.625);
  CHECK(t.per_fold[0].s2_alpha <= r.per_fold[0].s2_alpha);
  CHECK(t.theta_hat == r.theta_hat);

  // Doubling the field sample: xi = 2.
  FoldComponents g = f;
  g.m_values = vec({1, 2, 3, 4, 1, 2, 3, 4});
  const DebiasResult x = variance_and_ci(std::span<const FoldComponents>(&g, 1), TrimSpec::fixed(10.0));
  CHECK(x.xi_hat == 2.0);
  CHECK(x.v_hat == doctest::Approx(1.25 + 2.0 * 0.8125));
  CHECK(x.v_hat_printed == doctest::Approx(2.0625));
  CHECK(x.std_error == doctest::Approx(std::sqrt(x.v_hat / 8.0)));
  DebiasOptions printed;
  printed.variance_mode = VarianceMode::AsPrinted;
  CHECK(variance_and_ci(std::span<const FoldComponents>(&g, 1), TrimSpec::fixed(10.0), printed).v_hat ==
        doctest::Approx(2.0625));

  DebiasOptions bad;
  bad.level = 1.0;
  CHECK_THROWS_AS(variance_and_ci(std::span<const FoldComponents>(&f, 1), TrimSpec::fixed(1.0), bad),
                  ConfigError);
}

TEST_CASE("degenerate components give a zero-width interval") {
  FoldComponents f{Vector::Constant(5, 0.7), Vector::Ones(3), Vector::Zero(3)};
  const DebiasResult r = variance_and_ci(std::span<const FoldComponents>(&f, 1), TrimSpec::growth());
  CHECK(r.v_hat == 0.0);
  CHECK(r.ci_low == r.theta_hat);
  CHECK(r.ci_high == r.theta_hat);
}

TEST_CASE("fold weights combine per-fold values") {
  std::vector<FoldComponents> folds{
      {vec({1, 3}), vec({1, 2}), vec({0.5, -0.5})},
      {vec({2, 2}), vec({1, 1, 1}), vec({0.1, 0.2, 0.3})},
  };
  const DebiasResult r = variance_and_ci(folds, TrimSpec::fixed(100.0));
  double weights = 0.0, theta = 0.0, v = 0.0;
  for (const auto& d : r.per_fold) {
    const double w = static_cast<double>(d.fold_size) / 5.0;
    weights += w;
    theta += w * d.theta;
    v += w * d.v;
  }
  CHECK(weights == doctest::Approx(1.0));
  CHECK(r.theta_hat == doctest::Approx(theta).epsilon(1e-14));
  CHECK(r.v_hat == doctest::Approx(v).epsilon(1e-14));
  CHECK(r.theta_hat - r.plug_in - r.correction == 0.0);
}

TEST_CASE("cross-fit decomposition and zero correction") {
  std::mt19937_64 rng(1);
  const Draw d = linear_draw(300, rng);
  const DictionarySpec spec{2, 2, true};
  const MeanOutcome func(2);
  const FoldPlan plan = FoldPlan::make(300, 5, 3);
  const LearnerFactory factory = [&](const Dataset& xs, const Vector& ys, int) {
    return std::make_unique<LassoLearner>(fit_lasso_learner(spec, xs, ys, 0.05));
  };
  const DebiasResult r = crossfit_estimate(func, spec, d.x, d.y, d.z, plan, factory, 0.02, TrimSpec::growth());
  CHECK(std::abs(r.theta_hat - r.plug_in - r.correction) <= 1e-15);
  CHECK(r.per_fold.size() == 5);
  CHECK(r.v_hat >= 0.0);

  const DebiasResult zero = crossfit_estimate(func, spec, d.x, d.y, d.z, plan, factory, 1e6, TrimSpec::growth());
  CHECK(zero.correction == 0.0);
  CHECK(zero.theta_hat == zero.plug_in);
}

TEST_CASE("oracle regression gives a mean-zero correction") {
  const DictionarySpec spec{2, 1, true};
  const MeanOutcome func(2);
  const FunctionLearner oracle(2, linear_gamma);
  const std::vector<const RegressionLearner*> learners(5, &oracle);
  std::vector<double> corrections;
  for (int rep = 0; rep < 200; ++rep) {
    std::mt19937_64 rng(100 + rep);
    const Draw d = linear_draw(200, rng);
    const FoldPlan plan = FoldPlan::make(200, 5, rep);
    corrections.push_back(
        crossfit_with_learners(func, spec, d.x, d.y, d.z, plan, learners, 0.01, TrimSpec::growth()).correction);
  }
  const double m = stats::mean(corrections);
  const double se = std::sqrt(stats::sample_variance(corrections) / 200.0);
  CHECK(std::abs(m) <= 3.0 * se);
}

TEST_CASE("shuffling rows with their fold labels changes nothing") {
  std::mt19937_64 rng(2);
  const Draw d = linear_draw(120, rng);
  const DictionarySpec spec{2, 2, true};
  const MeanOutcome func(2);
  const FunctionLearner gamma(2, [](std::span<const double> x) { return 0.8 * x[0]; });
  const std::vector<const RegressionLearner*> learners(4, &gamma);
  const FoldPlan plan = FoldPlan::make(120, 4, 8);
  const DebiasResult a = crossfit_with_learners(func, spec, d.x, d.y, d.z, plan, learners, 0.01, TrimSpec::growth());

  std::vector<Index> perm(120);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Dataset xp(120, 2);
  Vector yp(120);
  std::vector<int> ap(120);
  for (Index i = 0; i < 120; ++i) {
    const Index src = perm[static_cast<std::size_t>(i)];
    xp.row(i) = d.x.row(src);
    yp(i) = d.y(src);
    ap[static_cast<std::size_t>(i)] = plan.assignments()[static_cast<std::size_t>(src)];
  }
  const DebiasResult b = crossfit_with_learners(func, spec, xp, yp, d.z,
                                                FoldPlan::from_assignments(ap, 4), learners, 0.01,
                                                TrimSpec::growth());
  CHECK(std::abs(a.theta_hat - b.theta_hat) <= 1e-12);
  CHECK(std::abs(a.v_hat - b.v_hat) <= 1e-12);
}

TEST_CASE("no-cross-fit estimator identities") {
  std::mt19937_64 rng(3);
  const Draw d = linear_draw(250, rng);
  const DictionarySpec spec{2, 2, true};
  const MeanOutcome func(2);

  // OLS on the full dictionary leaves residuals orthogonal to b(X).
  const DebiasResult ols = nocrossfit_estimate(func, spec, d.x, d.y, d.z, 0.0, 0.01, TrimSpec::growth());
  CHECK(std::abs(ols.correction) <= 1e-10);

  const FunctionLearner gamma(2, [](std::span<const double> x) { return std::tanh(x[0]) - 0.2 * x[1]; });
  const double r = 0.01;
  const DebiasResult res = nocrossfit_estimate(func, spec, d.x, d.y, d.z, gamma, r, TrimSpec::growth());
  const RieszFit fit = fit_riesz(compute_moments(func, spec, d.z, d.x), r);
  const Vector resid = d.y - gamma.predict_batch(d.x);
  const Vector alpha = evaluate_alpha_batch(fit, Dictionary(spec), d.x);
  const TrainingSummaries s = training_summaries(spec, d.x, d.y, gamma.predict_batch(d.x));
  CHECK(std::abs(fit.rho.dot(s.residual_crossprod) - alpha.dot(resid) / 250.0) <= 1e-12);
  CHECK(std::abs(res.correction - alpha.dot(resid) / 250.0) <= 1e-12);
  CHECK(res.theta_hat - res.plug_in - res.correction == 0.0);
  const SummaryEstimate se = estimate_from_summaries(func, spec, s, gamma, d.z, r);
  CHECK(std::abs(se.theta_hat - res.theta_hat) <= 1e-12);

  // With a single training row Q_hat is rank one; zero residuals zero the cross product.
  const TrainingSummaries one = training_summaries(spec, d.x.topRows(1), d.y.head(1), d.y.head(1));
  CHECK(one.residual_crossprod.isZero(0.0));
  CHECK(Eigen::FullPivLU<Matrix>(one.q_hat).rank() == 1);

  // Sample split with the evaluation sample equal to the training sample.
  const DebiasResult split = sample_split_estimate(func, spec, d.x, d.x, d.y, d.z, gamma, r, TrimSpec::growth());
  CHECK(std::abs(split.theta_hat - res.theta_hat) <= 1e-12);
}

TEST_CASE("pseudo-inverse estimator uses the generalized inverse correction") {
  std::mt19937_64 rng(4);
  const Draw d = linear_draw(200, rng);
  const DictionarySpec spec{2, 2, true};
  const MeanOutcome func(2);
  const FunctionLearner gamma(2, [](std::span<const double> x) { return x[0] * x[0] * 0.1; });
  const DebiasResult res = pseudo_inverse_estimate(func, spec, d.x, d.y, d.z, gamma, TrimSpec::growth());
  const DesignMatrix b = expand_matrix(spec, d.x);
  const Matrix bm = b;
  const Vector phi = bm.completeOrthogonalDecomposition().solve(Vector(d.y - gamma.predict_batch(d.x)));
  const Vector m_hat = expand_matrix(spec, d.z).colwise().mean().transpose();
  CHECK(res.correction == doctest::Approx(m_hat.dot(phi)).epsilon(1e-9));
  CHECK(res.theta_hat == doctest::Approx(res.plug_in + res.correction).epsilon(1e-15));
}

TEST_CASE("result JSON round-trips with full precision") {
  FoldComponents f{vec({0.1, 0.2, 0.7}), vec({1.0 / 3.0, 2.0}), vec({0.25, 1e-7})};
  const DebiasResult r = variance_and_ci(std::span<const FoldComponents>(&f, 1), TrimSpec::growth());
  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j.at("theta_hat").get<double>() == r.theta_hat);
  CHECK(j.at("v_hat").get<double>() == r.v_hat);
  CHECK(j.at("ci_low").get<double>() == r.ci_low);
  CHECK(j.at("per_fold").size() == 1);
  CHECK(r.to_json().find("\"level\":0.94999999999999996") != std::string::npos);
}
