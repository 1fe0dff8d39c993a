#include "dmlshift/solvers.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "dmlshift/errors.h"
#include "dmlshift/moments.h"

namespace dmlshift {

namespace {

bool all_finite(const Vector& v) { return v.allFinite(); }

Vector resolve_weights(const SolverOptions& opts, const Matrix& quadratic) {
  const Index dim = quadratic.rows();
  Vector w = opts.penalty_weights.size() == 0 ? Vector::Ones(dim) : opts.penalty_weights;
  if (w.size() != dim) {
    throw ShapeError("penalty_weights has length " + std::to_string(w.size()) + ", expected " +
                     std::to_string(dim));
  }
  if (!all_finite(w) || (w.array() < 0.0).any()) {
    throw NumericError("penalty_weights must be finite and nonnegative");
  }
  if (opts.standardize) {
    for (Index j = 0; j < dim; ++j) w(j) *= std::sqrt(std::max(quadratic(j, j), 0.0));
  }
  return w;
}

double violation_from_gradient(const Vector& gradient, const Vector& coef, double penalty,
                               const Vector& weights, const std::vector<char>& pinned) {
  double worst = 0.0;
  for (Index j = 0; j < coef.size(); ++j) {
    if (!pinned.empty() && pinned[static_cast<std::size_t>(j)]) continue;
    const double pen = penalty * weights(j);
    double v;
    if (coef(j) != 0.0) {
      v = std::abs(gradient(j) - pen * (coef(j) > 0.0 ? 1.0 : -1.0));
    } else {
      v = std::max(0.0, std::abs(gradient(j)) - pen);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

double objective(const Vector& linear, const Matrix& quadratic, const Vector& rho, double penalty,
                 const Vector& weights) {
  return -2.0 * linear.dot(rho) + rho.dot(quadratic * rho) +
         2.0 * penalty * weights.cwiseProduct(rho.cwiseAbs()).sum();
}

// Re-solves the smooth problem on the current support with signs held
// fixed. Accepted only when it keeps the signs and lowers both the KKT
// violation and the objective.
void refine_on_support(const Vector& linear, const Matrix& quadratic, double penalty,
                       const Vector& weights, const std::vector<char>& pinned, Vector& rho,
                       double& kkt) {
  std::vector<Index> support;
  for (Index j = 0; j < rho.size(); ++j) {
    if (rho(j) != 0.0 && !pinned[static_cast<std::size_t>(j)]) support.push_back(j);
  }
  if (support.empty()) return;
  const Index s = static_cast<Index>(support.size());
  Matrix qa(s, s);
  Vector rhs(s);
  for (Index a = 0; a < s; ++a) {
    const Index j = support[static_cast<std::size_t>(a)];
    rhs(a) = linear(j) - penalty * weights(j) * (rho(j) > 0.0 ? 1.0 : -1.0);
    for (Index b = 0; b < s; ++b) qa(a, b) = quadratic(j, support[static_cast<std::size_t>(b)]);
  }
  Eigen::LDLT<Matrix> ldlt(qa);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return;
  const Vector x = ldlt.solve(rhs);
  if (!x.allFinite()) return;

  Vector candidate = rho;
  for (Index a = 0; a < s; ++a) {
    const Index j = support[static_cast<std::size_t>(a)];
    if (weights(j) * penalty > 0.0 && x(a) * rho(j) <= 0.0) return;
    candidate(j) = x(a);
  }
  const Vector gradient = linear - quadratic * candidate;
  const double candidate_kkt = violation_from_gradient(gradient, candidate, penalty, weights, pinned);
  const double before = objective(linear, quadratic, rho, penalty, weights);
  const double after = objective(linear, quadratic, candidate, penalty, weights);
  if (candidate_kkt <= kkt && after <= before + 1e-13 * (1.0 + std::abs(before))) {
    rho = candidate;
    kkt = candidate_kkt;
  }
}

LassoFit coordinate_descent(const Vector& linear, const Matrix& quadratic, double penalty,
                            const SolverOptions& opts) {
  const Index dim = linear.size();
  if (quadratic.rows() != dim || quadratic.cols() != dim) {
    throw ShapeError("quadratic term must be " + std::to_string(dim) + "x" + std::to_string(dim));
  }
  if (!all_finite(linear) || !quadratic.allFinite()) {
    throw NumericError("penalized quadratic: non-finite problem data");
  }
  if (!std::isfinite(penalty) || penalty < 0.0) {
    throw NumericError("penalty must be finite and nonnegative");
  }
  const Vector weights = resolve_weights(opts, quadratic);

  std::vector<char> pinned(static_cast<std::size_t>(dim), 0);
  for (Index j = 0; j < dim; ++j) {
    if (quadratic(j, j) > 0.0) continue;
    if (penalty * weights(j) == 0.0 && linear(j) != 0.0) {
      throw DegenerateCoordinateError(
          static_cast<long>(j), "coordinate " + std::to_string(j) +
                                    " has zero curvature and an unpenalized nonzero linear term");
    }
    pinned[static_cast<std::size_t>(j)] = 1;
  }

  LassoFit fit;
  fit.penalty = penalty;
  Vector rho = Vector::Zero(dim);
  if (opts.warm_start) {
    if (opts.warm_start->size() != dim) throw ShapeError("warm start has wrong length");
    rho = *opts.warm_start;
    for (Index j = 0; j < dim; ++j) {
      if (pinned[static_cast<std::size_t>(j)]) rho(j) = 0.0;
    }
  }
  Vector gradient = linear - quadratic * rho;  // half the negative gradient
  if (opts.record_objective) {
    fit.objective_trace.push_back(objective(linear, quadratic, rho, penalty, weights));
  }

  double kkt = violation_from_gradient(gradient, rho, penalty, weights, pinned);
  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Index j = 0; j < dim; ++j) {
      if (pinned[static_cast<std::size_t>(j)]) continue;
      const double qjj = quadratic(j, j);
      const double z = gradient(j) + qjj * rho(j);
      const double updated = soft_threshold(z, penalty * weights(j)) / qjj;
      const double delta = updated - rho(j);
      if (delta != 0.0) {
        gradient.noalias() -= delta * quadratic.col(j);
        rho(j) = updated;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    fit.iterations = sweep;
    if (opts.record_objective) {
      fit.objective_trace.push_back(objective(linear, quadratic, rho, penalty, weights));
    }
    if (max_change < opts.coef_tol) {
      gradient = linear - quadratic * rho;
      kkt = violation_from_gradient(gradient, rho, penalty, weights, pinned);
      if (kkt < opts.kkt_tol) {
        fit.converged = true;
        break;
      }
    }
  }
  if (!fit.converged) {
    gradient = linear - quadratic * rho;
    kkt = violation_from_gradient(gradient, rho, penalty, weights, pinned);
  }
  refine_on_support(linear, quadratic, penalty, weights, pinned, rho, kkt);
  if (!rho.allFinite()) throw NumericError("coordinate descent produced non-finite coefficients");

  fit.coefficients = std::move(rho);
  fit.max_kkt_violation = kkt;
  return fit;
}

}  // namespace

PenalizedQuadraticProblem::PenalizedQuadraticProblem(Vector linear, Matrix quadratic,
                                                     double penalty)
    : linear_(std::move(linear)), quadratic_(std::move(quadratic)), penalty_(penalty) {
  if (quadratic_.rows() != linear_.size() || quadratic_.cols() != linear_.size()) {
    throw ShapeError("PenalizedQuadraticProblem: quadratic is " +
                     std::to_string(quadratic_.rows()) + "x" + std::to_string(quadratic_.cols()) +
                     " but linear has length " + std::to_string(linear_.size()));
  }
  if (!std::isfinite(penalty_) || penalty_ < 0.0) {
    throw NumericError("PenalizedQuadraticProblem: penalty must be finite and >= 0");
  }
  const Matrix sym = 0.5 * (quadratic_ + quadratic_.transpose());
  quadratic_ = sym;
}

double soft_threshold(double z, double r) {
  if (z > r) return z - r;
  if (z < -r) return z + r;
  return 0.0;
}

LassoFit penalized_quadratic(const PenalizedQuadraticProblem& problem, const SolverOptions& opts) {
  return coordinate_descent(problem.linear(), problem.quadratic(), problem.penalty(), opts);
}

LassoFit lasso_regression(const DesignMatrix& design, const Vector& y, double r,
                          const SolverOptions& opts) {
  if (design.rows() != y.size()) {
    throw ShapeError("lasso_regression: design has " + std::to_string(design.rows()) +
                     " rows but y has length " + std::to_string(y.size()));
  }
  if (y.size() < 1) throw EmptySampleError("lasso_regression: no observations");
  if (!design.allFinite() || !y.allFinite()) {
    throw NumericError("lasso_regression: non-finite design or response");
  }
  const Matrix quadratic = second_moment(design);
  const Vector linear = cross_moment(design, y);
  return coordinate_descent(linear, quadratic, r, opts);
}

double penalized_quadratic_objective(const PenalizedQuadraticProblem& problem, const Vector& rho,
                                     const Vector& penalty_weights) {
  const Vector w = penalty_weights.size() == 0 ? Vector::Ones(problem.dim()) : penalty_weights;
  return objective(problem.linear(), problem.quadratic(), rho, problem.penalty(), w);
}

double kkt_violation(const Vector& linear, const Matrix& quadratic, const Vector& coef,
                     double penalty, const Vector& penalty_weights) {
  const Vector w = penalty_weights.size() == 0 ? Vector::Ones(linear.size()) : penalty_weights;
  const Vector gradient = linear - quadratic * coef;
  return violation_from_gradient(gradient, coef, penalty, w, {});
}

double default_penalty(Index num_terms, Index num_obs, double c) {
  if (num_terms < 1 || num_obs < 1) {
    throw ShapeError("default_penalty: need at least one term and one observation");
  }
  return c * std::sqrt(std::log(static_cast<double>(num_terms)) / static_cast<double>(num_obs));
}

std::vector<LassoFit> lasso_path(const DesignMatrix& design, const Vector& y,
                                 const std::vector<double>& penalties, const SolverOptions& opts) {
  if (design.rows() != y.size()) throw ShapeError("lasso_path: design/response mismatch");
  if (y.size() < 1) throw EmptySampleError("lasso_path: no observations");
  const Matrix quadratic = second_moment(design);
  const Vector linear = cross_moment(design, y);

  std::vector<std::size_t> order(penalties.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return penalties[a] > penalties[b]; });

  std::vector<LassoFit> fits(penalties.size());
  SolverOptions local = opts;
  for (std::size_t k : order) {
    fits[k] = coordinate_descent(linear, quadratic, penalties[k], local);
    local.warm_start = fits[k].coefficients;
  }
  return fits;
}

PenaltySelection select_penalty_cv(const DesignMatrix& design, const Vector& y,
                                   const std::vector<double>& penalties, int num_folds,
                                   std::uint64_t seed, const SolverOptions& opts) {
  if (penalties.empty()) throw ConfigError("select_penalty_cv: empty penalty grid");
  if (num_folds < 2 || num_folds > y.size()) {
    throw FoldSizeError("select_penalty_cv: need 2 <= folds <= n");
  }
  const Index n = y.size();
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    fold[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = static_cast<int>(i % num_folds);
  }

  PenaltySelection out;
  out.grid = penalties;
  out.cv_error.assign(penalties.size(), 0.0);
  for (int f = 0; f < num_folds; ++f) {
    std::vector<Index> train_rows, test_rows;
    for (Index i = 0; i < n; ++i) {
      (fold[static_cast<std::size_t>(i)] == f ? test_rows : train_rows).push_back(i);
    }
    DesignMatrix b_train(static_cast<Index>(train_rows.size()), design.cols());
    Vector y_train(static_cast<Index>(train_rows.size()));
    for (std::size_t k = 0; k < train_rows.size(); ++k) {
      b_train.row(static_cast<Index>(k)) = design.row(train_rows[k]);
      y_train(static_cast<Index>(k)) = y(train_rows[k]);
    }
    const auto fits = lasso_path(b_train, y_train, penalties, opts);
    for (std::size_t g = 0; g < penalties.size(); ++g) {
      double sse = 0.0;
      for (Index i : test_rows) {
        const double e = y(i) - design.row(i).dot(fits[g].coefficients);
        sse += e * e;
      }
      out.cv_error[g] += sse / static_cast<double>(n);
    }
  }
  const auto best = std::min_element(out.cv_error.begin(), out.cv_error.end());
  out.penalty = penalties[static_cast<std::size_t>(best - out.cv_error.begin())];
  return out;
}

}  // namespace dmlshift
