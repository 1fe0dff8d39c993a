#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dmlshift/types.h"

namespace dmlshift {

struct SolverOptions {
  double coef_tol = 1e-8;   // max coordinate change in a sweep
  double kkt_tol = 1e-6;    // max subgradient violation
  int max_sweeps = 10000;
  // Per-coordinate penalty multipliers; empty means 1 for every coordinate.
  // A zero entry leaves that coefficient unpenalized (e.g. an intercept).
  Vector penalty_weights;
  // Solve as if every column had unit root-mean-square and map the
  // coefficients back. Equivalent to scaling penalty weight j by
  // sqrt(Q_jj).
  bool standardize = false;
  // Record the objective after every sweep in LassoFit::objective_trace.
  bool record_objective = false;
  // Starting point; the zero vector when absent.
  std::optional<Vector> warm_start;
};

struct LassoFit {
  Vector coefficients;
  double penalty = 0.0;
  int iterations = 0;  // sweeps performed
  bool converged = false;
  double max_kkt_violation = 0.0;
  std::vector<double> objective_trace;
};

// argmin_rho { -2 linear' rho + rho' quadratic rho + 2 penalty sum_j w_j |rho_j| }
class PenalizedQuadraticProblem {
 public:
  PenalizedQuadraticProblem(Vector linear, Matrix quadratic, double penalty);

  const Vector& linear() const noexcept { return linear_; }
  const Matrix& quadratic() const noexcept { return quadratic_; }
  double penalty() const noexcept { return penalty_; }
  Index dim() const noexcept { return linear_.size(); }

 private:
  Vector linear_;
  Matrix quadratic_;
  double penalty_;
};

double soft_threshold(double z, double r);

LassoFit penalized_quadratic(const PenalizedQuadraticProblem& problem,
                             const SolverOptions& opts = {});

// argmin_beta (1/T) sum_t (y_t - B_t' beta)^2 + 2 r sum_j w_j |beta_j|
//
// Solved through the covariance form: the squared loss equals
// beta' Q beta - 2 M' beta + const with Q = B'B/T, M = B'y/T.
LassoFit lasso_regression(const DesignMatrix& design, const Vector& y, double r,
                          const SolverOptions& opts = {});

// Objective of the penalized quadratic program at rho (including penalty).
double penalized_quadratic_objective(const PenalizedQuadraticProblem& problem, const Vector& rho,
                                     const Vector& penalty_weights = {});

// Largest violation of the subgradient optimality conditions at coef.
double kkt_violation(const Vector& linear, const Matrix& quadratic, const Vector& coef,
                     double penalty, const Vector& penalty_weights = {});

// Default constants c for the regression Lasso and for the Riesz program.
inline constexpr double kLassoPenaltyC = 0.5;
inline constexpr double kRieszPenaltyC = 2.0;

// c * sqrt(log(J) / n)
double default_penalty(Index num_terms, Index num_obs, double c = kLassoPenaltyC);

// Fits along a penalty grid (sorted descending internally), warm starting
// each fit from the previous one. Results follow the input grid order.
std::vector<LassoFit> lasso_path(const DesignMatrix& design, const Vector& y,
                                 const std::vector<double>& penalties,
                                 const SolverOptions& opts = {});

struct PenaltySelection {
  double penalty = 0.0;
  std::vector<double> grid;
  std::vector<double> cv_error;  // mean held-out squared error per grid value
};

// K-fold cross-validated choice of r for lasso_regression.
PenaltySelection select_penalty_cv(const DesignMatrix& design, const Vector& y,
                                   const std::vector<double>& penalties, int num_folds,
                                   std::uint64_t seed, const SolverOptions& opts = {});

}  // namespace dmlshift
