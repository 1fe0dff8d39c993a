#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dmlshift/featmap.h"
#include "dmlshift/learners.h"
#include "dmlshift/solvers.h"
#include "dmlshift/types.h"

namespace dmlshift {

using RegressionFunction = std::function<double(std::span<const double>)>;

/**
 * A functional m(z, g) that is linear in the regression g. The parameter of
 * interest is theta = E[m(Z, gamma_0)] over the field distribution of Z.
 */
class LinearFunctional {
 public:
  virtual ~LinearFunctional() = default;

  // Length of a field observation z.
  virtual Index field_dim() const = 0;
  // Length of the regressor vector x that g consumes.
  virtual Index regressor_dim() const = 0;

  virtual double apply(std::span<const double> z, const RegressionFunction& g) const = 0;

  // m(z, b_j) for every dictionary term j. The default evaluates apply()
  // once per term.
  virtual Vector basis_moments(const Dictionary& dict, std::span<const double> z) const;

  // m(Z_i, g) for every field row.
  virtual Vector apply_learner(const Dataset& field, const RegressionLearner& g) const;
};

// m(z, g) = g(z)
class MeanOutcome final : public LinearFunctional {
 public:
  explicit MeanOutcome(Index dim) : dim_(dim) {}

  Index field_dim() const override { return dim_; }
  Index regressor_dim() const override { return dim_; }
  double apply(std::span<const double> z, const RegressionFunction& g) const override;
  Vector basis_moments(const Dictionary& dict, std::span<const double> z) const override;
  Vector apply_learner(const Dataset& field, const RegressionLearner& g) const override;

 private:
  Index dim_;
};

// m(z, g) = g(d, z): the treatment coordinate is placed at
// treatment_index of the regressor vector and set to treatment_value; the
// field covariates fill the remaining positions in order.
class PotentialOutcome final : public LinearFunctional {
 public:
  PotentialOutcome(Index covariate_dim, Index treatment_index, double treatment_value);

  Index field_dim() const override { return covariate_dim_; }
  Index regressor_dim() const override { return covariate_dim_ + 1; }
  double apply(std::span<const double> z, const RegressionFunction& g) const override;
  Vector basis_moments(const Dictionary& dict, std::span<const double> z) const override;
  Vector apply_learner(const Dataset& field, const RegressionLearner& g) const override;

  void regressor_from_field(std::span<const double> z, std::span<double> x) const;

 private:
  Index covariate_dim_;
  Index treatment_index_;
  double treatment_value_;
};

struct RieszProblemMoments {
  Vector m_hat;  // (1/N) sum_i m(Z_i, b_j)
  Matrix q_hat;  // (1/T) sum_t b(X_t) b(X_t)'
  Index n_field = 0;
  Index n_train = 0;
};

struct RieszFit {
  Vector rho;
  double penalty = 0.0;
  LassoFit diagnostics;
};

// M_hat over all field rows.
Vector field_moments(const LinearFunctional& func, const Dictionary& dict, const Dataset& field);

RieszProblemMoments compute_moments(const LinearFunctional& func, const DictionarySpec& spec,
                                    const Dataset& field, const Dataset& train);

RieszFit fit_riesz(const RieszProblemMoments& moments, double r, const SolverOptions& opts = {});

double evaluate_alpha(const RieszFit& fit, const Dictionary& dict, std::span<const double> x);
double evaluate_alpha(const RieszFit& fit, const DictionarySpec& spec, std::span<const double> x);
Vector evaluate_alpha_batch(const RieszFit& fit, const Dictionary& dict, const Dataset& data);

// Minimum-norm least-squares coefficients of (y - gamma_hat) on the design,
// i.e. [B'B]^+ B'(y - gamma_hat). Singular values below
// rank_tol * sigma_max are treated as zero.
Vector pseudo_inverse_debias_coefficients(const DesignMatrix& design, const Vector& y,
                                          const Vector& gamma_hat, double rank_tol = 1e-10);

// rho such that alpha(x) = b(x)' rho reproduces the pseudo-inverse
// correction: rho = T [B'B]^+ m_hat.
Vector pseudo_inverse_riesz_coefficients(const DesignMatrix& design, const Vector& m_hat,
                                         double rank_tol = 1e-10);

}  // namespace dmlshift
