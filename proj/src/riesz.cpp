#include "dmlshift/riesz.h"

#include <cmath>
#include <string>

#include "dmlshift/errors.h"
#include "dmlshift/moments.h"

namespace dmlshift {

namespace {

void check_field_row(const LinearFunctional& func, std::span<const double> z) {
  if (static_cast<Index>(z.size()) != func.field_dim()) {
    throw ShapeError("functional expects field rows of length " + std::to_string(func.field_dim()) +
                     ", got " + std::to_string(z.size()));
  }
}

Eigen::BDCSVD<Matrix> thin_svd(const DesignMatrix& design) {
  return Eigen::BDCSVD<Matrix>(Matrix(design), Eigen::ComputeThinU | Eigen::ComputeThinV);
}

Vector pinv_singular(const Vector& sigma, double rank_tol, int power) {
  Vector inv = Vector::Zero(sigma.size());
  if (sigma.size() == 0) return inv;
  const double cutoff = rank_tol * sigma.maxCoeff();
  for (Index k = 0; k < sigma.size(); ++k) {
    if (sigma(k) > cutoff && sigma(k) > 0.0) inv(k) = std::pow(sigma(k), -power);
  }
  return inv;
}

}  // namespace

Vector LinearFunctional::basis_moments(const Dictionary& dict, std::span<const double> z) const {
  Vector out(dict.output_dim());
  for (Index j = 0; j < dict.output_dim(); ++j) {
    out(j) = apply(z, [&](std::span<const double> x) { return dict.expand(x)(j); });
  }
  return out;
}

Vector LinearFunctional::apply_learner(const Dataset& field, const RegressionLearner& g) const {
  Vector out(field.rows());
  const RegressionFunction fn = [&](std::span<const double> x) { return g.predict(x); };
  for (Index i = 0; i < field.rows(); ++i) out(i) = apply(row_span(field, i), fn);
  return out;
}

double MeanOutcome::apply(std::span<const double> z, const RegressionFunction& g) const {
  check_field_row(*this, z);
  return g(z);
}

Vector MeanOutcome::basis_moments(const Dictionary& dict, std::span<const double> z) const {
  check_field_row(*this, z);
  return dict.expand(z);
}

Vector MeanOutcome::apply_learner(const Dataset& field, const RegressionLearner& g) const {
  if (field.rows() > 0 && field.cols() != dim_) {
    throw ShapeError("MeanOutcome: field has " + std::to_string(field.cols()) +
                     " columns, expected " + std::to_string(dim_));
  }
  return g.predict_batch(field);
}

PotentialOutcome::PotentialOutcome(Index covariate_dim, Index treatment_index,
                                   double treatment_value)
    : covariate_dim_(covariate_dim),
      treatment_index_(treatment_index),
      treatment_value_(treatment_value) {
  if (covariate_dim < 1) throw ShapeError("PotentialOutcome: covariate_dim must be >= 1");
  if (treatment_index < 0 || treatment_index > covariate_dim) {
    throw ShapeError("PotentialOutcome: treatment_index out of range");
  }
}

void PotentialOutcome::regressor_from_field(std::span<const double> z, std::span<double> x) const {
  check_field_row(*this, z);
  std::size_t src = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    x[k] = static_cast<Index>(k) == treatment_index_ ? treatment_value_ : z[src++];
  }
}

double PotentialOutcome::apply(std::span<const double> z, const RegressionFunction& g) const {
  std::vector<double> x(static_cast<std::size_t>(covariate_dim_ + 1));
  regressor_from_field(z, x);
  return g(x);
}

Vector PotentialOutcome::basis_moments(const Dictionary& dict, std::span<const double> z) const {
  std::vector<double> x(static_cast<std::size_t>(covariate_dim_ + 1));
  regressor_from_field(z, x);
  return dict.expand(x);
}

Vector PotentialOutcome::apply_learner(const Dataset& field, const RegressionLearner& g) const {
  Dataset x(field.rows(), covariate_dim_ + 1);
  for (Index i = 0; i < field.rows(); ++i) {
    regressor_from_field(row_span(field, i),
                         {x.data() + i * x.cols(), static_cast<std::size_t>(x.cols())});
  }
  return g.predict_batch(x);
}

Vector field_moments(const LinearFunctional& func, const Dictionary& dict, const Dataset& field) {
  if (field.rows() == 0) throw EmptySampleError("field sample is empty");
  if (func.regressor_dim() != dict.input_dim()) {
    throw ShapeError("functional regressor dimension " + std::to_string(func.regressor_dim()) +
                     " does not match dictionary input dimension " +
                     std::to_string(dict.input_dim()));
  }
  Vector sum = Vector::Zero(dict.output_dim());
  for (Index i = 0; i < field.rows(); ++i) sum += func.basis_moments(dict, row_span(field, i));
  return sum / static_cast<double>(field.rows());
}

RieszProblemMoments compute_moments(const LinearFunctional& func, const DictionarySpec& spec,
                                    const Dataset& field, const Dataset& train) {
  const Dictionary dict(spec);
  if (train.rows() == 0) throw EmptySampleError("training sample is empty");
  if (train.cols() != dict.input_dim()) {
    throw ShapeError("training data has " + std::to_string(train.cols()) +
                     " columns, dictionary expects " + std::to_string(dict.input_dim()));
  }
  RieszProblemMoments out;
  out.m_hat = field_moments(func, dict, field);
  out.q_hat = second_moment(dict, train);
  out.n_field = field.rows();
  out.n_train = train.rows();
  return out;
}

RieszFit fit_riesz(const RieszProblemMoments& moments, double r, const SolverOptions& opts) {
  if (!moments.m_hat.allFinite()) throw NumericError("fit_riesz: non-finite M_hat");
  PenalizedQuadraticProblem problem(moments.m_hat, moments.q_hat, r);
  RieszFit fit;
  fit.diagnostics = penalized_quadratic(problem, opts);
  fit.rho = fit.diagnostics.coefficients;
  fit.penalty = r;
  return fit;
}

double evaluate_alpha(const RieszFit& fit, const Dictionary& dict, std::span<const double> x) {
  if (fit.rho.size() != dict.output_dim()) {
    throw ShapeError("evaluate_alpha: rho has length " + std::to_string(fit.rho.size()) +
                     ", dictionary has " + std::to_string(dict.output_dim()) + " terms");
  }
  return dict.expand(x).dot(fit.rho);
}

double evaluate_alpha(const RieszFit& fit, const DictionarySpec& spec, std::span<const double> x) {
  return evaluate_alpha(fit, Dictionary(spec), x);
}

Vector evaluate_alpha_batch(const RieszFit& fit, const Dictionary& dict, const Dataset& data) {
  if (fit.rho.size() != dict.output_dim()) throw ShapeError("evaluate_alpha_batch: rho length");
  if (data.rows() == 0) return Vector(0);
  return dict.expand_matrix(data) * fit.rho;
}

Vector pseudo_inverse_debias_coefficients(const DesignMatrix& design, const Vector& y,
                                          const Vector& gamma_hat, double rank_tol) {
  if (y.size() != design.rows() || gamma_hat.size() != design.rows()) {
    throw ShapeError("pseudo_inverse_debias_coefficients: y, gamma_hat and design rows differ");
  }
  if (!design.allFinite() || !y.allFinite() || !gamma_hat.allFinite()) {
    throw NumericError("pseudo_inverse_debias_coefficients: non-finite input");
  }
  if (design.rows() == 0) return Vector::Zero(design.cols());
  const auto svd = thin_svd(design);
  const Vector inv = pinv_singular(svd.singularValues(), rank_tol, 1);
  const Vector residual = y - gamma_hat;
  return svd.matrixV() * inv.cwiseProduct(svd.matrixU().transpose() * residual);
}

Vector pseudo_inverse_riesz_coefficients(const DesignMatrix& design, const Vector& m_hat,
                                         double rank_tol) {
  if (m_hat.size() != design.cols()) throw ShapeError("pseudo_inverse_riesz_coefficients: m_hat");
  if (design.rows() == 0) throw EmptySampleError("pseudo_inverse_riesz_coefficients: empty design");
  const auto svd = thin_svd(design);
  const Vector inv2 = pinv_singular(svd.singularValues(), rank_tol, 2);
  const double t = static_cast<double>(design.rows());
  return t * (svd.matrixV() * inv2.cwiseProduct(svd.matrixV().transpose() * m_hat));
}

}  // namespace dmlshift
