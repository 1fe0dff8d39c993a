#include "dmlshift/learners.h"

#include <string>

#include "dmlshift/errors.h"

namespace dmlshift {

Vector RegressionLearner::predict_batch(const Dataset& data) const {
  if (data.rows() > 0 && data.cols() != input_dim()) {
    throw ShapeError("predict_batch: dataset has " + std::to_string(data.cols()) +
                     " columns, learner expects " + std::to_string(input_dim()));
  }
  Vector out(data.rows());
  for (Index i = 0; i < data.rows(); ++i) out(i) = predict(row_span(data, i));
  return out;
}

LassoLearner::LassoLearner(Dictionary dict, LassoFit fit)
    : dict_(std::move(dict)), fit_(std::move(fit)) {
  if (fit_.coefficients.size() != dict_.output_dim()) {
    throw ShapeError("LassoLearner: coefficient length does not match dictionary");
  }
}

double LassoLearner::predict(std::span<const double> x) const {
  return dict_.expand(x).dot(fit_.coefficients);
}

Vector LassoLearner::predict_batch(const Dataset& data) const {
  if (data.rows() == 0) return Vector(0);
  return dict_.expand_matrix(data) * fit_.coefficients;
}

std::unique_ptr<RegressionLearner> LassoLearner::clone() const {
  return std::make_unique<LassoLearner>(*this);
}

LassoLearner fit_lasso_learner(const DictionarySpec& spec, const Dataset& x, const Vector& y,
                               double r, const LassoLearnerOptions& opts) {
  Dictionary dict(spec);
  if (x.rows() != y.size()) {
    throw ShapeError("fit_lasso_learner: x has " + std::to_string(x.rows()) +
                     " rows but y has length " + std::to_string(y.size()));
  }
  const DesignMatrix design = dict.expand_matrix(x);
  SolverOptions solver = opts.solver;
  if (!opts.penalize_intercept && spec.include_intercept) {
    if (solver.penalty_weights.size() == 0) solver.penalty_weights = Vector::Ones(dict.output_dim());
    solver.penalty_weights(0) = 0.0;
  }
  LassoFit fit = lasso_regression(design, y, r, solver);
  return LassoLearner(std::move(dict), std::move(fit));
}

double FunctionLearner::predict(std::span<const double> x) const {
  if (static_cast<Index>(x.size()) != input_dim_) {
    throw ShapeError("FunctionLearner: expected input of length " + std::to_string(input_dim_));
  }
  return fn_(x);
}

std::unique_ptr<RegressionLearner> FunctionLearner::clone() const {
  return std::make_unique<FunctionLearner>(*this);
}

}  // namespace dmlshift
