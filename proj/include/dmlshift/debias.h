#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dmlshift/featmap.h"
#include "dmlshift/learners.h"
#include "dmlshift/riesz.h"
#include "dmlshift/solvers.h"
#include "dmlshift/types.h"

namespace dmlshift {

// Clamp of the estimated debiasing function to [-tau_bar, tau_bar] used in
// variance estimation.
struct TrimSpec {
  enum class Rule { Fixed, Growth };

  Rule rule = Rule::Growth;
  // Fixed: tau_bar itself. Growth: c in tau_bar = c * N^(1/4).
  double value = 5.0;

  static TrimSpec fixed(double tau_bar) { return {Rule::Fixed, tau_bar}; }
  static TrimSpec growth(double c = 5.0) { return {Rule::Growth, c}; }

  void validate() const;
  double tau_bar(Index n_field) const;
};

double trim(double a, double tau_bar);

// Partition of training rows into L folds of near-equal size.
class FoldPlan {
 public:
  // Shuffles row indices with the seed and deals them round-robin, so fold
  // sizes differ by at most one.
  static FoldPlan make(Index num_rows, int num_folds, std::uint64_t seed);
  static FoldPlan from_assignments(std::vector<int> assignments, int num_folds);

  int num_folds() const noexcept { return num_folds_; }
  Index num_rows() const noexcept { return static_cast<Index>(assignments_.size()); }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<int>& assignments() const noexcept { return assignments_; }

  std::vector<Index> fold_rows(int fold) const;
  std::vector<Index> complement_rows(int fold) const;
  Index fold_size(int fold) const;

 private:
  int num_folds_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<int> assignments_;
};

// How the training-side variance term enters V_hat.
//   XiCorrected: V_l = s2_m + (N/T) s2_alpha   (default)
//   AsPrinted:   V_l = s2_m + s2_alpha
enum class VarianceMode { XiCorrected, AsPrinted };

struct DebiasOptions {
  double level = 0.95;
  VarianceMode variance_mode = VarianceMode::XiCorrected;
  SolverOptions riesz_solver;
};

// Per-fold ingredients of the estimator: m(Z_i, gamma_l) over all field
// rows, and alpha_l(X_t), Y_t - gamma_l(X_t) over the fold's rows.
struct FoldComponents {
  Vector m_values;
  Vector alpha_hat;
  Vector residuals;
};

struct FoldDiagnostics {
  double theta = 0.0;
  double plug_in = 0.0;
  double correction = 0.0;
  double v = 0.0;
  double s2_m = 0.0;
  double s2_alpha = 0.0;
  Index fold_size = 0;
};

struct DebiasResult {
  double theta_hat = 0.0;
  double plug_in = 0.0;
  double correction = 0.0;
  double v_hat = 0.0;          // per the selected VarianceMode
  double v_hat_printed = 0.0;  // always the AsPrinted variant
  double std_error = 0.0;      // sqrt(v_hat / N)
  double ci_low = 0.0;
  double ci_high = 0.0;
  double level = 0.95;
  double xi_hat = 0.0;         // N / T
  double tau_bar = 0.0;
  Index n_field = 0;
  Index n_train = 0;
  std::vector<FoldDiagnostics> per_fold;

  // Flat JSON object; numbers printed with 17 significant digits.
  std::string to_json() const;
};

// Combines fold components into theta_hat, V_hat and the confidence
// interval. Fold weights are T_l / T with T the total of fold sizes.
DebiasResult variance_and_ci(std::span<const FoldComponents> folds, const TrimSpec& trim,
                             const DebiasOptions& opts = {});

using LearnerFactory = std::function<std::unique_ptr<RegressionLearner>(
    const Dataset& x, const Vector& y, int fold)>;

// Cross-fit estimator: gamma_l and alpha_l are fit on the complement of
// fold l, M_hat on all field rows.
DebiasResult crossfit_estimate(const LinearFunctional& func, const DictionarySpec& spec,
                               const Dataset& x, const Vector& y, const Dataset& field,
                               const FoldPlan& plan, const LearnerFactory& factory,
                               double r_riesz, const TrimSpec& trim,
                               const DebiasOptions& opts = {});

// As above with the fold regressions already fit; learners[l] must have
// been trained on the complement of fold l.
DebiasResult crossfit_with_learners(const LinearFunctional& func, const DictionarySpec& spec,
                                    const Dataset& x, const Vector& y, const Dataset& field,
                                    const FoldPlan& plan,
                                    std::span<const RegressionLearner* const> learners,
                                    double r_riesz, const TrimSpec& trim,
                                    const DebiasOptions& opts = {});

struct TrainingSummaries {
  Matrix q_hat;               // (1/T) sum b(X_t) b(X_t)'
  Vector residual_crossprod;  // (1/T) sum b(X_t) (Y_t - gamma_hat(X_t))
  Index n_train = 0;
};

TrainingSummaries training_summaries(const DictionarySpec& spec, const Dataset& x,
                                     const Vector& y, const Vector& gamma_hat);

struct SummaryEstimate {
  double theta_hat = 0.0;
  double plug_in = 0.0;
  double correction = 0.0;
  RieszFit riesz;
};

// The no-cross-fit point estimate from training summaries and field data
// alone.
SummaryEstimate estimate_from_summaries(const LinearFunctional& func, const DictionarySpec& spec,
                                        const TrainingSummaries& summaries,
                                        const RegressionLearner& gamma, const Dataset& field,
                                        double r_riesz, const SolverOptions& riesz_solver = {});

// No cross-fitting: gamma and alpha both use all training rows.
DebiasResult nocrossfit_estimate(const LinearFunctional& func, const DictionarySpec& spec,
                                 const Dataset& x, const Vector& y, const Dataset& field,
                                 const RegressionLearner& gamma, double r_riesz,
                                 const TrimSpec& trim, const DebiasOptions& opts = {});

// Lasso gamma on the same dictionary with penalty r_gamma.
DebiasResult nocrossfit_estimate(const LinearFunctional& func, const DictionarySpec& spec,
                                 const Dataset& x, const Vector& y, const Dataset& field,
                                 double r_gamma, double r_riesz, const TrimSpec& trim,
                                 const DebiasOptions& opts = {},
                                 const LassoLearnerOptions& lasso = {});

// Second-sample variant: Q_hat from q_train, residuals from an independent
// evaluation sample (x_eval, y_eval) drawn from the training distribution.
DebiasResult sample_split_estimate(const LinearFunctional& func, const DictionarySpec& spec,
                                   const Dataset& q_train, const Dataset& x_eval,
                                   const Vector& y_eval, const Dataset& field,
                                   const RegressionLearner& gamma, double r_riesz,
                                   const TrimSpec& trim, const DebiasOptions& opts = {});

// Generalized-inverse debiasing: correction = M_hat' [B'B]^+ B'(y - gamma_hat).
DebiasResult pseudo_inverse_estimate(const LinearFunctional& func, const DictionarySpec& spec,
                                     const Dataset& x, const Vector& y, const Dataset& field,
                                     const RegressionLearner& gamma, const TrimSpec& trim,
                                     const DebiasOptions& opts = {}, double rank_tol = 1e-10);

}  // namespace dmlshift
