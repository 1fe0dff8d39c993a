#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dmlshift/featmap.h"
#include "dmlshift/solvers.h"
#include "dmlshift/types.h"

namespace dmlshift {

// A fitted regression gamma_hat(x). Implementations are immutable once
// fitted, so predict/predict_batch may be called concurrently.
class RegressionLearner {
 public:
  virtual ~RegressionLearner() = default;

  virtual Index input_dim() const = 0;
  virtual double predict(std::span<const double> x) const = 0;
  virtual Vector predict_batch(const Dataset& data) const;
  virtual std::unique_ptr<RegressionLearner> clone() const = 0;
};

struct LassoLearnerOptions {
  SolverOptions solver;
  bool penalize_intercept = true;
};

class LassoLearner final : public RegressionLearner {
 public:
  LassoLearner(Dictionary dict, LassoFit fit);

  Index input_dim() const override { return dict_.input_dim(); }
  double predict(std::span<const double> x) const override;
  Vector predict_batch(const Dataset& data) const override;
  std::unique_ptr<RegressionLearner> clone() const override;

  const Dictionary& dictionary() const noexcept { return dict_; }
  const LassoFit& fit() const noexcept { return fit_; }
  const Vector& coefficients() const noexcept { return fit_.coefficients; }

 private:
  Dictionary dict_;
  LassoFit fit_;
};

LassoLearner fit_lasso_learner(const DictionarySpec& spec, const Dataset& x, const Vector& y,
                               double r, const LassoLearnerOptions& opts = {});

// Wraps an arbitrary function, e.g. a known gamma_0 injected as an oracle.
class FunctionLearner final : public RegressionLearner {
 public:
  using Fn = std::function<double(std::span<const double>)>;
  FunctionLearner(Index input_dim, Fn fn) : input_dim_(input_dim), fn_(std::move(fn)) {}

  Index input_dim() const override { return input_dim_; }
  double predict(std::span<const double> x) const override;
  std::unique_ptr<RegressionLearner> clone() const override;

 private:
  Index input_dim_;
  Fn fn_;
};

struct MlpConfig {
  std::vector<int> hidden_layers{32, 32, 32, 32};
  double learn_rate = 0.01;
  int batch_size = 1024;
  int max_epochs = 500;
  double l2_penalty = 0.0002;
  std::uint64_t seed = 0;

  void validate() const;
};

/**
 * Fully connected ReLU network with a scalar linear output.
 *
 * Loss on a batch of n rows:
 *   (1/n) sum_i (f(x_i) - y_i)^2 + (l2/2) * sum of squared weights
 * Biases are not penalized.
 */
class Mlp {
 public:
  Mlp() = default;
  Mlp(Index input_dim, const std::vector<int>& hidden, std::mt19937_64& rng);

  Index input_dim() const noexcept { return input_dim_; }
  Index num_parameters() const;

  // Predictions for the rows of x.
  Vector forward(const Dataset& x) const;
  double predict(std::span<const double> x) const;

  // Loss and its gradient with respect to the flat parameter vector.
  double loss_and_gradient(const Dataset& x, const Vector& y, double l2, Vector* gradient) const;
  double loss(const Dataset& x, const Vector& y, double l2) const;

  // One SGD step on the given rows.
  void sgd_step(const Dataset& x, const Vector& y, double l2, double learn_rate);

  // Flat layout: for each layer, weights (row-major, out x in) then biases.
  Vector parameters() const;
  void set_parameters(const Vector& flat);
  double weight_norm_squared() const;

  const std::vector<int>& layer_sizes() const noexcept { return sizes_; }

 private:
  struct Layer {
    Matrix weights;  // out x in
    Vector bias;     // out
  };

  struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> bias;
  };

  double backprop(const Dataset& x, const Vector& y, double l2, Gradients* grads) const;

  Index input_dim_ = 0;
  std::vector<int> sizes_;  // input, hidden..., 1
  std::vector<Layer> layers_;
};

class MlpLearner final : public RegressionLearner {
 public:
  MlpLearner(MlpConfig cfg, Index input_dim);

  Index input_dim() const override { return net_.input_dim(); }
  double predict(std::span<const double> x) const override;
  Vector predict_batch(const Dataset& data) const override;
  std::unique_ptr<RegressionLearner> clone() const override;

  // Continues training for `epochs` more epochs. Throws
  // TrainingDivergenceError when the full-data loss becomes non-finite.
  void train(const Dataset& x, const Vector& y, int epochs);

  const MlpConfig& config() const noexcept { return cfg_; }
  const Mlp& network() const noexcept { return net_; }
  int epochs_trained() const noexcept { return epochs_trained_; }
  const std::vector<double>& loss_history() const noexcept { return loss_history_; }

  std::string to_json() const;
  static MlpLearner from_json(const std::string& text);

 private:
  MlpConfig cfg_;
  Mlp net_;
  std::mt19937_64 rng_;
  int epochs_trained_ = 0;
  std::vector<double> loss_history_;
};

// Requires at least batch_size rows (FoldSizeError otherwise) and
// epochs <= cfg.max_epochs.
MlpLearner fit_mlp_learner(const MlpConfig& cfg, const Dataset& x, const Vector& y, int epochs);

}  // namespace dmlshift
