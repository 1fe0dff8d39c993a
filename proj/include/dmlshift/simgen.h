#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "dmlshift/random.h"
#include "dmlshift/types.h"

namespace dmlshift {

// Unit of the covariate mean shift for the field sample.
enum class ShiftUnits {
  CovariateSd,  // shift * 1 (covariates have unit sd)
  NoiseSd,      // shift * noise_sd
};

// Knobs for drawing a random polynomial specification.
struct SimKnobs {
  int dim = 6;     // K
  int order = 3;   // Q
  double sparsity = 0.6;
  double first_dim_scale = 1.71;
  double last_dim_scale = 0.29;
  double noise_sd = 0.1;
  double shift = 1.1;
  ShiftUnits shift_units = ShiftUnits::CovariateSd;
  double uniform_weight = 0.05;
  double uniform_half_width = 5.0;
  Index pilot_size = 100000;
  // Pilot standard deviation of the scaled polynomial.
  double target_sd = 0.5;

  void validate() const;
};

/**
 * One polynomial data-generating process
 *
 *   g(u) = output_scale * (alpha_0 + sum_{q=1..Q} alpha_q (sum_k beta_qk u_k)^q)
 *   Y = g(X) + eps,  eps ~ N(0, noise_sd^2)
 *
 * Covariates are a mixture: with probability uniform_weight every
 * coordinate is Uniform[-w, w], otherwise Normal(mean, 1) with mean 0 for
 * training/validation rows and `shift` for field rows.
 *
 * `beta` already includes the per-dimension multipliers in `dim_scale`.
 */
struct SimSpec {
  int dim = 1;
  int order = 1;
  Vector alpha;  // length order + 1
  Matrix beta;   // order x dim
  double sparsity = 0.0;
  Vector dim_scale;
  double output_scale = 1.0;
  double noise_sd = 0.1;
  Vector shift;  // length dim
  double uniform_weight = 0.0;
  double uniform_half_width = 5.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static SimSpec from_json(const std::string& text);
};

SimSpec random_spec(std::uint64_t master_seed, const SimKnobs& knobs = {});

double eval_g(const SimSpec& spec, std::span<const double> u);
Vector eval_g_batch(const SimSpec& spec, const Dataset& u);

Dataset draw_covariates(const SimSpec& spec, Index n, bool shifted, Rng& stream);
Vector draw_outcomes(const SimSpec& spec, const Dataset& x, Rng& stream);

struct OracleTheta {
  double value = 0.0;
  double mc_se = 0.0;
};

// Monte Carlo estimate of E[g(Z) + eps] over the shifted distribution.
OracleTheta oracle_theta(const SimSpec& spec, Index n_oracle, Rng& stream);

struct SampleSizes {
  Index n_train = 10000;
  Index n_validate = 10000;
  Index n_field = 10000;
};

struct SimSample {
  Dataset x_train;
  Vector y_train;
  Dataset v_validate;
  Vector y_validate;
  Dataset z_field;
  double truth_theta = 0.0;
  double truth_mc_se = 0.0;
};

// Draws every role from its own stream derived from (replication_seed, role).
SimSample draw_sample(const SimSpec& spec, const SampleSizes& sizes,
                      std::uint64_t replication_seed, const OracleTheta& truth);

}  // namespace dmlshift
