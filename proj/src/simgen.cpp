#include "dmlshift/simgen.h"

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmlshift/errors.h"

namespace dmlshift {

namespace {

void draw_covariate_row(const SimSpec& spec, bool shifted, Rng& stream, std::span<double> out) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool uniform = unit(stream) < spec.uniform_weight;
  if (uniform) {
    std::uniform_real_distribution<double> wide(-spec.uniform_half_width, spec.uniform_half_width);
    for (double& v : out) v = wide(stream);
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t k = 0; k < out.size(); ++k) {
      out[k] = normal(stream) + (shifted ? spec.shift(static_cast<Index>(k)) : 0.0);
    }
  }
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

void SimKnobs::validate() const {
  if (dim < 1) throw ConfigError("SimKnobs: dim must be >= 1");
  if (order < 1) throw ConfigError("SimKnobs: order must be >= 1");
  if (!(sparsity >= 0.0 && sparsity <= 1.0)) throw ConfigError("SimKnobs: sparsity in [0, 1]");
  if (!(noise_sd > 0.0)) throw ConfigError("SimKnobs: noise_sd must be > 0");
  if (!(uniform_weight >= 0.0 && uniform_weight < 1.0)) {
    throw ConfigError("SimKnobs: uniform_weight must lie in [0, 1)");
  }
  if (!(uniform_half_width > 0.0)) throw ConfigError("SimKnobs: uniform_half_width must be > 0");
  if (pilot_size < 2) throw ConfigError("SimKnobs: pilot_size must be >= 2");
  if (!(target_sd > 0.0)) throw ConfigError("SimKnobs: target_sd must be > 0");
}

void SimSpec::validate() const {
  if (dim < 1 || order < 1) throw ConfigError("SimSpec: dim and order must be >= 1");
  if (!(noise_sd > 0.0)) throw ConfigError("SimSpec: noise_sd must be > 0");
  if (!(uniform_weight >= 0.0 && uniform_weight < 1.0)) {
    throw ConfigError("SimSpec: uniform_weight must lie in [0, 1)");
  }
  if (alpha.size() != order + 1) throw ConfigError("SimSpec: alpha must have order + 1 entries");
  if (beta.rows() != order || beta.cols() != dim) throw ConfigError("SimSpec: beta must be order x dim");
  if (shift.size() != dim) throw ConfigError("SimSpec: shift must have dim entries");
}

std::string SimSpec::to_json() const {
  nlohmann::json j;
  j["dim"] = dim;
  j["order"] = order;
  j["alpha"] = to_std(alpha);
  nlohmann::json rows = nlohmann::json::array();
  for (Index q = 0; q < beta.rows(); ++q) rows.push_back(to_std(beta.row(q).transpose()));
  j["beta"] = rows;
  j["sparsity"] = sparsity;
  j["dim_scale"] = to_std(dim_scale);
  j["output_scale"] = output_scale;
  j["noise_sd"] = noise_sd;
  j["shift"] = to_std(shift);
  j["uniform_weight"] = uniform_weight;
  j["uniform_half_width"] = uniform_half_width;
  j["seed"] = seed;
  return j.dump();
}

SimSpec SimSpec::from_json(const std::string& text) {
  SimSpec s;
  try {
    const auto j = nlohmann::json::parse(text);
    s.dim = j.at("dim").get<int>();
    s.order = j.at("order").get<int>();
    s.alpha = from_std(j.at("alpha").get<std::vector<double>>());
    const auto rows = j.at("beta").get<std::vector<std::vector<double>>>();
    s.beta = Matrix::Zero(static_cast<Index>(rows.size()), s.dim);
    for (std::size_t q = 0; q < rows.size(); ++q) {
      if (static_cast<int>(rows[q].size()) != s.dim) throw ConfigError("SimSpec: ragged beta");
      for (int k = 0; k < s.dim; ++k) s.beta(static_cast<Index>(q), k) = rows[q][static_cast<std::size_t>(k)];
    }
    s.sparsity = j.at("sparsity").get<double>();
    s.dim_scale = from_std(j.at("dim_scale").get<std::vector<double>>());
    s.output_scale = j.at("output_scale").get<double>();
    s.noise_sd = j.at("noise_sd").get<double>();
    s.shift = from_std(j.at("shift").get<std::vector<double>>());
    s.uniform_weight = j.at("uniform_weight").get<double>();
    s.uniform_half_width = j.at("uniform_half_width").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("SimSpec::from_json: ") + e.what());
  }
  s.validate();
  return s;
}

SimSpec random_spec(std::uint64_t master_seed, const SimKnobs& knobs) {
  knobs.validate();
  Rng rng = make_stream(master_seed, StreamRole::Spec);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SimSpec s;
  s.dim = knobs.dim;
  s.order = knobs.order;
  s.seed = master_seed;
  s.sparsity = knobs.sparsity;
  s.noise_sd = knobs.noise_sd;
  s.uniform_weight = knobs.uniform_weight;
  s.uniform_half_width = knobs.uniform_half_width;
  const double shift =
      knobs.shift * (knobs.shift_units == ShiftUnits::NoiseSd ? knobs.noise_sd : 1.0);
  s.shift = Vector::Constant(knobs.dim, shift);

  s.alpha.resize(knobs.order + 1);
  for (Index q = 0; q <= knobs.order; ++q) s.alpha(q) = normal(rng);
  s.beta.resize(knobs.order, knobs.dim);
  for (Index q = 0; q < knobs.order; ++q) {
    for (Index k = 0; k < knobs.dim; ++k) {
      const double value = normal(rng);
      const bool zeroed = unit(rng) < knobs.sparsity;
      s.beta(q, k) = zeroed ? 0.0 : value;
    }
  }
  s.dim_scale = Vector::Ones(knobs.dim);
  if (knobs.dim > 1) {
    s.dim_scale(0) = knobs.first_dim_scale;
    s.dim_scale(knobs.dim - 1) = knobs.last_dim_scale;
  }
  for (Index k = 0; k < knobs.dim; ++k) s.beta.col(k) *= s.dim_scale(k);

  // Calibrate the output scale on an unshifted pilot with its own stream.
  s.output_scale = 1.0;
  Rng pilot_rng = make_stream(master_seed, StreamRole::Pilot);
  std::vector<double> row(static_cast<std::size_t>(knobs.dim));
  double mean = 0.0, m2 = 0.0;
  for (Index i = 0; i < knobs.pilot_size; ++i) {
    draw_covariate_row(s, false, pilot_rng, row);
    const double g = eval_g(s, row);
    const double delta = g - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (g - mean);
  }
  const double sd = std::sqrt(m2 / static_cast<double>(knobs.pilot_size - 1));
  if (sd > 0.0 && std::isfinite(sd)) s.output_scale = knobs.target_sd / sd;
  return s;
}

double eval_g(const SimSpec& spec, std::span<const double> u) {
  if (static_cast<int>(u.size()) != spec.dim) {
    throw ShapeError("eval_g: expected input of length " + std::to_string(spec.dim));
  }
  // Inner sums first, then powers, then the alpha-weighted sum.
  double total = spec.alpha(0);
  for (int q = 1; q <= spec.order; ++q) {
    double inner = 0.0;
    for (int k = 0; k < spec.dim; ++k) inner += spec.beta(q - 1, k) * u[static_cast<std::size_t>(k)];
    double power = 1.0;
    for (int p = 0; p < q; ++p) power *= inner;
    total += spec.alpha(q) * power;
  }
  return spec.output_scale * total;
}

Vector eval_g_batch(const SimSpec& spec, const Dataset& u) {
  Vector out(u.rows());
  for (Index i = 0; i < u.rows(); ++i) {
    out(i) = eval_g(spec, {u.data() + i * u.cols(), static_cast<std::size_t>(u.cols())});
  }
  return out;
}

Dataset draw_covariates(const SimSpec& spec, Index n, bool shifted, Rng& stream) {
  if (n < 0) throw ConfigError("draw_covariates: n must be >= 0");
  Dataset out(n, spec.dim);
  for (Index i = 0; i < n; ++i) {
    draw_covariate_row(spec, shifted, stream,
                       {out.data() + i * spec.dim, static_cast<std::size_t>(spec.dim)});
  }
  return out;
}

Vector draw_outcomes(const SimSpec& spec, const Dataset& x, Rng& stream) {
  if (x.rows() > 0 && x.cols() != spec.dim) throw ShapeError("draw_outcomes: column mismatch");
  std::normal_distribution<double> noise(0.0, spec.noise_sd);
  Vector y = eval_g_batch(spec, x);
  for (Index i = 0; i < y.size(); ++i) y(i) += noise(stream);
  return y;
}

OracleTheta oracle_theta(const SimSpec& spec, Index n_oracle, Rng& stream) {
  if (n_oracle < 10000) throw ConfigError("oracle_theta: n_oracle must be >= 10000");
  std::normal_distribution<double> noise(0.0, spec.noise_sd);
  std::vector<double> row(static_cast<std::size_t>(spec.dim));
  double mean = 0.0, m2 = 0.0;
  for (Index i = 0; i < n_oracle; ++i) {
    draw_covariate_row(spec, true, stream, row);
    const double v = eval_g(spec, row) + noise(stream);
    const double delta = v - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (v - mean);
  }
  const double var = m2 / static_cast<double>(n_oracle - 1);
  return {mean, std::sqrt(var / static_cast<double>(n_oracle))};
}

SimSample draw_sample(const SimSpec& spec, const SampleSizes& sizes,
                      std::uint64_t replication_seed, const OracleTheta& truth) {
  spec.validate();
  SimSample s;
  Rng train = make_stream(replication_seed, StreamRole::Train);
  s.x_train = draw_covariates(spec, sizes.n_train, false, train);
  s.y_train = draw_outcomes(spec, s.x_train, train);
  Rng validate = make_stream(replication_seed, StreamRole::Validate);
  s.v_validate = draw_covariates(spec, sizes.n_validate, false, validate);
  s.y_validate = draw_outcomes(spec, s.v_validate, validate);
  Rng field = make_stream(replication_seed, StreamRole::Field);
  s.z_field = draw_covariates(spec, sizes.n_field, true, field);
  s.truth_theta = truth.value;
  s.truth_mc_se = truth.mc_se;
  return s;
}

}  // namespace dmlshift
