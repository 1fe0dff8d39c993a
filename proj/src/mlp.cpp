#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dmlshift/errors.h"
#include "dmlshift/learners.h"

namespace dmlshift {

namespace {

constexpr const char* kModelFormat = "dmlshift.mlp";
constexpr int kModelVersion = 1;

}  // namespace

void MlpConfig::validate() const {
  if (hidden_layers.empty()) throw ConfigError("MlpConfig: hidden_layers must be nonempty");
  for (int w : hidden_layers) {
    if (w <= 0) throw ConfigError("MlpConfig: layer widths must be positive");
  }
  if (!(learn_rate > 0.0)) throw ConfigError("MlpConfig: learn_rate must be positive");
  if (batch_size <= 0) throw ConfigError("MlpConfig: batch_size must be positive");
  if (max_epochs <= 0) throw ConfigError("MlpConfig: max_epochs must be positive");
  if (!(l2_penalty >= 0.0)) throw ConfigError("MlpConfig: l2_penalty must be >= 0");
}

Mlp::Mlp(Index input_dim, const std::vector<int>& hidden, std::mt19937_64& rng)
    : input_dim_(input_dim) {
  if (input_dim < 1) throw ShapeError("Mlp: input_dim must be >= 1");
  sizes_.push_back(static_cast<int>(input_dim));
  sizes_.insert(sizes_.end(), hidden.begin(), hidden.end());
  sizes_.push_back(1);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int fan_in = sizes_[l];
    const int fan_out = sizes_[l + 1];
    // He-style uniform initialization.
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> init(-limit, limit);
    Layer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    for (int o = 0; o < fan_out; ++o) {
      for (int i = 0; i < fan_in; ++i) layer.weights(o, i) = init(rng);
    }
    layers_.push_back(std::move(layer));
  }
}

Index Mlp::num_parameters() const {
  Index n = 0;
  for (const auto& layer : layers_) n += layer.weights.size() + layer.bias.size();
  return n;
}

Vector Mlp::forward(const Dataset& x) const {
  if (x.rows() == 0) return Vector(0);
  if (x.cols() != input_dim_) {
    throw ShapeError("Mlp::forward: expected " + std::to_string(input_dim_) + " columns, got " +
                     std::to_string(x.cols()));
  }
  Matrix a = x.transpose();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = layers_[l].weights * a;
    z.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) {
      a = z.cwiseMax(0.0);
    } else {
      a = std::move(z);
    }
  }
  return a.row(0).transpose();
}

double Mlp::predict(std::span<const double> x) const {
  if (static_cast<Index>(x.size()) != input_dim_) {
    throw ShapeError("Mlp::predict: expected input of length " + std::to_string(input_dim_));
  }
  Dataset row(1, input_dim_);
  for (Index k = 0; k < input_dim_; ++k) row(0, k) = x[static_cast<std::size_t>(k)];
  return forward(row)(0);
}

double Mlp::backprop(const Dataset& x, const Vector& y, double l2, Gradients* grads) const {
  const Index n = x.rows();
  if (n == 0 || y.size() != n) throw ShapeError("Mlp: batch/target size mismatch");
  if (x.cols() != input_dim_) throw ShapeError("Mlp: batch has wrong column count");

  std::vector<Matrix> acts;
  acts.reserve(layers_.size() + 1);
  acts.push_back(x.transpose());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = layers_[l].weights * acts.back();
    z.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) z = z.cwiseMax(0.0);
    acts.push_back(std::move(z));
  }
  const Eigen::RowVectorXd diff = acts.back().row(0) - y.transpose();
  const double nd = static_cast<double>(n);
  double penalty = 0.0;
  for (const auto& layer : layers_) penalty += layer.weights.squaredNorm();
  const double value = diff.squaredNorm() / nd + 0.5 * l2 * penalty;
  if (grads == nullptr) return value;

  grads->weights.resize(layers_.size());
  grads->bias.resize(layers_.size());
  Matrix delta = (2.0 / nd) * diff;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    grads->weights[l].noalias() = delta * acts[l].transpose();
    grads->weights[l] += l2 * layers_[l].weights;
    grads->bias[l] = delta.rowwise().sum();
    if (l > 0) {
      Matrix back = layers_[l].weights.transpose() * delta;
      delta = back.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
    }
  }
  return value;
}

double Mlp::loss_and_gradient(const Dataset& x, const Vector& y, double l2,
                              Vector* gradient) const {
  if (gradient == nullptr) return backprop(x, y, l2, nullptr);
  Gradients grads;
  const double value = backprop(x, y, l2, &grads);
  gradient->resize(num_parameters());
  Index pos = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Matrix& gw = grads.weights[l];
    for (Index o = 0; o < gw.rows(); ++o) {
      for (Index i = 0; i < gw.cols(); ++i) (*gradient)(pos++) = gw(o, i);
    }
    for (Index o = 0; o < grads.bias[l].size(); ++o) (*gradient)(pos++) = grads.bias[l](o);
  }
  return value;
}

double Mlp::loss(const Dataset& x, const Vector& y, double l2) const {
  return backprop(x, y, l2, nullptr);
}

void Mlp::sgd_step(const Dataset& x, const Vector& y, double l2, double learn_rate) {
  Gradients grads;
  backprop(x, y, l2, &grads);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].weights -= learn_rate * grads.weights[l];
    layers_[l].bias -= learn_rate * grads.bias[l];
  }
}

Vector Mlp::parameters() const {
  Vector flat(num_parameters());
  Index pos = 0;
  for (const auto& layer : layers_) {
    for (Index o = 0; o < layer.weights.rows(); ++o) {
      for (Index i = 0; i < layer.weights.cols(); ++i) flat(pos++) = layer.weights(o, i);
    }
    for (Index o = 0; o < layer.bias.size(); ++o) flat(pos++) = layer.bias(o);
  }
  return flat;
}

void Mlp::set_parameters(const Vector& flat) {
  if (flat.size() != num_parameters()) {
    throw ShapeError("Mlp::set_parameters: expected " + std::to_string(num_parameters()) +
                     " values, got " + std::to_string(flat.size()));
  }
  Index pos = 0;
  for (auto& layer : layers_) {
    for (Index o = 0; o < layer.weights.rows(); ++o) {
      for (Index i = 0; i < layer.weights.cols(); ++i) layer.weights(o, i) = flat(pos++);
    }
    for (Index o = 0; o < layer.bias.size(); ++o) layer.bias(o) = flat(pos++);
  }
}

double Mlp::weight_norm_squared() const {
  double total = 0.0;
  for (const auto& layer : layers_) total += layer.weights.squaredNorm();
  return total;
}

MlpLearner::MlpLearner(MlpConfig cfg, Index input_dim) : cfg_(std::move(cfg)), rng_(cfg_.seed) {
  cfg_.validate();
  net_ = Mlp(input_dim, cfg_.hidden_layers, rng_);
}

double MlpLearner::predict(std::span<const double> x) const { return net_.predict(x); }

Vector MlpLearner::predict_batch(const Dataset& data) const { return net_.forward(data); }

std::unique_ptr<RegressionLearner> MlpLearner::clone() const {
  return std::make_unique<MlpLearner>(*this);
}

void MlpLearner::train(const Dataset& x, const Vector& y, int epochs) {
  if (x.rows() != y.size()) throw ShapeError("MlpLearner::train: x/y size mismatch");
  if (x.rows() == 0) throw EmptySampleError("MlpLearner::train: no observations");
  if (epochs < 0) throw ConfigError("MlpLearner::train: epochs must be >= 0");
  if (epochs_trained_ + epochs > cfg_.max_epochs) {
    throw ConfigError("MlpLearner::train: would exceed max_epochs = " +
                      std::to_string(cfg_.max_epochs));
  }
  const Index n = x.rows();
  const Index batch = std::min<Index>(cfg_.batch_size, n);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  Dataset xb(batch, x.cols());
  Vector yb(batch);

  for (int e = 0; e < epochs; ++e) {
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng_);
    for (Index start = 0; start < n; start += batch) {
      const Index count = std::min(batch, n - start);
      if (xb.rows() != count) {
        xb.resize(count, x.cols());
        yb.resize(count);
      }
      for (Index k = 0; k < count; ++k) {
        const Index src = perm[static_cast<std::size_t>(start + k)];
        xb.row(k) = x.row(src);
        yb(k) = y(src);
      }
      net_.sgd_step(xb, yb, cfg_.l2_penalty, cfg_.learn_rate);
    }
    ++epochs_trained_;
    const double full = net_.loss(x, y, cfg_.l2_penalty);
    if (!std::isfinite(full)) {
      throw TrainingDivergenceError(epochs_trained_, "MLP training diverged at epoch " +
                                                         std::to_string(epochs_trained_));
    }
    loss_history_.push_back(full);
  }
}

std::string MlpLearner::to_json() const {
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["config"] = {{"hidden_layers", cfg_.hidden_layers}, {"learn_rate", cfg_.learn_rate},
                 {"batch_size", cfg_.batch_size},       {"max_epochs", cfg_.max_epochs},
                 {"l2_penalty", cfg_.l2_penalty},       {"seed", cfg_.seed}};
  j["input_dim"] = net_.input_dim();
  j["epochs_trained"] = epochs_trained_;
  j["loss_history"] = loss_history_;
  std::ostringstream rng_state;
  rng_state << rng_;
  j["rng_state"] = rng_state.str();
  const Vector p = net_.parameters();
  j["parameters"] = std::vector<double>(p.data(), p.data() + p.size());
  return j.dump();
}

MlpLearner MlpLearner::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("MlpLearner::from_json: ") + e.what());
  }
  if (j.value("format", "") != kModelFormat || j.value("version", 0) != kModelVersion) {
    throw IoError("MlpLearner::from_json: unsupported format or version");
  }
  MlpConfig cfg;
  const auto& c = j.at("config");
  cfg.hidden_layers = c.at("hidden_layers").get<std::vector<int>>();
  cfg.learn_rate = c.at("learn_rate").get<double>();
  cfg.batch_size = c.at("batch_size").get<int>();
  cfg.max_epochs = c.at("max_epochs").get<int>();
  cfg.l2_penalty = c.at("l2_penalty").get<double>();
  cfg.seed = c.at("seed").get<std::uint64_t>();
  MlpLearner learner(cfg, j.at("input_dim").get<Index>());
  const auto params = j.at("parameters").get<std::vector<double>>();
  learner.net_.set_parameters(Eigen::Map<const Vector>(params.data(), static_cast<Index>(params.size())));
  learner.epochs_trained_ = j.at("epochs_trained").get<int>();
  learner.loss_history_ = j.at("loss_history").get<std::vector<double>>();
  std::istringstream rng_state(j.at("rng_state").get<std::string>());
  rng_state >> learner.rng_;
  return learner;
}

MlpLearner fit_mlp_learner(const MlpConfig& cfg, const Dataset& x, const Vector& y, int epochs) {
  cfg.validate();
  if (epochs < 0 || epochs > cfg.max_epochs) {
    throw ConfigError("fit_mlp_learner: epochs must be in [0, max_epochs]");
  }
  if (x.rows() < cfg.batch_size) {
    throw FoldSizeError("fit_mlp_learner: " + std::to_string(x.rows()) +
                        " training rows is fewer than batch_size " +
                        std::to_string(cfg.batch_size));
  }
  MlpLearner learner(cfg, x.cols());
  learner.train(x, y, epochs);
  return learner;
}

}  // namespace dmlshift
