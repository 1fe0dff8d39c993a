#include "dmlshift/featmap.h"

#include <map>

#include "dmlshift/errors.h"

namespace dmlshift {

namespace {

void enumerate_degree(int num_vars, int degree, int start, std::vector<int>& prefix,
                      std::vector<std::vector<int>>& out) {
  if (static_cast<int>(prefix.size()) == degree) {
    out.push_back(prefix);
    return;
  }
  for (int v = start; v < num_vars; ++v) {
    prefix.push_back(v);
    enumerate_degree(num_vars, degree, v, prefix, out);
    prefix.pop_back();
  }
}

}  // namespace

void DictionarySpec::validate() const {
  if (input_dim < 1) {
    throw ConfigError("DictionarySpec: input_dim must be >= 1, got " +
                     std::to_string(input_dim));
  }
  if (max_order < 1) {
    throw ConfigError("DictionarySpec: max_order must be >= 1, got " +
                     std::to_string(max_order));
  }
}

Index DictionarySpec::output_dim() const {
  validate();
  // C(K + d, d), computed incrementally; each partial product is an integer.
  Index count = 1;
  for (int i = 1; i <= max_order; ++i) {
    count = count * (input_dim + i) / i;
  }
  return include_intercept ? count : count - 1;
}

Dictionary::Dictionary(DictionarySpec spec) : spec_(spec) {
  spec_.validate();
  terms_.push_back({});
  for (int d = 1; d <= spec_.max_order; ++d) {
    std::vector<int> prefix;
    enumerate_degree(spec_.input_dim, d, 0, prefix, terms_);
  }

  std::map<std::vector<int>, int> position;
  for (std::size_t t = 0; t < terms_.size(); ++t) {
    position.emplace(terms_[t], static_cast<int>(t));
  }
  nodes_.reserve(terms_.size());
  nodes_.push_back({-1, -1});
  for (std::size_t t = 1; t < terms_.size(); ++t) {
    std::vector<int> parent(terms_[t].begin(), terms_[t].end() - 1);
    nodes_.push_back({position.at(parent), terms_[t].back()});
  }

  output_dim_ = static_cast<Index>(terms_.size()) - (spec_.include_intercept ? 0 : 1);
}

const std::vector<int>& Dictionary::term(Index j) const {
  if (j < 0 || j >= output_dim_) {
    throw ShapeError("Dictionary::term: index " + std::to_string(j) + " out of range");
  }
  return terms_[static_cast<std::size_t>(j + (spec_.include_intercept ? 0 : 1))];
}

std::string Dictionary::term_name(Index j) const {
  const auto& vars = term(j);
  if (vars.empty()) return "1";
  std::string name;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (i > 0) name += '*';
    name += 'x' + std::to_string(vars[i] + 1);
  }
  return name;
}

void Dictionary::expand_into(std::span<const double> x, std::span<double> out) const {
  if (static_cast<Index>(x.size()) != spec_.input_dim) {
    throw ShapeError("Dictionary::expand: expected input of length " +
                     std::to_string(spec_.input_dim) + ", got " + std::to_string(x.size()));
  }
  if (static_cast<Index>(out.size()) != output_dim_) {
    throw ShapeError("Dictionary::expand: output buffer has wrong length");
  }
  // Without an intercept the constant slot is not stored, so parents that
  // point at it read 1.0 instead.
  const int offset = spec_.include_intercept ? 0 : 1;
  if (spec_.include_intercept) out[0] = 1.0;
  for (std::size_t t = 1; t < nodes_.size(); ++t) {
    const Node& node = nodes_[t];
    const double base = node.parent == 0 ? 1.0 : out[static_cast<std::size_t>(node.parent - offset)];
    out[t - static_cast<std::size_t>(offset)] = base * x[static_cast<std::size_t>(node.var)];
  }
}

Vector Dictionary::expand(std::span<const double> x) const {
  Vector out(output_dim_);
  expand_into(x, {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

DesignMatrix Dictionary::expand_matrix(const Dataset& data) const {
  if (data.cols() != spec_.input_dim && data.rows() > 0) {
    throw ShapeError("Dictionary::expand_matrix: dataset has " + std::to_string(data.cols()) +
                     " columns, dictionary expects " + std::to_string(spec_.input_dim));
  }
  DesignMatrix out(data.rows(), output_dim_);
  for (Index i = 0; i < data.rows(); ++i) {
    expand_into(row_span(data, i),
                {out.data() + i * output_dim_, static_cast<std::size_t>(output_dim_)});
  }
  return out;
}

Vector expand(const DictionarySpec& spec, std::span<const double> x) {
  return Dictionary(spec).expand(x);
}

DesignMatrix expand_matrix(const DictionarySpec& spec, const Dataset& data) {
  return Dictionary(spec).expand_matrix(data);
}

}  // namespace dmlshift
