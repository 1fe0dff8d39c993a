#pragma once

#include <span>
#include <string>
#include <vector>

#include "dmlshift/types.h"

namespace dmlshift {

struct DictionarySpec {
  int input_dim = 1;   // K
  int max_order = 2;   // highest total degree of a monomial
  bool include_intercept = true;

  void validate() const;
  // Number of dictionary terms J.
  Index output_dim() const;
};

/**
 * Polynomial dictionary b(x): every monomial of total degree <= max_order in
 * the K inputs, each distinct monomial once.
 *
 * Term ordering is degree-ascending and, within a degree, lexicographic in
 * the sorted variable indices. For K=2, order 2 with intercept:
 *   [1, x1, x2, x1*x1, x1*x2, x2*x2]
 */
class Dictionary {
 public:
  explicit Dictionary(DictionarySpec spec);

  const DictionarySpec& spec() const noexcept { return spec_; }
  Index input_dim() const noexcept { return spec_.input_dim; }
  Index output_dim() const noexcept { return output_dim_; }

  // Sorted variable indices of term j (empty for the intercept).
  const std::vector<int>& term(Index j) const;
  std::string term_name(Index j) const;

  void expand_into(std::span<const double> x, std::span<double> out) const;
  Vector expand(std::span<const double> x) const;
  DesignMatrix expand_matrix(const Dataset& data) const;

 private:
  struct Node {
    int parent;  // index into the full (intercept-first) term list, -1 for 1
    int var;
  };

  DictionarySpec spec_;
  Index output_dim_ = 0;
  std::vector<std::vector<int>> terms_;  // full list, intercept first
  std::vector<Node> nodes_;
};

Vector expand(const DictionarySpec& spec, std::span<const double> x);
DesignMatrix expand_matrix(const DictionarySpec& spec, const Dataset& data);

inline std::span<const double> row_span(const Dataset& data, Index i) {
  return {data.data() + i * data.cols(), static_cast<std::size_t>(data.cols())};
}

}  // namespace dmlshift
