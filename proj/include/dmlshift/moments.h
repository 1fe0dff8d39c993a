#pragma once

#include <span>

#include "dmlshift/featmap.h"
#include "dmlshift/types.h"

namespace dmlshift {

// Running sums of b b' and b*v with Neumaier-compensated accumulation.
// Only the upper triangle is accumulated; the result is symmetric by
// construction.
class SecondMomentAccumulator {
 public:
  explicit SecondMomentAccumulator(Index dim);

  void add(std::span<const double> b);
  void add(std::span<const double> b, double weight_for_cross);

  Index count() const noexcept { return count_; }
  // (1/n) sum b b'
  Matrix second_moment() const;
  // (1/n) sum b * v
  Vector cross_moment() const;

 private:
  Index dim_;
  Index count_ = 0;
  Matrix sum_;
  Matrix comp_;
  Vector cross_sum_;
  Vector cross_comp_;
};

// (1/T) sum_t b(X_t) b(X_t)' over the selected rows (all rows when empty).
Matrix second_moment(const Dictionary& dict, const Dataset& data,
                     std::span<const Index> rows = {});
Matrix second_moment(const DesignMatrix& design);

// (1/T) sum_t b_t v_t over all rows of the design.
Vector cross_moment(const DesignMatrix& design, const Vector& v);

}  // namespace dmlshift
