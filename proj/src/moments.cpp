#include "dmlshift/moments.h"

#include <cmath>
#include <string>

#include "dmlshift/errors.h"

namespace dmlshift {

namespace {

inline void neumaier_add(double& sum, double& comp, double value) {
  const double t = sum + value;
  if (std::abs(sum) >= std::abs(value)) {
    comp += (sum - t) + value;
  } else {
    comp += (value - t) + sum;
  }
  sum = t;
}

}  // namespace

SecondMomentAccumulator::SecondMomentAccumulator(Index dim)
    : dim_(dim),
      sum_(Matrix::Zero(dim, dim)),
      comp_(Matrix::Zero(dim, dim)),
      cross_sum_(Vector::Zero(dim)),
      cross_comp_(Vector::Zero(dim)) {}

void SecondMomentAccumulator::add(std::span<const double> b) {
  if (static_cast<Index>(b.size()) != dim_) {
    throw ShapeError("SecondMomentAccumulator: row has length " + std::to_string(b.size()) +
                     ", expected " + std::to_string(dim_));
  }
  for (Index k = 0; k < dim_; ++k) {
    const double bk = b[static_cast<std::size_t>(k)];
    for (Index j = 0; j <= k; ++j) {
      neumaier_add(sum_(j, k), comp_(j, k), b[static_cast<std::size_t>(j)] * bk);
    }
  }
  ++count_;
}

void SecondMomentAccumulator::add(std::span<const double> b, double weight_for_cross) {
  add(b);
  for (Index j = 0; j < dim_; ++j) {
    neumaier_add(cross_sum_(j), cross_comp_(j), b[static_cast<std::size_t>(j)] * weight_for_cross);
  }
}

Matrix SecondMomentAccumulator::second_moment() const {
  if (count_ == 0) throw EmptySampleError("second moment of an empty sample");
  Matrix out(dim_, dim_);
  const double n = static_cast<double>(count_);
  for (Index k = 0; k < dim_; ++k) {
    for (Index j = 0; j <= k; ++j) {
      const double v = (sum_(j, k) + comp_(j, k)) / n;
      out(j, k) = v;
      out(k, j) = v;
    }
  }
  return out;
}

Vector SecondMomentAccumulator::cross_moment() const {
  if (count_ == 0) throw EmptySampleError("cross moment of an empty sample");
  return (cross_sum_ + cross_comp_) / static_cast<double>(count_);
}

Matrix second_moment(const Dictionary& dict, const Dataset& data, std::span<const Index> rows) {
  SecondMomentAccumulator acc(dict.output_dim());
  Vector b(dict.output_dim());
  std::span<double> bspan{b.data(), static_cast<std::size_t>(b.size())};
  if (rows.empty()) {
    for (Index i = 0; i < data.rows(); ++i) {
      dict.expand_into(row_span(data, i), bspan);
      acc.add(bspan);
    }
  } else {
    for (Index i : rows) {
      dict.expand_into(row_span(data, i), bspan);
      acc.add(bspan);
    }
  }
  return acc.second_moment();
}

Matrix second_moment(const DesignMatrix& design) {
  SecondMomentAccumulator acc(design.cols());
  for (Index i = 0; i < design.rows(); ++i) acc.add(row_span(design, i));
  return acc.second_moment();
}

Vector cross_moment(const DesignMatrix& design, const Vector& v) {
  if (design.rows() != v.size()) {
    throw ShapeError("cross_moment: design has " + std::to_string(design.rows()) +
                     " rows but vector has length " + std::to_string(v.size()));
  }
  if (design.rows() == 0) throw EmptySampleError("cross moment of an empty sample");
  Vector sum = Vector::Zero(design.cols());
  Vector comp = Vector::Zero(design.cols());
  for (Index i = 0; i < design.rows(); ++i) {
    for (Index j = 0; j < design.cols(); ++j) {
      neumaier_add(sum(j), comp(j), design(i, j) * v(i));
    }
  }
  return (sum + comp) / static_cast<double>(design.rows());
}

}  // namespace dmlshift
