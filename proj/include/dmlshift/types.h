#pragma once

#include <Eigen/Dense>

namespace dmlshift {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Observations are stored one per row, rows contiguous in memory.
using Dataset =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dictionary expansion B of a dataset: rows are observations, columns are
// dictionary terms b_1..b_J.
using DesignMatrix = Dataset;

}  // namespace dmlshift
