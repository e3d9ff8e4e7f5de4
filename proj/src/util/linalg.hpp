#pragma once

#include <Eigen/Dense>

namespace sorfgp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
// Batches of records / feature rows: one record per row, contiguous.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace sorfgp
