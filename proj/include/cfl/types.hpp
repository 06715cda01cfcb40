#pragma once

#include <Eigen/Dense>

namespace cfl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// A stack of per-node model vectors, one node per row. Row i of an l x n
// RowStack is y_i; applying an l x l base matrix B to it computes
// (B kron I_n) y without materializing the Kronecker product.
using RowStack = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace cfl
