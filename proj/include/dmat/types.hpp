#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace dmat {

// Row-major so that a node's feature/embedding row is contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using NodeId = std::uint32_t;
using Labels = std::vector<int>;

}  // namespace dmat
