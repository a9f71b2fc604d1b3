#pragma once

#include <Eigen/Dense>

namespace uniembed {

// Row-major so that one sample is one contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// n x n squared Euclidean distances; symmetric with a zero diagonal.
using DistanceMatrix = Matrix;

}  // namespace uniembed
