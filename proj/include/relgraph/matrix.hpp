#pragma once

#include <Eigen/Dense>

namespace relgraph {

// Dense row-major double matrix used throughout the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace relgraph
