#pragma once

#include <Eigen/Core>

namespace bitar {

// Row-major dense matrix: rows are tokens or cells, columns are features.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace bitar
