#pragma once

#include <string_view>

#include <Eigen/Dense>

namespace arhq {

// Dense row-major double matrix. Carries weights, activations, residuals,
// covariances and factors alike.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Throws DataError naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view what);

// Throws DimensionError unless m is rows x cols.
void require_shape(const Matrix& m, Index rows, Index cols, std::string_view what);

inline double squared_norm(const Matrix& m) { return m.squaredNorm(); }

}  // namespace arhq
