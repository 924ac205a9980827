#pragma once

#include <Eigen/Dense>
#include <string>

namespace mmfuse {

using Index = Eigen::Index;

/// Dense row-major matrix. Training and inference use float; the gradient
/// checker instantiates the same code with double.
template <typename T>
using MatrixT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using VectorT = Eigen::Matrix<T, 1, Eigen::Dynamic, Eigen::RowMajor>;

using Matrix = MatrixT<float>;
using Vector = VectorT<float>;

inline std::string shape_str(Index rows, Index cols) {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Derived>
std::string shape_str(const Eigen::MatrixBase<Derived>& m) {
    return shape_str(m.rows(), m.cols());
}

} // namespace mmfuse
