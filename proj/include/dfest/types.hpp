#pragma once

#include <Eigen/Dense>

#include <complex>
#include <vector>

namespace dfest {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Complex = std::complex<double>;

/// Plain (A, B, C, D) quadruple used for auxiliary systems such as the
/// residual generator or the cascaded filter.
struct StateSpace {
    Matrix A;
    Matrix B;
    Matrix C;
    Matrix D;

    Eigen::Index states() const { return A.rows(); }
    Eigen::Index inputs() const { return B.cols(); }
    Eigen::Index outputs() const { return C.rows(); }
};

}  // namespace dfest
