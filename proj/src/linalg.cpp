#include "dfest/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dfest::linalg {

std::vector<Complex> eigenvalues(const Matrix& A) {
    if (A.size() == 0) return {};
    Eigen::EigenSolver<Matrix> solver(A, false);
    const auto& ev = solver.eigenvalues();
    return {ev.data(), ev.data() + ev.size()};
}

double spectral_radius(const Matrix& A) {
    double rho = 0.0;
    for (const auto& lambda : eigenvalues(A)) rho = std::max(rho, std::abs(lambda));
    return rho;
}

Matrix pinv(const Matrix& M, double rel_tol) {
    if (M.size() == 0) return Matrix::Zero(M.cols(), M.rows());
    Eigen::BDCSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double cutoff = rel_tol * (s.size() > 0 ? s(0) : 0.0);
    Vector inv = Vector::Zero(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > cutoff && s(i) > 0.0) inv(i) = 1.0 / s(i);
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Matrix psd_factor(const Matrix& M) {
    if (M.size() == 0) return M;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (M + M.transpose()));
    Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal();
}

Matrix null_space(const Matrix& M, double rel_tol) {
    const Eigen::Index n = M.cols();
    if (M.rows() == 0) return Matrix::Identity(n, n);
    Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeFullV);
    const Vector& s = svd.singularValues();
    const double cutoff = rel_tol * std::max(s.size() > 0 ? s(0) : 0.0, std::numeric_limits<double>::min());
    Eigen::Index rank = 0;
    while (rank < s.size() && s(rank) > cutoff) ++rank;
    return svd.matrixV().rightCols(n - rank);
}

Eigen::Index numerical_rank(const Matrix& M, double rel_tol) {
    if (M.size() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(M);
    const Vector& s = svd.singularValues();
    if (s(0) == 0.0) return 0;
    Eigen::Index rank = 0;
    while (rank < s.size() && s(rank) > rel_tol * s(0)) ++rank;
    return rank;
}

double max_abs(const Matrix& M) { return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff(); }

bool is_symmetric(const Matrix& M, double tol) {
    if (M.rows() != M.cols()) return false;
    return (M - M.transpose()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, max_abs(M));
}

Matrix unobservable_subspace(const Matrix& A, const Matrix& C, double rel_tol, double* gap) {
    const Eigen::Index n = A.rows();
    const double scale = std::max({1.0, A.norm(), C.norm()});
    const double cutoff = rel_tol * scale;
    double worst_gap = std::numeric_limits<double>::infinity();

    Matrix basis(n, 0);
    Matrix block = C.transpose();
    while (basis.cols() < n && block.cols() > 0) {
        // Two passes of Gram-Schmidt against the accepted directions.
        for (int pass = 0; pass < 2; ++pass) block -= basis * (basis.transpose() * block);
        Eigen::JacobiSVD<Matrix> svd(block, Eigen::ComputeThinU);
        const Vector& s = svd.singularValues();
        Eigen::Index keep = 0;
        while (keep < s.size() && s(keep) > cutoff) ++keep;
        if (keep < s.size() && keep > 0 && s(keep) > 0.0) worst_gap = std::min(worst_gap, s(keep - 1) / s(keep));
        if (keep == 0) {
            if (s.size() > 0 && s(0) > 0.0) worst_gap = std::min(worst_gap, cutoff / s(0));
            break;
        }
        keep = std::min(keep, n - basis.cols());
        Matrix fresh = svd.matrixU().leftCols(keep);
        basis.conservativeResize(n, basis.cols() + keep);
        basis.rightCols(keep) = fresh;
        block = A.transpose() * fresh;
    }
    if (gap != nullptr) *gap = worst_gap;
    if (basis.cols() == 0) return Matrix::Identity(n, n);
    return null_space(basis.transpose(), 1e-12);
}

std::vector<Complex> unobservable_modes(const Matrix& A, const Matrix& C, double rel_tol, double* gap) {
    const Matrix N = unobservable_subspace(A, C, rel_tol, gap);
    if (N.cols() == 0) return {};
    return eigenvalues(N.transpose() * A * N);
}

std::vector<double> poly_from_roots(const std::vector<Complex>& roots) {
    std::vector<Complex> coeffs{Complex(1.0, 0.0)};
    for (const auto& r : roots) {
        std::vector<Complex> next(coeffs.size() + 1, Complex(0.0, 0.0));
        for (std::size_t i = 0; i < coeffs.size(); ++i) {
            next[i] += coeffs[i];
            next[i + 1] -= coeffs[i] * r;
        }
        coeffs = std::move(next);
    }
    std::vector<double> real(coeffs.size());
    std::transform(coeffs.begin(), coeffs.end(), real.begin(), [](const Complex& c) { return c.real(); });
    return real;
}

}  // namespace dfest::linalg
