#pragma once

#include "dfest/types.hpp"

#include <vector>

namespace dfest::linalg {

double spectral_radius(const Matrix& A);
std::vector<Complex> eigenvalues(const Matrix& A);

/// Moore-Penrose pseudo-inverse. Singular values below
/// `rel_tol * sigma_max` are treated as zero.
Matrix pinv(const Matrix& M, double rel_tol = 1e-12);

/// Factor L with L L^T = M for a symmetric positive semidefinite M.
Matrix psd_factor(const Matrix& M);

/// Orthonormal basis of the null space of M (columns).
Matrix null_space(const Matrix& M, double rel_tol = 1e-10);

/// Rank with singular values above `rel_tol * sigma_max`.
Eigen::Index numerical_rank(const Matrix& M, double rel_tol = 1e-10);

double max_abs(const Matrix& M);

bool is_symmetric(const Matrix& M, double tol = 1e-10);

/// Unobservable subspace of (A, C) as orthonormal columns, computed with an
/// orthogonal Krylov staircase. `gap` receives the ratio between the smallest
/// accepted and the largest rejected singular value of the last rank decision
/// (large is well-conditioned; +inf when no decision was close).
Matrix unobservable_subspace(const Matrix& A, const Matrix& C, double rel_tol, double* gap = nullptr);

/// Eigenvalues of A restricted to the unobservable subspace of (A, C).
std::vector<Complex> unobservable_modes(const Matrix& A, const Matrix& C, double rel_tol = 1e-9,
                                        double* gap = nullptr);

/// Monic characteristic polynomial coefficients [1, c1, ..., cn] with roots
/// `roots`. Complex roots must come in conjugate pairs.
std::vector<double> poly_from_roots(const std::vector<Complex>& roots);

}  // namespace dfest::linalg
