#pragma once

#include <cginv/types.hpp>

namespace cginv {

/// Closest symmetric matrix with eigenvalues >= eps: Q max(Λ, eps) Q^T.
/// Requires h symmetric within 1e-9 (relative to its largest entry).
Matrix psd_project(const Matrix& h, double eps);

/// Eigenpairs of a symmetric tridiagonal matrix, eigenvalues ascending.
struct TridiagonalEigen {
    Vector values;
    Matrix vectors; ///< columns are orthonormal eigenvectors
};

/// `diag` has n entries, `offdiag` n-1 (the matrix is symmetric).
TridiagonalEigen tridiagonal_eigen(const Vector& diag, const Vector& offdiag);

/// Largest singular value by power iteration on A^T A
/// (stops at 1e-6 relative change or 1000 iterations).
double spectral_norm(const Matrix& a);

/// mReLU: componentwise a + ReLU(x - a) - ReLU(x - b).
Vector mrelu(double a, double b, const Vector& x);

} // namespace cginv
