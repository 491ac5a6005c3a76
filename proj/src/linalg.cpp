#include <cginv/linalg.hpp>

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace cginv {

Matrix psd_project(const Matrix& h, double eps) {
    if (h.rows() != h.cols()) throw std::invalid_argument("psd_project: matrix must be square");
    const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
    if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
        throw std::invalid_argument("psd_project: matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    if (es.info() != Eigen::Success) throw std::runtime_error("psd_project: eigendecomposition failed");
    Vector clamped = es.eigenvalues().cwiseMax(eps);
    return es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
}

TridiagonalEigen tridiagonal_eigen(const Vector& diag, const Vector& offdiag) {
    const Index n = diag.size();
    if (n < 1 || offdiag.size() != n - 1) throw std::invalid_argument("tridiagonal_eigen: bad sizes");
    TridiagonalEigen out{Vector(n), Matrix(n, n)};
    if (n == 1) {
        out.values[0] = diag[0];
        out.vectors(0, 0) = 1.0;
        return out;
    }
    std::vector<double> d(diag.data(), diag.data() + n);
    std::vector<double> e(static_cast<std::size_t>(n), 0.0);
    std::copy(offdiag.data(), offdiag.data() + n - 1, e.begin());
    std::vector<lapack_int> support(2 * static_cast<std::size_t>(n));
    lapack_int found = 0;
    const lapack_int info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'A', static_cast<lapack_int>(n), d.data(),
                                           e.data(), 0.0, 0.0, 0, 0, 0.0, &found, out.values.data(),
                                           out.vectors.data(), static_cast<lapack_int>(n), support.data());
    if (info != 0 || found != n)
        throw std::runtime_error("tridiagonal_eigen: LAPACK dstevr failed (info " + std::to_string(info) + ")");
    return out;
}

double spectral_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Vector v = Vector::Constant(a.cols(), 1.0 / std::sqrt(static_cast<double>(a.cols())));
    // Perturb the start so it is unlikely to be orthogonal to the top singular vector.
    for (Index i = 0; i < v.size(); ++i) v[i] *= 1.0 + 0.01 * std::sin(1.0 + static_cast<double>(i));
    v.normalize();
    double sigma = 0.0;
    for (int it = 0; it < 1000; ++it) {
        Vector w = a.transpose() * (a * v);
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        const double next = std::sqrt(norm);
        v = w / norm;
        if (it > 0 && std::abs(next - sigma) <= 1e-6 * next) {
            sigma = next;
            break;
        }
        sigma = next;
    }
    return sigma;
}

Vector mrelu(double a, double b, const Vector& x) {
    Vector out(x.size());
    for (Index i = 0; i < x.size(); ++i) out[i] = a + std::max(x[i] - a, 0.0) - std::max(x[i] - b, 0.0);
    return out;
}

} // namespace cginv
