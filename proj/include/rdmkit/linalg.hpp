#pragma once

#include <cmath>

#include "rdmkit/core.hpp"

namespace rdmkit {

inline bool is_symmetric(const Matrix& a, double rel_tol = 1e-12) {
    if (a.rows() != a.cols()) return false;
    double scale = a.cwiseAbs().maxCoeff();
    if (scale == 0.0) return true;
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

inline void require_symmetric(const Matrix& a, const char* what) {
    if (!is_symmetric(a, 1e-10))
        throw InvalidArgument(std::string(what) + " must be symmetric");
}

// Eigenvalues of 0.5*(A + A^T), ascending.
inline Vector symmetric_eigenvalues(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()),
                                             Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

inline bool is_psd(const Matrix& a, double rel_tol = 1e-10) {
    Vector ev = symmetric_eigenvalues(a);
    double top = ev.cwiseAbs().maxCoeff();
    return ev.minCoeff() >= -rel_tol * std::max(top, 1.0);
}

// Symmetric square root via eigendecomposition; eigenvalues within
// rel_clip*lambda_max of zero are clamped to zero so PSD inputs with
// numerically negative eigenvalues stay usable.
inline Matrix symmetric_sqrt(const Matrix& a, double rel_clip = 1e-12) {
    require_symmetric(a, "matrix");
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
    Vector ev = es.eigenvalues();
    double top = ev.cwiseAbs().maxCoeff();
    if (ev.minCoeff() < -1e-8 * std::max(top, 1.0))
        throw InvalidArgument("matrix is not positive semidefinite");
    Vector root = ev.unaryExpr([&](double v) {
        return v > rel_clip * top ? std::sqrt(v) : 0.0;
    });
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

// Symmetric inverse square root. With pseudo=false, eigenvalues below
// rel_cutoff*lambda_max raise ConditioningError; with pseudo=true they are
// inverted to zero (spectral pseudo-inverse).
inline Matrix symmetric_inv_sqrt(const Matrix& a, double rel_cutoff = 1e-10,
                                 bool pseudo = false) {
    require_symmetric(a, "matrix");
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
    Vector ev = es.eigenvalues();
    double top = ev.maxCoeff();
    if (top <= 0.0) throw InvalidArgument("matrix has no positive eigenvalues");
    Vector inv_root(ev.size());
    for (Index i = 0; i < ev.size(); ++i) {
        if (ev[i] > rel_cutoff * top) {
            inv_root[i] = 1.0 / std::sqrt(ev[i]);
        } else if (pseudo) {
            inv_root[i] = 0.0;
        } else {
            throw ConditioningError(
                "matrix is near-singular (eigenvalue " + std::to_string(ev[i]) +
                " vs max " + std::to_string(top) +
                "); consider a larger shrinkage weight");
        }
    }
    return es.eigenvectors() * inv_root.asDiagonal() *
           es.eigenvectors().transpose();
}

// Spectral pseudo-inverse with relative cutoff.
inline Matrix symmetric_pinv(const Matrix& a, double rel_cutoff = 1e-10) {
    require_symmetric(a, "matrix");
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
    Vector ev = es.eigenvalues();
    double top = ev.cwiseAbs().maxCoeff();
    if (top <= 0.0) throw InvalidArgument("cannot pseudo-invert a zero matrix");
    Vector inv = ev.unaryExpr([&](double v) {
        return v > rel_cutoff * top ? 1.0 / v : 0.0;
    });
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace rdmkit
