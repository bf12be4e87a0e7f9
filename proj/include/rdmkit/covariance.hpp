#pragma once

#include "rdmkit/dataset.hpp"
#include "rdmkit/linalg.hpp"

namespace rdmkit {

enum class CovKind { full_biased, full_unbiased, null_model };

// D x D covariance matrix of distance estimates. The null-model form is the
// covariance structure under the assumption that all true distances are
// zero, up to a proportionality constant that whitened criteria are
// invariant to.
struct DistanceCovariance {
    Matrix v;
    CovKind kind = CovKind::null_model;
    int k = 0;
};

// Xi = C Sigma_K C^T, the covariance of the estimated pattern differences.
inline Matrix xi_matrix(const Matrix& sigma_k, const ContrastMatrix& cm) {
    if (sigma_k.rows() != cm.k() || sigma_k.cols() != cm.k())
        throw InvalidArgument("sigma_k must be " + std::to_string(cm.k()) +
                              "x" + std::to_string(cm.k()));
    require_symmetric(sigma_k, "sigma_k");
    Matrix xi = cm.c * sigma_k * cm.c.transpose();
    return 0.5 * (xi + xi.transpose());
}

// V = Xi o Xi. For Sigma_K = I this is CC^T o CC^T: diagonal 4, entries 1
// for pairs sharing a condition (correlation 0.25), 0 for disjoint pairs.
inline DistanceCovariance null_covariance(const Matrix& sigma_k,
                                          const ContrastMatrix& cm) {
    Matrix xi = xi_matrix(sigma_k, cm);
    DistanceCovariance cov;
    cov.v = xi.cwiseProduct(xi);
    cov.kind = CovKind::null_model;
    cov.k = static_cast<int>(cm.k());
    return cov;
}

struct QuadMoments {
    Vector mean;
    Matrix cov;
};

// Moments of diag(X X^T) for X ~ MN(mean, row_cov, col_cov):
//   E   = diag(mean mean^T) + tr(col_cov) diag(row_cov)
//   Var = 4 (mean col_cov mean^T) o row_cov + 2 tr(col_cov col_cov) (row_cov o row_cov)
inline QuadMoments matnorm_quad_moments(const Matrix& mean,
                                        const Matrix& row_cov,
                                        const Matrix& col_cov) {
    if (row_cov.rows() != mean.rows() || row_cov.cols() != mean.rows())
        throw InvalidArgument("row_cov must match the mean's row count");
    if (col_cov.rows() != mean.cols() || col_cov.cols() != mean.cols())
        throw InvalidArgument("col_cov must match the mean's column count");
    require_symmetric(row_cov, "row_cov");
    require_symmetric(col_cov, "col_cov");
    QuadMoments out;
    Matrix mm = mean * mean.transpose();
    out.mean = mm.diagonal() + col_cov.trace() * row_cov.diagonal();
    Matrix signal = mean * col_cov * mean.transpose();
    double tr2 = col_cov.cwiseProduct(col_cov).sum();
    out.cov = 4.0 * signal.cwiseProduct(row_cov) +
              2.0 * tr2 * row_cov.cwiseProduct(row_cov);
    out.cov = 0.5 * (out.cov + out.cov.transpose());
    return out;
}

// Full analytical covariance of the distance estimates:
//   Var = (1/P^2) ( 2 tr(Sigma_P Sigma_P)/Q * Xi o Xi + 4P/M * Delta o Xi )
// with Q = M^2 (biased) or M(M-1) (unbiased) and
// Delta = C B Sigma_P B^T C^T / P evaluated from the true pattern
// differences delta = C B.
inline DistanceCovariance full_covariance(Estimator estimator,
                                          const Matrix& delta,
                                          const Matrix& sigma_p,
                                          const Matrix& xi, int m) {
    if (m < 1) throw InvalidArgument("partition count must be positive");
    if (estimator == Estimator::unbiased && m < 2)
        throw InvalidArgument(
            "the unbiased covariance needs at least 2 partitions");
    const Index d = delta.rows();
    const Index p = delta.cols();
    if (sigma_p.rows() != p || sigma_p.cols() != p)
        throw InvalidArgument("sigma_p must be PxP");
    if (xi.rows() != d || xi.cols() != d)
        throw InvalidArgument("xi must be DxD");
    require_symmetric(sigma_p, "sigma_p");

    const double pd = static_cast<double>(p);
    const double tr_pp = sigma_p.cwiseProduct(sigma_p).sum();
    const double q = estimator == Estimator::biased
                         ? static_cast<double>(m) * m
                         : static_cast<double>(m) * (m - 1);
    Matrix delta_star = delta * sigma_p * delta.transpose() / pd;
    DistanceCovariance cov;
    cov.v = (2.0 * tr_pp / q) * xi.cwiseProduct(xi) +
            (4.0 * pd / m) * delta_star.cwiseProduct(xi);
    cov.v /= pd * pd;
    cov.v = 0.5 * (cov.v + cov.v.transpose());
    cov.kind = estimator == Estimator::biased ? CovKind::full_biased
                                              : CovKind::full_unbiased;
    return cov;
}

// Symmetric inverse square root of V, with eigenvalues below
// 1e-10 * lambda_max pseudo-inverted to zero. W V W is the orthogonal
// projector onto V's range.
inline Matrix whitener(const DistanceCovariance& cov) {
    if (cov.v.size() == 0 || cov.v.cwiseAbs().maxCoeff() == 0.0)
        throw InvalidArgument("cannot whiten with a zero covariance matrix");
    return symmetric_inv_sqrt(cov.v, 1e-10, /*pseudo=*/true);
}

// D x K^2 map satisfying d = T_d vec(G), i.e. the row for pair (i,j) picks
// G_ii + G_jj - G_ij - G_ji. vec() is column-major.
inline Matrix build_t_d(int k) {
    if (k < 2) throw InvalidArgument("need at least 2 conditions");
    const Index d = pair_count(k);
    Matrix t = Matrix::Zero(d, static_cast<Index>(k) * k);
    Index row = 0;
    auto idx = [k](Index r, Index c) { return c * k + r; };
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j, ++row) {
            t(row, idx(i, i)) += 1.0;
            t(row, idx(j, j)) += 1.0;
            t(row, idx(i, j)) -= 1.0;
            t(row, idx(j, i)) -= 1.0;
        }
    }
    return t;
}

}  // namespace rdmkit
