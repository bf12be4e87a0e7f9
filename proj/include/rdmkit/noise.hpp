#pragma once

#include <cmath>

#include "rdmkit/dataset.hpp"
#include "rdmkit/linalg.hpp"

namespace rdmkit {

// Condition covariance Sigma_K and channel covariance Sigma_P, the latter
// normalized to trace(Sigma_P) = P.
struct NoiseSpec {
    Matrix sigma_k;
    Matrix sigma_p;

    static NoiseSpec create(Matrix sigma_k, Matrix sigma_p);
};

// Sigma_P estimate from first-level residuals:
//   sum_m R_m^T R_m / sum_m (N_m - K_m)
// which reduces to the balanced form (1/(M(N-K))) sum R^T R when all
// partitions have the same row count.
inline Matrix estimate_sigma_p(const ActivityDataset& ds, int k_m) {
    if (!ds.has_residuals())
        throw MissingResidualsError(
            "dataset has no residual matrices; Mahalanobis prewhitening "
            "requires them");
    double dof = 0.0;
    Matrix acc = Matrix::Zero(ds.p, ds.p);
    for (std::size_t i = 0; i < ds.residuals.size(); ++i) {
        const Matrix& r = ds.residuals[i];
        if (r.rows() <= k_m)
            throw DegreesOfFreedomError(
                "residual matrix " + std::to_string(i + 1) + " has " +
                std::to_string(r.rows()) + " rows, needs more than k_m = " +
                std::to_string(k_m));
        acc.noalias() += r.transpose() * r;
        dof += static_cast<double>(r.rows() - k_m);
    }
    Matrix sigma = acc / dof;
    return 0.5 * (sigma + sigma.transpose());
}

// Shrinkage toward the diagonal: h*diag(S) + (1-h)*S.
inline Matrix shrink_sigma_p(const Matrix& sigma_hat, double h) {
    require_symmetric(sigma_hat, "sigma_hat");
    if (!(h >= 0.0 && h <= 1.0))
        throw InvalidArgument("shrinkage weight must be in [0, 1], got " +
                              std::to_string(h));
    Matrix out = (1.0 - h) * sigma_hat;
    out.diagonal() = sigma_hat.diagonal();
    return out;
}

// Right-multiply every partition by the symmetric inverse square root of
// sigma_tilde. Euclidean distances on the result equal Mahalanobis distances
// on the input. Residuals are carried along unchanged.
inline ActivityDataset prewhiten(const ActivityDataset& ds,
                                 const Matrix& sigma_tilde) {
    if (sigma_tilde.rows() != ds.p || sigma_tilde.cols() != ds.p)
        throw InvalidArgument("sigma_tilde must be " + std::to_string(ds.p) +
                              "x" + std::to_string(ds.p));
    Matrix w = symmetric_inv_sqrt(sigma_tilde, 1e-10, /*pseudo=*/false);
    std::vector<Matrix> out;
    out.reserve(ds.patterns.size());
    for (const Matrix& b : ds.patterns) out.push_back(b * w);
    return ActivityDataset::create(std::move(out), ds.residuals);
}

// tr(S)^2 / tr(S S): the number of independent channels equivalent to the
// correlated ones.
inline double effective_channel_count(const Matrix& sigma_p) {
    require_symmetric(sigma_p, "sigma_p");
    double tr = sigma_p.trace();
    double tr2 = sigma_p.cwiseProduct(sigma_p).sum();
    if (tr <= 0.0 || tr2 <= 0.0)
        throw InvalidArgument("effective channel count needs a nonzero PSD matrix");
    return tr * tr / tr2;
}

// Scale so that trace(Sigma_P) = P.
inline Matrix normalize_sigma_p(const Matrix& sigma_p) {
    require_symmetric(sigma_p, "sigma_p");
    double tr = sigma_p.trace();
    if (tr <= 0.0)
        throw InvalidArgument("sigma_p must have positive trace");
    return sigma_p * (static_cast<double>(sigma_p.rows()) / tr);
}

inline NoiseSpec NoiseSpec::create(Matrix sigma_k, Matrix sigma_p) {
    require_symmetric(sigma_k, "sigma_k");
    require_symmetric(sigma_p, "sigma_p");
    if (!is_psd(sigma_k) || !is_psd(sigma_p))
        throw InvalidArgument("noise covariances must be positive semidefinite");
    NoiseSpec spec;
    spec.sigma_k = std::move(sigma_k);
    spec.sigma_p = normalize_sigma_p(sigma_p);
    return spec;
}

}  // namespace rdmkit
