#pragma once

#include <vector>

#include "rdmkit/dataset.hpp"
#include "rdmkit/linalg.hpp"

namespace rdmkit {

// Length-D vector of squared distances (normalized by P) plus estimator
// metadata. Unbiased (crossvalidated) entries may be negative; they are
// never clipped, because the informative zero point is the whole reason to
// crossvalidate.
struct RDMEstimate {
    Vector d;
    Estimator estimator = Estimator::biased;
    Metric metric = Metric::euclidean;
    int k = 0;
    int m = 0;
};

// K x K second moment matrix of the patterns.
struct SecondMoment {
    Matrix g;
    Estimator estimator = Estimator::biased;
    bool centered = false;
};

namespace detail {

// sum_{m != n} diag(delta_m delta_n^T), accumulated pair by pair.
inline Vector cross_sum_direct(const std::vector<Matrix>& diffs) {
    const Index d = diffs.front().rows();
    Vector acc = Vector::Zero(d);
    for (std::size_t a = 0; a < diffs.size(); ++a)
        for (std::size_t b = a + 1; b < diffs.size(); ++b)
            acc += diffs[a].cwiseProduct(diffs[b]).rowwise().sum();
    return 2.0 * acc;
}

// Same sum through the identity
//   sum_{m != n} x_m x_n = (sum_m x_m)^2 - sum_m x_m^2,
// which is O(M) instead of O(M^2) in the partition count.
inline Vector cross_sum_factored(const std::vector<Matrix>& diffs) {
    const Index d = diffs.front().rows();
    const Index p = diffs.front().cols();
    Matrix total = Matrix::Zero(d, p);
    Vector self = Vector::Zero(d);
    for (const Matrix& x : diffs) {
        total += x;
        self += x.cwiseProduct(x).rowwise().sum();
    }
    return total.cwiseProduct(total).rowwise().sum() - self;
}

inline Vector cross_sum(const std::vector<Matrix>& diffs) {
    return diffs.size() <= 32 ? cross_sum_direct(diffs)
                              : cross_sum_factored(diffs);
}

}  // namespace detail

// Biased estimator: squared norm of the across-partition mean difference,
// divided by P.
inline RDMEstimate biased_distances(const ActivityDataset& ds,
                                    const ContrastMatrix& cm,
                                    Metric metric = Metric::euclidean) {
    std::vector<Matrix> diffs = pattern_differences(ds, cm);
    Matrix mean = Matrix::Zero(cm.d(), ds.p);
    for (const Matrix& x : diffs) mean += x;
    mean /= static_cast<double>(ds.m);
    RDMEstimate est;
    est.d = mean.cwiseProduct(mean).rowwise().sum() /
            static_cast<double>(ds.p);
    est.estimator = Estimator::biased;
    est.metric = metric;
    est.k = static_cast<int>(ds.k);
    est.m = static_cast<int>(ds.m);
    return est;
}

// Crossvalidated estimator: only products of differences from distinct
// partitions enter, removing the noise-induced positive bias.
inline RDMEstimate unbiased_distances(const ActivityDataset& ds,
                                      const ContrastMatrix& cm,
                                      Metric metric = Metric::euclidean) {
    if (ds.m < 2)
        throw CrossvalidationError(
            "crossvalidated distances need at least 2 partitions, got " +
            std::to_string(ds.m));
    std::vector<Matrix> diffs = pattern_differences(ds, cm);
    const double denom =
        static_cast<double>(ds.m) * static_cast<double>(ds.m - 1) *
        static_cast<double>(ds.p);
    RDMEstimate est;
    est.d = detail::cross_sum(diffs) / denom;
    est.estimator = Estimator::unbiased;
    est.metric = metric;
    est.k = static_cast<int>(ds.k);
    est.m = static_cast<int>(ds.m);
    return est;
}

// Unbiased estimate of the centered second moment matrix:
//   G = (1/(M(M-1))) sum_{m != n} H B_m B_n^T H^T / P,  H = I - 1/K.
inline SecondMoment unbiased_second_moment(const ActivityDataset& ds) {
    if (ds.m < 2)
        throw CrossvalidationError(
            "crossvalidated second moment needs at least 2 partitions, got " +
            std::to_string(ds.m));
    const Index k = ds.k;
    Matrix total = Matrix::Zero(k, ds.p);
    Matrix self = Matrix::Zero(k, k);
    for (const Matrix& b : ds.patterns) {
        total += b;
        self.noalias() += b * b.transpose();
    }
    Matrix cross = total * total.transpose() - self;
    Matrix h = Matrix::Identity(k, k) - Matrix::Constant(k, k, 1.0 / k);
    Matrix g = h * cross * h.transpose() /
               (static_cast<double>(ds.m) * static_cast<double>(ds.m - 1) *
                static_cast<double>(ds.p));
    SecondMoment sm;
    sm.g = 0.5 * (g + g.transpose());
    sm.estimator = Estimator::unbiased;
    sm.centered = true;
    return sm;
}

// Precision-weighted pooling of per-pair-of-partitions estimates for
// unbalanced designs. Under the zero-signal approximation,
//   Var(d_{m,n}) = tr(Sigma_P Sigma_P) (C Sigma_K^m C^T) o (C Sigma_K^n C^T) / P^2
// for m != n, and the pooled estimate is
//   (sum W_{m,n})^{-1} sum W_{m,n} d_{m,n},  W = Var^{-1}.
inline RDMEstimate pooled_unbiased_distances(
    const ActivityDataset& ds, const ContrastMatrix& cm,
    const std::vector<Matrix>& sigma_k_per_partition, const Matrix& sigma_p,
    Metric metric = Metric::euclidean) {
    if (ds.m < 2)
        throw CrossvalidationError(
            "pooled crossvalidated distances need at least 2 partitions");
    if (static_cast<Index>(sigma_k_per_partition.size()) != ds.m)
        throw InvalidArgument("need one Sigma_K per partition");
    require_symmetric(sigma_p, "sigma_p");

    std::vector<Matrix> diffs = pattern_differences(ds, cm);
    const Index d = cm.d();
    const double tr_pp = sigma_p.cwiseProduct(sigma_p).sum();
    const double p2 = static_cast<double>(ds.p) * static_cast<double>(ds.p);

    std::vector<Matrix> xi;
    xi.reserve(sigma_k_per_partition.size());
    for (const Matrix& sk : sigma_k_per_partition) {
        if (sk.rows() != ds.k || sk.cols() != ds.k)
            throw InvalidArgument("each Sigma_K must be KxK");
        xi.push_back(cm.c * sk * cm.c.transpose());
    }

    Matrix weight_sum = Matrix::Zero(d, d);
    Vector weighted = Vector::Zero(d);
    for (Index a = 0; a < ds.m; ++a) {
        for (Index b = a + 1; b < ds.m; ++b) {
            Vector dab = diffs[static_cast<std::size_t>(a)]
                             .cwiseProduct(diffs[static_cast<std::size_t>(b)])
                             .rowwise()
                             .sum() /
                         static_cast<double>(ds.p);
            Matrix var = tr_pp *
                         xi[static_cast<std::size_t>(a)].cwiseProduct(
                             xi[static_cast<std::size_t>(b)]) /
                         p2;
            Eigen::LDLT<Matrix> ldlt(var);
            if (ldlt.info() != Eigen::Success ||
                (ldlt.vectorD().array() <=
                 1e-12 * ldlt.vectorD().array().abs().maxCoeff())
                    .any())
                throw RegularizationError(
                    "per-pair variance matrix is singular; the per-partition "
                    "Sigma_K need regularization");
            weight_sum += ldlt.solve(Matrix::Identity(d, d));
            weighted += ldlt.solve(dab);
        }
    }
    Eigen::LDLT<Matrix> pool(weight_sum);
    RDMEstimate est;
    est.d = pool.solve(weighted);
    est.estimator = Estimator::unbiased;
    est.metric = metric;
    est.k = static_cast<int>(ds.k);
    est.m = static_cast<int>(ds.m);
    return est;
}

}  // namespace rdmkit
