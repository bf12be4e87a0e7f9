#include <catch2/catch.hpp>

#include <algorithm>

#include "rdmkit/covariance.hpp"
#include "rdmkit/estimators.hpp"
#include "rdmkit/rng.hpp"

using namespace rdmkit;

namespace {

ActivityDataset noisy_dataset(std::uint64_t seed, std::uint64_t trial, int k,
                              int p, int m, const Matrix& b_true) {
    RandomStream rng(seed, trial);
    std::vector<Matrix> parts;
    for (int i = 0; i < m; ++i)
        parts.push_back(b_true + rng.normal_matrix(k, p));
    return ActivityDataset::create(std::move(parts));
}

}  // namespace

TEST_CASE("hand case: biased distance with M=2, K=2, P=1") {
    Matrix p1(2, 1), p2(2, 1);
    p1 << 1, 0;
    p2 << 3, 0;
    ActivityDataset ds = ActivityDataset::create({p1, p2});
    RDMEstimate est = biased_distances(ds, build_contrast_matrix(2));
    REQUIRE(est.d[0] == Approx(4.0));  // mean difference 2, squared
    REQUIRE(est.estimator == Estimator::biased);
}

TEST_CASE("hand case: unbiased distance with M=2, K=2, P=1") {
    Matrix p1(2, 1), p2(2, 1);
    p1 << 2, 0;
    p2 << 4, 0;
    ActivityDataset ds = ActivityDataset::create({p1, p2});
    RDMEstimate est = unbiased_distances(ds, build_contrast_matrix(2));
    REQUIRE(est.d[0] == Approx(8.0));  // (2*4 + 4*2) / (2*1) / 1
}

TEST_CASE("noise-free estimates equal the true distances") {
    RandomStream rng(41, 0);
    Matrix b = rng.normal_matrix(4, 6);
    ActivityDataset ds = ActivityDataset::create({b, b, b});
    ContrastMatrix cm = build_contrast_matrix(4);
    Vector truth(cm.d());
    for (Index r = 0; r < cm.d(); ++r) {
        auto [i, j] = cm.pair_index[static_cast<std::size_t>(r)];
        truth[r] = (b.row(i - 1) - b.row(j - 1)).squaredNorm() / 6.0;
    }
    Vector biased = biased_distances(ds, cm).d;
    Vector unbiased = unbiased_distances(ds, cm).d;
    REQUIRE((biased - truth).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((biased - unbiased).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("biased estimator inflates zero distances by Xi_kk/M") {
    const int n_sims = 100000, k = 2, p = 5, m = 4;
    ContrastMatrix cm = build_contrast_matrix(k);
    double sum = 0.0, sumsq = 0.0;
    for (int t = 0; t < n_sims; ++t) {
        double d =
            biased_distances(
                noisy_dataset(4100, static_cast<std::uint64_t>(t), k, p, m,
                              Matrix::Zero(k, p)),
                cm)
                .d[0];
        sum += d;
        sumsq += d * d;
    }
    double mean = sum / n_sims;
    double se = std::sqrt((sumsq / n_sims - mean * mean) / n_sims);
    REQUIRE(std::abs(mean - 2.0 / m) <= 3.0 * se);
}

TEST_CASE("unbiased estimator is centered on zero for pure noise") {
    const int n_sims = 100000, k = 2, p = 5, m = 4;
    ContrastMatrix cm = build_contrast_matrix(k);
    double sum = 0.0, sumsq = 0.0;
    for (int t = 0; t < n_sims; ++t) {
        double d =
            unbiased_distances(
                noisy_dataset(4200, static_cast<std::uint64_t>(t), k, p, m,
                              Matrix::Zero(k, p)),
                cm)
                .d[0];
        sum += d;
        sumsq += d * d;
    }
    double mean = sum / n_sims;
    double se = std::sqrt((sumsq / n_sims - mean * mean) / n_sims);
    REQUIRE(std::abs(mean) <= 3.0 * se);
}

TEST_CASE("biased estimates are nonnegative for any dataset") {
    RandomStream rng(43, 0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Matrix> parts;
        int m = 2 + static_cast<int>(rng.next_u64() % 4);
        for (int i = 0; i < m; ++i) parts.push_back(rng.normal_matrix(3, 4));
        ActivityDataset ds = ActivityDataset::create(std::move(parts));
        Vector d = biased_distances(ds, build_contrast_matrix(3)).d;
        REQUIRE(d.minCoeff() >= 0.0);
    }
}

TEST_CASE("relabeling conditions permutes distances consistently") {
    RandomStream rng(44, 0);
    const int k = 5, p = 4, m = 3;
    std::vector<Matrix> parts;
    for (int i = 0; i < m; ++i) parts.push_back(rng.normal_matrix(k, p));
    std::vector<int> perm = {2, 0, 4, 1, 3};  // new index -> old index
    std::vector<Matrix> permuted;
    for (const Matrix& b : parts) {
        Matrix q(k, p);
        for (int r = 0; r < k; ++r) q.row(r) = b.row(perm[r]);
        permuted.push_back(q);
    }
    ContrastMatrix cm = build_contrast_matrix(k);
    Vector d_orig = unbiased_distances(ActivityDataset::create(parts), cm).d;
    Vector d_perm =
        unbiased_distances(ActivityDataset::create(permuted), cm).d;
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) {
            int oi = perm[i], oj = perm[j];
            Index old_row = pair_to_row(std::min(oi, oj) + 1,
                                        std::max(oi, oj) + 1, k);
            Index new_row = pair_to_row(i + 1, j + 1, k);
            REQUIRE(d_perm[new_row] == Approx(d_orig[old_row]).margin(1e-14));
        }
    }
}

TEST_CASE("scaling all patterns by alpha scales distances by alpha^2") {
    RandomStream rng(45, 0);
    const double alpha = 1.7;
    std::vector<Matrix> parts{rng.normal_matrix(3, 4), rng.normal_matrix(3, 4)};
    std::vector<Matrix> scaled;
    for (const Matrix& b : parts) scaled.push_back(alpha * b);
    ContrastMatrix cm = build_contrast_matrix(3);
    for (bool biased : {true, false}) {
        auto estimate = [&](const std::vector<Matrix>& ps) {
            ActivityDataset ds = ActivityDataset::create(ps);
            return biased ? biased_distances(ds, cm).d
                          : unbiased_distances(ds, cm).d;
        };
        Vector base = estimate(parts);
        Vector big = estimate(scaled);
        REQUIRE((big - alpha * alpha * base).cwiseAbs().maxCoeff() <
                1e-12 * big.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("direct and factored crossvalidation sums agree") {
    RandomStream rng(46, 0);
    for (int m : {2, 5, 33}) {
        std::vector<Matrix> diffs;
        for (int i = 0; i < m; ++i) diffs.push_back(rng.normal_matrix(3, 4));
        Vector direct = detail::cross_sum_direct(diffs);
        Vector factored = detail::cross_sum_factored(diffs);
        REQUIRE((direct - factored).cwiseAbs().maxCoeff() <
                1e-10 * (1.0 + direct.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("crossvalidation requires at least two partitions") {
    ActivityDataset ds = ActivityDataset::create({Matrix::Zero(2, 3)});
    REQUIRE_THROWS_AS(unbiased_distances(ds, build_contrast_matrix(2)),
                      CrossvalidationError);
    REQUIRE_THROWS_AS(unbiased_second_moment(ds), CrossvalidationError);
}

TEST_CASE("second moment of identical zero-mean partitions is exact") {
    RandomStream rng(47, 0);
    Matrix b = rng.normal_matrix(3, 5);
    b.colwise() -= b.rowwise().mean();  // zero-mean rows not required; center anyway
    ActivityDataset ds = ActivityDataset::create({b, b});
    Matrix h = Matrix::Identity(3, 3) - Matrix::Constant(3, 3, 1.0 / 3);
    Matrix expected = h * b * b.transpose() * h.transpose() / 5.0;
    SecondMoment sm = unbiased_second_moment(ds);
    REQUIRE((sm.g - expected).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE(sm.centered);
    // centered: rows sum to zero
    REQUIRE((sm.g * Vector::Ones(3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("second moment is entrywise unbiased for pure noise") {
    const int n_sims = 100000, k = 3, p = 4, m = 2;
    Matrix sum = Matrix::Zero(k, k), sumsq = Matrix::Zero(k, k);
    for (int t = 0; t < n_sims; ++t) {
        Matrix g = unbiased_second_moment(
                       noisy_dataset(4700, static_cast<std::uint64_t>(t), k, p,
                                     m, Matrix::Zero(k, p)))
                       .g;
        sum += g;
        sumsq += g.cwiseProduct(g);
    }
    Matrix mean = sum / n_sims;
    Matrix se =
        ((sumsq / n_sims - mean.cwiseProduct(mean)) / n_sims).cwiseSqrt();
    for (Index i = 0; i < k; ++i)
        for (Index j = 0; j < k; ++j)
            REQUIRE(std::abs(mean(i, j)) <= 3.0 * se(i, j) + 1e-12);
}

TEST_CASE("distances recovered from the second moment match the estimator") {
    RandomStream rng(48, 0);
    const int k = 4, p = 6, m = 3;
    std::vector<Matrix> parts;
    for (int i = 0; i < m; ++i) parts.push_back(rng.normal_matrix(k, p));
    ActivityDataset ds = ActivityDataset::create(parts);
    ContrastMatrix cm = build_contrast_matrix(k);
    Matrix g = unbiased_second_moment(ds).g;
    Vector d_from_g(cm.d());
    for (Index r = 0; r < cm.d(); ++r) {
        auto [i, j] = cm.pair_index[static_cast<std::size_t>(r)];
        d_from_g[r] =
            g(i - 1, i - 1) + g(j - 1, j - 1) - g(i - 1, j - 1) - g(j - 1, i - 1);
    }
    Vector d_direct = unbiased_distances(ds, cm).d;
    REQUIRE((d_from_g - d_direct).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("pooled estimate collapses to the plain average for equal Sigma_K") {
    RandomStream rng(49, 0);
    const int k = 3, p = 5, m = 4;
    std::vector<Matrix> parts;
    for (int i = 0; i < m; ++i) parts.push_back(rng.normal_matrix(k, p));
    ActivityDataset ds = ActivityDataset::create(parts);
    ContrastMatrix cm = build_contrast_matrix(k);
    std::vector<Matrix> sigma_ks(m, Matrix::Identity(k, k));
    Vector pooled =
        pooled_unbiased_distances(ds, cm, sigma_ks, Matrix::Identity(p, p)).d;
    Vector plain = unbiased_distances(ds, cm).d;
    REQUIRE((pooled - plain).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("pooling keeps unbiasedness and reduces variance under heteroscedastic noise") {
    const int n_sims = 20000, k = 2, p = 4, m = 3;
    ContrastMatrix cm = build_contrast_matrix(k);
    std::vector<Matrix> sigma_ks = {Matrix::Identity(k, k),
                                    Matrix::Identity(k, k),
                                    4.0 * Matrix::Identity(k, k)};
    double sum_pool = 0.0, sq_pool = 0.0, sq_plain = 0.0;
    for (int t = 0; t < n_sims; ++t) {
        RandomStream rng(4900, static_cast<std::uint64_t>(t));
        std::vector<Matrix> parts;
        for (int i = 0; i < m; ++i) {
            double sd = i == 2 ? 2.0 : 1.0;
            parts.push_back(sd * rng.normal_matrix(k, p));
        }
        ActivityDataset ds = ActivityDataset::create(std::move(parts));
        double pooled = pooled_unbiased_distances(ds, cm, sigma_ks,
                                                  Matrix::Identity(p, p))
                            .d[0];
        double plain = unbiased_distances(ds, cm).d[0];
        sum_pool += pooled;
        sq_pool += pooled * pooled;
        sq_plain += plain * plain;
    }
    double mean_pool = sum_pool / n_sims;
    double var_pool = sq_pool / n_sims - mean_pool * mean_pool;
    double var_plain = sq_plain / n_sims;
    REQUIRE(std::abs(mean_pool) <= 3.0 * std::sqrt(var_pool / n_sims));
    REQUIRE(var_pool <= var_plain);
}

TEST_CASE("pooling rejects singular per-pair variance matrices") {
    RandomStream rng(50, 0);
    const int k = 3, p = 4, m = 2;
    std::vector<Matrix> parts{rng.normal_matrix(k, p), rng.normal_matrix(k, p)};
    ActivityDataset ds = ActivityDataset::create(parts);
    ContrastMatrix cm = build_contrast_matrix(k);
    std::vector<Matrix> degenerate(m, Matrix::Ones(k, k));  // C S C^T = 0
    REQUIRE_THROWS_AS(pooled_unbiased_distances(ds, cm, degenerate,
                                                Matrix::Identity(p, p)),
                      RegularizationError);
}
