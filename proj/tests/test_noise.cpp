#include <catch2/catch.hpp>

#include "rdmkit/estimators.hpp"
#include "rdmkit/noise.hpp"
#include "rdmkit/rng.hpp"

using namespace rdmkit;

TEST_CASE("sigma_p estimate is zero for zero residuals") {
    ActivityDataset ds = ActivityDataset::create(
        {Matrix::Zero(2, 3)}, {Matrix::Zero(5, 3)});
    REQUIRE(estimate_sigma_p(ds, 2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("orthonormal residual columns scaled by sqrt(N-K) give identity") {
    const int n = 6, p = 3, km = 2;
    Matrix q = Matrix::Zero(n, p);
    q(0, 0) = q(1, 1) = q(2, 2) = 1.0;
    Matrix r = std::sqrt(static_cast<double>(n - km)) * q;
    ActivityDataset ds =
        ActivityDataset::create({Matrix::Zero(2, p)}, {r});
    Matrix sigma = estimate_sigma_p(ds, km);
    REQUIRE((sigma - Matrix::Identity(p, p)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sigma_p estimate matches the brute-force accumulation oracle") {
    RandomStream rng(31, 0);
    std::vector<Matrix> residuals{rng.normal_matrix(7, 4),
                                  rng.normal_matrix(9, 4)};
    ActivityDataset ds = ActivityDataset::create(
        {Matrix::Zero(3, 4), Matrix::Zero(3, 4)}, residuals);
    const int km = 3;
    Matrix expected = Matrix::Zero(4, 4);
    double dof = 0.0;
    for (const Matrix& r : residuals) {
        for (Index a = 0; a < 4; ++a)
            for (Index b = 0; b < 4; ++b)
                for (Index t = 0; t < r.rows(); ++t)
                    expected(a, b) += r(t, a) * r(t, b);
        dof += static_cast<double>(r.rows() - km);
    }
    expected /= dof;
    REQUIRE((estimate_sigma_p(ds, km) - expected).cwiseAbs().maxCoeff() <
            1e-12);
}

TEST_CASE("sigma_p estimate is PSD for random residuals") {
    RandomStream rng(32, 0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Matrix> residuals{rng.normal_matrix(5, 4),
                                      rng.normal_matrix(6, 4)};
        ActivityDataset ds = ActivityDataset::create(
            {Matrix::Zero(2, 4), Matrix::Zero(2, 4)}, residuals);
        REQUIRE(is_psd(estimate_sigma_p(ds, 2)));
    }
}

TEST_CASE("sigma_p estimation errors") {
    ActivityDataset no_res = ActivityDataset::create({Matrix::Zero(2, 3)});
    REQUIRE_THROWS_AS(estimate_sigma_p(no_res, 2), MissingResidualsError);
    ActivityDataset few = ActivityDataset::create({Matrix::Zero(2, 3)},
                                                  {Matrix::Zero(2, 3)});
    REQUIRE_THROWS_AS(estimate_sigma_p(few, 2), DegreesOfFreedomError);
}

TEST_CASE("shrinkage endpoints and hand-computed midpoint") {
    Matrix s(2, 2);
    s << 2, 1, 1, 2;
    REQUIRE(shrink_sigma_p(s, 0.0) == s);
    Matrix diag_only = shrink_sigma_p(s, 1.0);
    REQUIRE(diag_only(0, 1) == 0.0);
    REQUIRE(diag_only(0, 0) == 2.0);
    Matrix mid = shrink_sigma_p(s, 0.3);
    REQUIRE(mid(0, 0) == Approx(2.0));
    REQUIRE(mid(0, 1) == Approx(0.7));
    REQUIRE(mid(1, 0) == Approx(0.7));
    REQUIRE_THROWS_AS(shrink_sigma_p(s, 1.5), InvalidArgument);
    REQUIRE_THROWS_AS(shrink_sigma_p(s, -0.1), InvalidArgument);
}

TEST_CASE("shrinkage preserves the diagonal for every h") {
    RandomStream rng(33, 0);
    Matrix a = rng.normal_matrix(4, 4);
    Matrix s = a * a.transpose();
    for (double h : {0.0, 0.1, 0.5, 0.9, 1.0}) {
        Matrix out = shrink_sigma_p(s, h);
        REQUIRE((out.diagonal() - s.diagonal()).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("prewhitening with the identity leaves patterns unchanged") {
    RandomStream rng(34, 0);
    Matrix b = rng.normal_matrix(3, 4);
    ActivityDataset ds = ActivityDataset::create({b});
    ActivityDataset out = prewhiten(ds, Matrix::Identity(4, 4));
    REQUIRE((out.patterns[0] - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("prewhitening with 4*I halves the patterns") {
    RandomStream rng(35, 0);
    Matrix b = rng.normal_matrix(3, 4);
    ActivityDataset ds = ActivityDataset::create({b});
    ActivityDataset out = prewhiten(ds, 4.0 * Matrix::Identity(4, 4));
    REQUIRE((out.patterns[0] - 0.5 * b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("inverse square root reconstructs the identity") {
    RandomStream rng(36, 0);
    Matrix a = rng.normal_matrix(3, 3);
    Matrix spd = a * a.transpose() + 0.5 * Matrix::Identity(3, 3);
    Matrix w = symmetric_inv_sqrt(spd);
    REQUIRE((w * spd * w - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() <
            1e-10);
}

TEST_CASE("near-singular sigma_tilde raises a conditioning error") {
    Matrix nearly(2, 2);
    nearly << 1.0, 0.0, 0.0, 1e-14;
    ActivityDataset ds = ActivityDataset::create({Matrix::Ones(2, 2)});
    REQUIRE_THROWS_AS(prewhiten(ds, nearly), ConditioningError);
}

TEST_CASE("effective channel count: identity, rank-1, and range") {
    REQUIRE(effective_channel_count(Matrix::Identity(216, 216)) == 216.0);
    RandomStream rng(37, 0);
    Vector x = rng.normal_matrix(9, 1);
    Matrix rank1 = x * x.transpose();
    REQUIRE(effective_channel_count(rank1) == Approx(1.0));
    for (int trial = 0; trial < 10; ++trial) {
        Matrix a = rng.normal_matrix(6, 6);
        Matrix psd = a * a.transpose();
        double eff = effective_channel_count(psd);
        REQUIRE(eff >= 1.0 - 1e-12);
        REQUIRE(eff <= 6.0 + 1e-12);
    }
    REQUIRE_THROWS_AS(effective_channel_count(Matrix::Zero(3, 3)),
                      InvalidArgument);
}

TEST_CASE("sigma_p normalization fixes the trace at P") {
    Matrix two = 2.0 * Matrix::Identity(4, 4);
    REQUIRE((normalize_sigma_p(two) - Matrix::Identity(4, 4))
                .cwiseAbs()
                .maxCoeff() < 1e-14);
    RandomStream rng(38, 0);
    Matrix a = rng.normal_matrix(5, 5);
    Matrix psd = a * a.transpose();
    Matrix out = normalize_sigma_p(psd);
    REQUIRE(out.trace() == Approx(5.0).epsilon(1e-12));
    Matrix already = normalize_sigma_p(out);
    REQUIRE((already - out).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE_THROWS_AS(normalize_sigma_p(Matrix::Zero(3, 3)), InvalidArgument);
}

TEST_CASE("prewhitened Euclidean equals direct Mahalanobis") {
    RandomStream rng(39, 0);
    const int k = 4, p = 6, m = 3;
    Matrix a = rng.normal_matrix(p, p);
    Matrix sigma = a * a.transpose() / p + 0.3 * Matrix::Identity(p, p);
    std::vector<Matrix> parts;
    for (int i = 0; i < m; ++i) parts.push_back(rng.normal_matrix(k, p));
    ActivityDataset ds = ActivityDataset::create(parts);
    ContrastMatrix cm = build_contrast_matrix(k);

    Vector white = unbiased_distances(prewhiten(ds, sigma), cm).d;

    // Direct crossvalidated Mahalanobis with Sigma^{-1} on raw patterns.
    Matrix sigma_inv = sigma.llt().solve(Matrix::Identity(p, p));
    auto diffs = pattern_differences(ds, cm);
    Vector direct = Vector::Zero(cm.d());
    for (int x = 0; x < m; ++x)
        for (int y = 0; y < m; ++y) {
            if (x == y) continue;
            direct += (diffs[x] * sigma_inv)
                          .cwiseProduct(diffs[y])
                          .rowwise()
                          .sum();
        }
    direct /= static_cast<double>(m) * (m - 1) * p;
    REQUIRE((white - direct).cwiseAbs().maxCoeff() <
            1e-8 * direct.cwiseAbs().maxCoeff());
}

TEST_CASE("NoiseSpec validates and normalizes") {
    NoiseSpec spec = NoiseSpec::create(Matrix::Identity(3, 3),
                                       2.0 * Matrix::Identity(4, 4));
    REQUIRE(spec.sigma_p.trace() == Approx(4.0));
    Matrix not_psd(2, 2);
    not_psd << 1, 2, 2, 1;
    REQUIRE_THROWS_AS(NoiseSpec::create(not_psd, Matrix::Identity(2, 2)),
                      InvalidArgument);
}
