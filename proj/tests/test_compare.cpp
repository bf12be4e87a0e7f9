#include <catch2/catch.hpp>

#include "rdmkit/compare.hpp"
#include "rdmkit/estimators.hpp"
#include "rdmkit/rng.hpp"

using namespace rdmkit;

namespace {

Vector vec(std::initializer_list<double> values) {
    Vector v(static_cast<Index>(values.size()));
    Index i = 0;
    for (double x : values) v[i++] = x;
    return v;
}

}  // namespace

TEST_CASE("cosine similarity basics") {
    Vector d = vec({1, 2, 2});
    REQUIRE(cosine_similarity(d, d) == Approx(1.0));
    REQUIRE(cosine_similarity(vec({1, 0}), vec({0, 1})) == Approx(0.0));
    REQUIRE(cosine_similarity(vec({1, 2, 2}), vec({2, 1, 2})) ==
            Approx(8.0 / 9.0));
    REQUIRE_THROWS_AS(cosine_similarity(vec({0, 0}), vec({1, 1})),
                      UndefinedSimilarityError);
}

TEST_CASE("whitened cosine with identity V equals the plain cosine") {
    RandomStream rng(61, 0);
    Vector d = rng.normal_matrix(6, 1), m = rng.normal_matrix(6, 1);
    DistanceCovariance v{Matrix::Identity(6, 6), CovKind::null_model, 4};
    REQUIRE(whitened_cosine(d, m, v) ==
            Approx(cosine_similarity(d, m)).margin(1e-12));
}

TEST_CASE("whitened cosine of a vector with itself is one") {
    RandomStream rng(62, 0);
    Matrix a = rng.normal_matrix(6, 6);
    DistanceCovariance v{Matrix(a * a.transpose()), CovKind::null_model, 4};
    Vector d = rng.normal_matrix(6, 1);
    REQUIRE(whitened_cosine(d, d, v) == Approx(1.0).margin(1e-10));
}

TEST_CASE("whitened cosine agrees with an independent V-inverse evaluation") {
    RandomStream rng(63, 0);
    ContrastMatrix cm = build_contrast_matrix(5);
    DistanceCovariance v = null_covariance(Matrix::Identity(5, 5), cm);
    Matrix vinv = v.v.llt().solve(Matrix::Identity(10, 10));
    for (int trial = 0; trial < 20; ++trial) {
        Vector d = rng.normal_matrix(10, 1), m = rng.normal_matrix(10, 1);
        double via_w = whitened_cosine(d, m, v);
        double num = d.dot(vinv * m);
        double den = std::sqrt(d.dot(vinv * d) * m.dot(vinv * m));
        REQUIRE(via_w == Approx(num / den).margin(1e-12));
    }
}

TEST_CASE("whitened cosine rejects vectors annihilated by the pseudo-inverse") {
    // V of rank 1 spanned by (1,0): the vector (0,1) is annihilated.
    Matrix v(2, 2);
    v << 1, 0, 0, 0;
    DistanceCovariance cov{v, CovKind::null_model, 0};
    REQUIRE_THROWS_AS(whitened_cosine(vec({0, 1}), vec({1, 0}), cov),
                      UndefinedSimilarityError);
}

TEST_CASE("whitened Pearson with identity V equals plain Pearson") {
    RandomStream rng(64, 0);
    Vector d = rng.normal_matrix(8, 1), m = rng.normal_matrix(8, 1);
    DistanceCovariance v{Matrix::Identity(8, 8), CovKind::null_model, 0};
    REQUIRE(whitened_pearson(d, m, v) == Approx(pearson(d, m)).margin(1e-12));
}

TEST_CASE("whitened Pearson is invariant to positive affine maps of the model") {
    RandomStream rng(65, 0);
    ContrastMatrix cm = build_contrast_matrix(4);
    DistanceCovariance v = null_covariance(Matrix::Identity(4, 4), cm);
    Vector d = rng.normal_matrix(6, 1), m = rng.normal_matrix(6, 1);
    double base = whitened_pearson(d, m, v);
    Vector affine = 2.5 * m + Vector::Constant(6, 7.0);
    REQUIRE(whitened_pearson(d, affine, v) == Approx(base).margin(1e-12));
}

TEST_CASE("whitened Pearson equals whitened cosine of centered inputs") {
    RandomStream rng(66, 0);
    ContrastMatrix cm = build_contrast_matrix(4);
    DistanceCovariance v = null_covariance(Matrix::Identity(4, 4), cm);
    Vector d = rng.normal_matrix(6, 1), m = rng.normal_matrix(6, 1);
    Vector dc = d.array() - d.mean(), mc = m.array() - m.mean();
    REQUIRE(whitened_pearson(d, m, v) ==
            Approx(whitened_cosine(dc, mc, v)).margin(1e-12));
}

TEST_CASE("whitened Pearson rejects constant vectors") {
    DistanceCovariance v{Matrix::Identity(3, 3), CovKind::null_model, 0};
    REQUIRE_THROWS_AS(whitened_pearson(vec({2, 2, 2}), vec({1, 2, 3}), v),
                      UndefinedSimilarityError);
}

TEST_CASE("rank correlations on identical and reversed orders") {
    Vector d = vec({0.3, 1.2, 2.0, 5.5});
    RankCorrelations same = rank_correlations(d, d);
    REQUIRE(same.spearman == Approx(1.0));
    REQUIRE(same.kendall_tau_a == Approx(1.0));
    Vector rev = vec({5.5, 2.0, 1.2, 0.3});
    RankCorrelations flip = rank_correlations(d, rev);
    REQUIRE(flip.spearman == Approx(-1.0));
    REQUIRE(flip.kendall_tau_a == Approx(-1.0));
}

TEST_CASE("kendall tau_a counts discordant pairs") {
    RankCorrelations rc =
        rank_correlations(vec({1, 2, 3, 4}), vec({1, 3, 2, 4}));
    REQUIRE(rc.kendall_tau_a == Approx(2.0 / 3.0));
}

TEST_CASE("ties shrink |tau_a| and use average ranks for Spearman") {
    Vector d = vec({1, 1, 2});
    Vector m = vec({1, 2, 3});
    RankCorrelations rc = rank_correlations(d, m);
    // one concordant-relevant pair is tied in d: tau_a = (2 - 0) / 3
    REQUIRE(rc.kendall_tau_a == Approx(2.0 / 3.0));
    REQUIRE(rc.spearman < 1.0);
    REQUIRE_THROWS_AS(rank_correlations(vec({1}), vec({1})), InvalidArgument);
}

TEST_CASE("linear CKA of a matrix with itself is one") {
    RandomStream rng(67, 0);
    Matrix a = rng.normal_matrix(5, 8);
    REQUIRE(linear_cka(a, a) == Approx(1.0).margin(1e-12));
}

TEST_CASE("linear CKA is invariant to channel rotations") {
    RandomStream rng(68, 0);
    Matrix a = rng.normal_matrix(6, 6);
    Eigen::HouseholderQR<Matrix> qr(rng.normal_matrix(6, 6));
    Matrix rot = qr.householderQ();
    REQUIRE(linear_cka(a, a * rot) == Approx(1.0).margin(1e-10));
    Matrix constant_rows = Matrix::Ones(6, 4);
    REQUIRE_THROWS_AS(linear_cka(a, constant_rows), UndefinedSimilarityError);
}

TEST_CASE("linear CKA equals the whitened cosine of biased distances") {
    RandomStream rng(69, 0);
    for (int trial = 0; trial < 10; ++trial) {
        int k = 3 + trial % 5;
        Matrix a = rng.normal_matrix(k, k + 3);
        Matrix b = rng.normal_matrix(k, k + 5);
        ContrastMatrix cm = build_contrast_matrix(k);
        Vector da = biased_distances(ActivityDataset::create({a}), cm).d;
        Vector db = biased_distances(ActivityDataset::create({b}), cm).d;
        DistanceCovariance v = null_covariance(Matrix::Identity(k, k), cm);
        REQUIRE(linear_cka(a, b) ==
                Approx(whitened_cosine(da, db, v)).margin(1e-10));
    }
}

TEST_CASE("single-component fit is the least-squares projection") {
    Vector d = vec({1, 2, 3});
    Vector m = vec({1, 1, 1});
    DistanceCovariance v{Matrix::Identity(3, 3), CovKind::null_model, 0};
    WeightedFit fit = fit_weighted_model(d, {{"m", m}}, v);
    REQUIRE(fit.theta[0] == Approx(d.dot(m) / m.dot(m)));
}

TEST_CASE("exact two-component recovery under any SPD weighting") {
    RandomStream rng(70, 0);
    Vector m1 = rng.normal_matrix(6, 1), m2 = rng.normal_matrix(6, 1);
    Vector d = 2.0 * m1 + 3.0 * m2;
    Matrix a = rng.normal_matrix(6, 6);
    DistanceCovariance v{Matrix(a * a.transpose() + Matrix::Identity(6, 6)),
                         CovKind::null_model, 0};
    WeightedFit fit = fit_weighted_model(d, {{"m1", m1}, {"m2", m2}}, v);
    REQUIRE(fit.theta[0] == Approx(2.0).margin(1e-9));
    REQUIRE(fit.theta[1] == Approx(3.0).margin(1e-9));
    REQUIRE(fit.loss < 1e-9);
}

TEST_CASE("fitted loss beats random perturbations") {
    RandomStream rng(71, 0);
    ContrastMatrix cm = build_contrast_matrix(5);
    DistanceCovariance v = null_covariance(Matrix::Identity(5, 5), cm);
    Vector m1 = rng.normal_matrix(10, 1), m2 = rng.normal_matrix(10, 1);
    Vector d = rng.normal_matrix(10, 1);
    std::vector<ModelRDM> comps = {{"m1", m1}, {"m2", m2}};
    WeightedFit fit = fit_weighted_model(d, comps, v);
    Matrix vinv = v.v.llt().solve(Matrix::Identity(10, 10));
    auto loss_at = [&](const Vector& theta) {
        Vector resid = d - theta[0] * m1 - theta[1] * m2;
        return resid.dot(vinv * resid);
    };
    REQUIRE(fit.loss == Approx(loss_at(fit.theta)).margin(1e-9));
    for (int trial = 0; trial < 1000; ++trial) {
        Vector perturbed = fit.theta + 0.1 * rng.normal_matrix(2, 1);
        REQUIRE(fit.loss <= loss_at(perturbed) + 1e-9);
    }
}

TEST_CASE("rank-deficient designs are rejected") {
    Vector m1 = vec({1, 2, 3});
    Vector m2 = vec({2, 4, 6});
    DistanceCovariance v{Matrix::Identity(3, 3), CovKind::null_model, 0};
    REQUIRE_THROWS_AS(
        fit_weighted_model(vec({1, 1, 1}), {{"m1", m1}, {"m2", m2}}, v),
        DegenerateModelError);
}

TEST_CASE("nonnegative fit clamps negative weights") {
    Vector m1 = vec({1, 0, 0});
    Vector m2 = vec({0, 1, 0});
    Vector d = vec({-2, 3, 0});
    DistanceCovariance v{Matrix::Identity(3, 3), CovKind::null_model, 0};
    WeightedFit fit = fit_weighted_model(d, {{"m1", m1}, {"m2", m2}}, v, true);
    REQUIRE(fit.theta[0] == 0.0);
    REQUIRE(fit.theta[1] == Approx(3.0).margin(1e-9));
    // interior optimum: matches the unconstrained solution
    Vector d2 = vec({2, 3, 0});
    WeightedFit free = fit_weighted_model(d2, {{"m1", m1}, {"m2", m2}}, v);
    WeightedFit clamped =
        fit_weighted_model(d2, {{"m1", m1}, {"m2", m2}}, v, true);
    REQUIRE((free.theta - clamped.theta).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("criterion values stay within [-1, 1]") {
    RandomStream rng(72, 0);
    ContrastMatrix cm = build_contrast_matrix(4);
    DistanceCovariance v = null_covariance(Matrix::Identity(4, 4), cm);
    for (int trial = 0; trial < 50; ++trial) {
        Vector d = rng.normal_matrix(6, 1), m = rng.normal_matrix(6, 1);
        for (double value :
             {cosine_similarity(d, m), pearson(d, m), whitened_cosine(d, m, v),
              whitened_pearson(d, m, v), rank_correlations(d, m).spearman,
              rank_correlations(d, m).kendall_tau_a}) {
            REQUIRE(value <= 1.0 + 1e-12);
            REQUIRE(value >= -1.0 - 1e-12);
        }
    }
}

TEST_CASE("criteria are invariant to positive rescaling of both vectors") {
    RandomStream rng(73, 0);
    ContrastMatrix cm = build_contrast_matrix(4);
    DistanceCovariance v = null_covariance(Matrix::Identity(4, 4), cm);
    Vector d = rng.normal_matrix(6, 1), m = rng.normal_matrix(6, 1);
    const double a = 3.7, b = 0.2;
    REQUIRE(cosine_similarity(a * d, b * m) ==
            Approx(cosine_similarity(d, m)).margin(1e-12));
    REQUIRE(pearson(a * d, b * m) == Approx(pearson(d, m)).margin(1e-12));
    REQUIRE(whitened_cosine(a * d, b * m, v) ==
            Approx(whitened_cosine(d, m, v)).margin(1e-12));
    REQUIRE(whitened_pearson(a * d, b * m, v) ==
            Approx(whitened_pearson(d, m, v)).margin(1e-12));
    RankCorrelations r1 = rank_correlations(d, m);
    RankCorrelations r2 = rank_correlations(a * d, b * m);
    REQUIRE(r1.spearman == Approx(r2.spearman));
    REQUIRE(r1.kendall_tau_a == Approx(r2.kendall_tau_a));
}

TEST_CASE("whitened criteria ignore the scale of V") {
    RandomStream rng(74, 0);
    ContrastMatrix cm = build_contrast_matrix(5);
    DistanceCovariance v = null_covariance(Matrix::Identity(5, 5), cm);
    DistanceCovariance v_scaled{Matrix(17.3 * v.v), v.kind, v.k};
    Vector d = rng.normal_matrix(10, 1), m = rng.normal_matrix(10, 1);
    REQUIRE(whitened_cosine(d, m, v) ==
            Approx(whitened_cosine(d, m, v_scaled)).margin(1e-12));
    REQUIRE(whitened_pearson(d, m, v) ==
            Approx(whitened_pearson(d, m, v_scaled)).margin(1e-12));
}

TEST_CASE("disjoint supports give a WUC of exactly zero under identity V") {
    Vector d = vec({1.5, 0, 2.0, 0, 0, 0});
    Vector m = vec({0, 2.0, 0, 1.0, 0, 3.0});
    DistanceCovariance v{Matrix::Identity(6, 6), CovKind::null_model, 4};
    REQUIRE(whitened_cosine(d, m, v) == 0.0);
}

TEST_CASE("compare_models picks the winner and sorts by name") {
    Vector d = vec({1, 2, 3});
    std::vector<ModelRDM> models = {{"zebra", vec({1, 2, 3})},
                                    {"alpha", vec({3, 2, 1})}};
    ComparisonResult res = compare_models(d, 3, models, Criterion::cosine);
    REQUIRE(res.per_model.front().first == "alpha");
    REQUIRE(res.winner == "zebra");
    ComparisonResult tie = compare_models(
        d, 3, {{"b", vec({1, 2, 3})}, {"a", vec({2, 4, 6})}},
        Criterion::cosine);
    REQUIRE(tie.winner == "a");  // exact tie broken by name order
}

TEST_CASE("criterion names parse and print round-trip") {
    for (Criterion c :
         {Criterion::cosine, Criterion::pearson, Criterion::whitened_cosine,
          Criterion::whitened_pearson, Criterion::spearman,
          Criterion::kendall_tau_a, Criterion::cka}) {
        REQUIRE(parse_criterion(to_string(c)) == c);
    }
    REQUIRE(parse_criterion("wuc") == Criterion::whitened_cosine);
    REQUIRE_THROWS_AS(parse_criterion("nope"), InvalidArgument);
}
