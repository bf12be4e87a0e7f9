#pragma once

// Release-gate checks: analytical results validated against Monte Carlo
// oracles and exact structure tests. The acceptance binary runs all of them
// at full simulation budgets; `rdmkit selftest` runs the fast subset at a
// reduced scale.

#include <chrono>
#include <cmath>
#include <sstream>

#include "rdmkit/rdmkit.hpp"

namespace rdmkit::selfcheck {

struct CheckResult {
    int id = 0;
    std::string name;
    bool pass = true;
    std::string detail;
    double seconds = 0.0;
};

struct CheckOptions {
    double sims_scale = 1.0;  // multiplies every Monte Carlo budget
    int threads = 0;
    double v_perturbation = 0.0;  // test hook: additive distortion of V
};

namespace detail {

class Timer {
  public:
    Timer() : t0_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                             t0_)
            .count();
    }

  private:
    std::chrono::steady_clock::time_point t0_;
};

inline int scaled(int n, double scale) {
    return std::max(100, static_cast<int>(n * scale));
}

struct Expect {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& msg) {
        if (!ok) {
            pass = false;
            if (detail.tellp() > 0) detail << "; ";
            detail << msg;
        }
    }
    void note(const std::string& msg) {
        if (detail.tellp() > 0) detail << "; ";
        detail << msg;
    }
};

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(5);
    os << v;
    return os.str();
}

// Batch-mean accumulator for covariance/correlation statistics whose
// standard errors are estimated from the spread across batches.
struct BatchCov {
    Index dim;
    int n_batches;
    int per_batch;
    Matrix batch_cov_sum;
    Matrix batch_cov_sq;
    Vector sum;
    Matrix outer;
    Vector batch_sum;
    Matrix batch_outer;
    int in_batch = 0;
    int done_batches = 0;
    long long n_total = 0;

    BatchCov(Index d, int batches, int per)
        : dim(d),
          n_batches(batches),
          per_batch(per),
          batch_cov_sum(Matrix::Zero(d, d)),
          batch_cov_sq(Matrix::Zero(d, d)),
          sum(Vector::Zero(d)),
          outer(Matrix::Zero(d, d)),
          batch_sum(Vector::Zero(d)),
          batch_outer(Matrix::Zero(d, d)) {}

    void add(const Vector& x) {
        sum += x;
        outer.noalias() += x * x.transpose();
        batch_sum += x;
        batch_outer.noalias() += x * x.transpose();
        ++n_total;
        if (++in_batch == per_batch) flush_batch();
    }

    void flush_batch() {
        const double n = static_cast<double>(in_batch);
        Vector mean = batch_sum / n;
        Matrix cov = (batch_outer - n * mean * mean.transpose()) / (n - 1.0);
        batch_cov_sum += cov;
        batch_cov_sq += cov.cwiseProduct(cov);
        batch_sum.setZero();
        batch_outer.setZero();
        in_batch = 0;
        ++done_batches;
    }

    Vector mean() const { return sum / static_cast<double>(n_total); }

    // Pooled covariance over all samples.
    Matrix cov() const {
        const double n = static_cast<double>(n_total);
        Vector mu = mean();
        return (outer - n * mu * mu.transpose()) / (n - 1.0);
    }

    // Standard error of each covariance entry from the batch spread.
    Matrix cov_se() const {
        const double b = static_cast<double>(done_batches);
        Matrix m = batch_cov_sum / b;
        Matrix var = (batch_cov_sq / b - m.cwiseProduct(m)) * (b / (b - 1.0));
        return (var.cwiseMax(0.0) / b).cwiseSqrt();
    }

    Matrix corr() const {
        Matrix c = cov();
        Vector sd = c.diagonal().cwiseSqrt();
        return c.array() / (sd * sd.transpose()).array();
    }
};

}  // namespace detail

// Criteria 1 and 2 share one simulation: K=4 geometry realizing true squared
// distances {0, 0.5, 1.0} (a zero distance forces two coincident patterns,
// which is impossible jointly with unequal remaining distances at K=3, so
// the smallest realizable configuration uses 4 conditions).
inline std::pair<CheckResult, CheckResult> check_unbiasedness_and_bias(
    const CheckOptions& opt) {
    detail::Timer timer;
    const int k = 4, p = 20, m = 4;
    const int n_sims = detail::scaled(100000, opt.sims_scale);
    Matrix b_true = Matrix::Zero(k, p);
    b_true(2, 0) = std::sqrt(0.5 * p);
    b_true(3, 1) = std::sqrt(0.5 * p);
    ContrastMatrix cm = build_contrast_matrix(k);
    Vector truth(6);
    truth << 0.0, 0.5, 0.5, 0.5, 0.5, 1.0;

    detail::BatchCov acc_u(6, 100, n_sims / 100);
    detail::BatchCov acc_b(6, 100, n_sims / 100);
    for (int t = 0; t < n_sims; ++t) {
        RandomStream rng(90210, static_cast<std::uint64_t>(t));
        std::vector<Matrix> parts;
        for (int i = 0; i < m; ++i)
            parts.push_back(b_true + rng.normal_matrix(k, p));
        ActivityDataset ds = ActivityDataset::create(std::move(parts));
        acc_u.add(unbiased_distances(ds, cm).d);
        acc_b.add(biased_distances(ds, cm).d);
    }

    detail::Expect e1, e2;
    const double n = static_cast<double>(n_sims);
    Vector mean_u = acc_u.mean(), mean_b = acc_b.mean();
    Vector se_u = (acc_u.cov().diagonal() / n).cwiseSqrt();
    Vector se_b = (acc_b.cov().diagonal() / n).cwiseSqrt();
    const double bias = 2.0 / m;  // Xi_kk / M with Sigma_K = I
    for (int i = 0; i < 6; ++i) {
        e1.require(std::abs(mean_u[i] - truth[i]) <= 3.0 * se_u[i],
                   "pair " + std::to_string(i + 1) + ": mean d~ " +
                       detail::fmt(mean_u[i]) + " vs truth " +
                       detail::fmt(truth[i]) + " (3se " +
                       detail::fmt(3 * se_u[i]) + ")");
        e2.require(std::abs(mean_b[i] - truth[i] - bias) <= 3.0 * se_b[i],
                   "pair " + std::to_string(i + 1) + ": mean d^ - truth " +
                       detail::fmt(mean_b[i] - truth[i]) + " vs 2/M " +
                       detail::fmt(bias) + " (3se " + detail::fmt(3 * se_b[i]) +
                       ")");
    }
    double sec = timer.seconds();
    e1.require(sec < 30.0, "runtime " + detail::fmt(sec) + "s exceeds 30s");
    if (e1.pass)
        e1.note("max |mean - truth| " +
                detail::fmt((mean_u - truth).cwiseAbs().maxCoeff()) + " over " +
                std::to_string(n_sims) + " sims");
    if (e2.pass)
        e2.note("mean bias " + detail::fmt((mean_b - truth).mean()) + " vs " +
                detail::fmt(bias));
    CheckResult r1{1, "unbiasedness of crossvalidated distances", e1.pass,
                   e1.detail.str(), sec};
    CheckResult r2{2, "bias formula for the biased estimator", e2.pass,
                   e2.detail.str(), sec};
    return {r1, r2};
}

inline CheckResult check_covariance_formulas(const CheckOptions& opt) {
    detail::Timer timer;
    const int k = 3, p = 5, m = 4;
    const int n_sims = detail::scaled(200000, opt.sims_scale);
    RandomStream setup(777, 0);
    Matrix a = setup.normal_matrix(p, p);
    Matrix sigma_p = normalize_sigma_p(
        a * a.transpose() / p + 0.2 * Matrix::Identity(p, p));
    Matrix sqrt_p = symmetric_sqrt(sigma_p);
    Matrix b_true = setup.normal_matrix(k, p);
    ContrastMatrix cm = build_contrast_matrix(k);
    Matrix delta = cm.c * b_true;
    Matrix xi = xi_matrix(Matrix::Identity(k, k), cm);
    Matrix cov_b =
        full_covariance(Estimator::biased, delta, sigma_p, xi, m).v;
    Matrix cov_u =
        full_covariance(Estimator::unbiased, delta, sigma_p, xi, m).v;

    detail::BatchCov acc_b(3, 100, n_sims / 100), acc_u(3, 100, n_sims / 100);
    for (int t = 0; t < n_sims; ++t) {
        RandomStream rng(777001, static_cast<std::uint64_t>(t));
        std::vector<Matrix> parts;
        for (int i = 0; i < m; ++i)
            parts.push_back(b_true + rng.normal_matrix(k, p) * sqrt_p);
        ActivityDataset ds = ActivityDataset::create(std::move(parts));
        acc_b.add(biased_distances(ds, cm).d);
        acc_u.add(unbiased_distances(ds, cm).d);
    }

    detail::Expect e;
    auto check_side = [&](const char* tag, const detail::BatchCov& acc,
                          const Matrix& analytic) {
        Matrix emp = acc.cov();
        Matrix se = acc.cov_se();
        for (int i = 0; i < 3; ++i) {
            double rel = std::abs(emp(i, i) - analytic(i, i)) / analytic(i, i);
            e.require(rel <= 0.05, std::string(tag) + " var(" +
                                       std::to_string(i + 1) + ") off by " +
                                       detail::fmt(100 * rel) + "%");
            for (int j = i + 1; j < 3; ++j)
                e.require(std::abs(emp(i, j) - analytic(i, j)) <=
                              3.0 * se(i, j),
                          std::string(tag) + " cov(" + std::to_string(i + 1) +
                              "," + std::to_string(j + 1) + ") " +
                              detail::fmt(emp(i, j)) + " vs " +
                              detail::fmt(analytic(i, j)));
        }
    };
    check_side("biased", acc_b, cov_b);
    check_side("unbiased", acc_u, cov_u);
    double sec = timer.seconds();
    e.require(sec < 120.0, "runtime " + detail::fmt(sec) + "s exceeds 2min");
    if (e.pass)
        e.note("diag rel err <= " +
               detail::fmt(std::max(
                   ((acc_b.cov().diagonal() - cov_b.diagonal()).cwiseAbs().array() /
                    cov_b.diagonal().array())
                       .maxCoeff(),
                   ((acc_u.cov().diagonal() - cov_u.diagonal()).cwiseAbs().array() /
                    cov_u.diagonal().array())
                       .maxCoeff())) +
               " over " + std::to_string(n_sims) + " sims");
    return {3, "analytical covariance of distance estimates", e.pass,
            e.detail.str(), sec};
}

inline CheckResult check_variance_ratio(const CheckOptions& opt) {
    detail::Timer timer;
    const int k = 3, p = 10;
    const int n_sims = detail::scaled(200000, opt.sims_scale);
    ContrastMatrix cm = build_contrast_matrix(k);
    detail::Expect e;
    for (int m : {2, 4, 8}) {
        detail::BatchCov acc_b(3, 100, n_sims / 100),
            acc_u(3, 100, n_sims / 100);
        for (int t = 0; t < n_sims; ++t) {
            RandomStream rng(4000 + static_cast<std::uint64_t>(m),
                             static_cast<std::uint64_t>(t));
            std::vector<Matrix> parts;
            for (int i = 0; i < m; ++i) parts.push_back(rng.normal_matrix(k, p));
            ActivityDataset ds = ActivityDataset::create(std::move(parts));
            acc_b.add(biased_distances(ds, cm).d);
            acc_u.add(unbiased_distances(ds, cm).d);
        }
        Vector var_b = acc_b.cov().diagonal();
        Vector var_u = acc_u.cov().diagonal();
        const double expected = static_cast<double>(m) / (m - 1);
        for (int i = 0; i < 3; ++i) {
            double ratio = var_u[i] / var_b[i];
            e.require(std::abs(ratio - expected) <= 0.03 * expected,
                      "M=" + std::to_string(m) + " pair " +
                          std::to_string(i + 1) + ": ratio " +
                          detail::fmt(ratio) + " vs " + detail::fmt(expected));
        }
    }
    if (e.pass) e.note("var(d~)/var(d^) matches M/(M-1) for M in {2,4,8}");
    return {4, "variance ratio of unbiased vs biased estimates", e.pass,
            e.detail.str(), timer.seconds()};
}

inline CheckResult check_null_covariance_structure(const CheckOptions& opt) {
    detail::Timer timer;
    const int k = 5, p = 20, m = 2;
    const int n_sims = detail::scaled(100000, opt.sims_scale);
    ContrastMatrix cm = build_contrast_matrix(k);
    Matrix v = null_covariance(Matrix::Identity(k, k), cm).v;
    detail::Expect e;

    auto shares_condition = [&](Index a, Index b) {
        auto pa = cm.pair_index[static_cast<std::size_t>(a)];
        auto pb = cm.pair_index[static_cast<std::size_t>(b)];
        return pa.first == pb.first || pa.first == pb.second ||
               pa.second == pb.first || pa.second == pb.second;
    };
    for (Index a = 0; a < cm.d(); ++a) {
        for (Index b = a + 1; b < cm.d(); ++b) {
            double r = v(a, b) / std::sqrt(v(a, a) * v(b, b));
            if (shares_condition(a, b))
                e.require(r == 0.25, "analytic corr of sharing pair not 0.25");
            else
                e.require(v(a, b) == 0.0, "analytic disjoint covariance not 0");
        }
    }

    detail::BatchCov acc(cm.d(), 100, n_sims / 100);
    for (int t = 0; t < n_sims; ++t) {
        RandomStream rng(5150, static_cast<std::uint64_t>(t));
        std::vector<Matrix> parts;
        for (int i = 0; i < m; ++i) parts.push_back(rng.normal_matrix(k, p));
        ActivityDataset ds = ActivityDataset::create(std::move(parts));
        acc.add(unbiased_distances(ds, cm).d);
    }
    Matrix emp = acc.cov();
    Matrix se = acc.cov_se();
    Vector sd = emp.diagonal().cwiseSqrt();
    for (Index a = 0; a < cm.d(); ++a) {
        for (Index b = a + 1; b < cm.d(); ++b) {
            double target = shares_condition(a, b) ? 0.25 : 0.0;
            double r = emp(a, b) / (sd[a] * sd[b]);
            double r_se = se(a, b) / (sd[a] * sd[b]);
            e.require(std::abs(r - target) <= 3.0 * r_se,
                      "empirical corr(" + std::to_string(a) + "," +
                          std::to_string(b) + ") " + detail::fmt(r) + " vs " +
                          detail::fmt(target));
        }
    }
    if (e.pass)
        e.note("corr 0.25 for condition-sharing pairs, 0 for disjoint pairs");
    return {5, "null covariance structure at K=5", e.pass, e.detail.str(),
            timer.seconds()};
}

inline CheckResult check_eigenstructure(const CheckOptions& opt) {
    detail::Timer timer;
    detail::Expect e;
    double k40_seconds = 0.0;
    for (int k : {5, 10, 18, 40}) {
        detail::Timer per_k;
        ContrastMatrix cm = build_contrast_matrix(k);
        Matrix v = null_covariance(Matrix::Identity(k, k), cm).v;
        if (opt.v_perturbation != 0.0) {
            v(0, 1) += opt.v_perturbation;
            v(1, 0) += opt.v_perturbation;
        }
        Matrix w = whitener({v, CovKind::null_model, k});
        if (k == 40) k40_seconds = per_k.seconds();
        Vector ev = symmetric_eigenvalues(v);
        const double lo = ev.minCoeff(), hi = ev.maxCoeff();
        e.require(std::abs(hi / lo - k) <= 1e-9 * k,
                  "K=" + std::to_string(k) + ": lambda_max/lambda_min " +
                      detail::fmt(hi / lo) + " != K");
        // eigenvalues of Xi o Xi with Sigma_K = I: {2K x1, K x(K-1),
        // 2 x K(K-3)/2}, i.e. ratios K : K/2 : 1
        int n_small = 0, n_mid = 0, n_big = 0;
        for (Index i = 0; i < ev.size(); ++i) {
            if (std::abs(ev[i] - 2.0) <= 1e-9)
                ++n_small;
            else if (std::abs(ev[i] - k) <= 1e-9 * k)
                ++n_mid;
            else if (std::abs(ev[i] - 2.0 * k) <= 1e-9 * k)
                ++n_big;
        }
        e.require(n_big == 1 && n_mid == k - 1 &&
                      n_small == k * (k - 3) / 2 &&
                      n_small + n_mid + n_big == ev.size(),
                  "K=" + std::to_string(k) + ": multiplicities " +
                      std::to_string(n_big) + "/" + std::to_string(n_mid) +
                      "/" + std::to_string(n_small) + " not 1/" +
                      std::to_string(k - 1) + "/" +
                      std::to_string(k * (k - 3) / 2));
        Matrix wvw = w * v * w;
        e.require((wvw - Matrix::Identity(v.rows(), v.cols()))
                          .cwiseAbs()
                          .maxCoeff() <= 1e-9,
                  "K=" + std::to_string(k) + ": W V W far from identity");
    }
    e.require(k40_seconds < 1.0, "K=40 V + whitener took " +
                                     detail::fmt(k40_seconds) + "s (>= 1s)");
    if (e.pass)
        e.note("ratios K : K/2 : 1, anisotropy K; K=40 built in " +
               detail::fmt(k40_seconds) + "s");
    return {6, "eigenstructure of the null covariance", e.pass, e.detail.str(),
            timer.seconds()};
}

inline CheckResult check_cka_equivalence(const CheckOptions&) {
    detail::Timer timer;
    detail::Expect e;
    RandomStream rng(31337, 0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        int k = 3 + trial % 6;
        int pa = k + 1 + static_cast<int>(rng.next_u64() % 8);
        int pb = k + 1 + static_cast<int>(rng.next_u64() % 8);
        Matrix a = rng.normal_matrix(k, pa);
        Matrix b = rng.normal_matrix(k, pb);
        double cka = linear_cka(a, b);
        ContrastMatrix cm = build_contrast_matrix(k);
        Vector da = biased_distances(ActivityDataset::create({a}), cm).d;
        Vector db = biased_distances(ActivityDataset::create({b}), cm).d;
        DistanceCovariance v = null_covariance(Matrix::Identity(k, k), cm);
        double wc = whitened_cosine_with(whitener(v), da, db);
        worst = std::max(worst, std::abs(cka - wc));
    }
    e.require(worst <= 1e-10,
              "max |CKA - whitened cosine| = " + detail::fmt(worst));

    for (int k = 3; k <= 8; ++k) {
        ContrastMatrix cm = build_contrast_matrix(k);
        Eigen::MatrixXi td = build_t_d(k).cast<int>();
        Eigen::MatrixXi c = cm.c.cast<int>();
        Eigen::MatrixXi cct = c * c.transpose();
        Eigen::MatrixXi lhs = td * td.transpose();
        Eigen::MatrixXi rhs = cct.cwiseProduct(cct);
        e.require(lhs == rhs, "K=" + std::to_string(k) +
                                  ": T_d T_d^T != CC^T o CC^T exactly");
    }
    if (e.pass)
        e.note("100 random pairs agree to " + detail::fmt(worst) +
               "; T_d identity exact for K=3..8");
    return {7, "CKA equals whitened cosine of biased distances", e.pass,
            e.detail.str(), timer.seconds()};
}

inline CheckResult check_fig4a_selection_bias(const CheckOptions& opt) {
    detail::Timer timer;
    Scenario sc = make_fig4_scenario('a', 2);
    sc.n_sims = detail::scaled(20000, std::max(1.0, opt.sims_scale));
    sc.seed = 48801;
    AccuracyReport rep = run_scenario(
        sc, {Criterion::pearson, Criterion::whitened_cosine}, opt.threads);
    double pearson_split = rep.criteria[0].second.split[0];
    double wuc_split = rep.criteria[1].second.split[0];
    detail::Expect e;
    e.require(std::abs(pearson_split - 0.768) <= 0.03,
              "Pearson-on-biased assigns model 1 at " +
                  detail::fmt(100 * pearson_split) +
                  "% vs target 76.8+-3%; at the stated parameters (r=0.15, "
                  "P=50) the analytic split is 87.2%, matched here; the "
                  "reported 76.8% corresponds to r=0.10 at P=50");
    e.require(std::abs(wuc_split - 0.5) <= 0.02,
              "WUC assigns model 1 at " + detail::fmt(100 * wuc_split) +
                  "% vs 50+-2%");
    double sec = timer.seconds();
    e.require(sec < 300.0, "runtime " + detail::fmt(sec) + "s exceeds 5min");
    if (e.pass) e.note("splits " + detail::fmt(100 * pearson_split) + "% / " +
                       detail::fmt(100 * wuc_split) + "%");
    else
        e.note("WUC split " + detail::fmt(100 * wuc_split) + "%");
    return {8, "selection bias under correlated noise (fig 4a)", e.pass,
            e.detail.str(), sec};
}

inline CheckResult check_fig4c_zero_point(const CheckOptions& opt) {
    detail::Timer timer;
    detail::Expect e;
    const int n_sims = detail::scaled(10000, opt.sims_scale);
    double top_acc = 0.0, top_se = 1.0;
    for (double s : {0.5, 1.0, 2.0, 4.0}) {
        Scenario sc = make_fig4_scenario('c', 4, s);
        sc.n_sims = n_sims;
        sc.seed = 48802;
        AccuracyReport rep = run_scenario(
            sc, {Criterion::pearson, Criterion::cosine}, opt.threads);
        double p_acc = rep.criteria[0].second.accuracy;
        e.require(std::abs(p_acc - 0.5) <= 0.02,
                  "Pearson accuracy " + detail::fmt(p_acc) + " at s=" +
                      detail::fmt(s) + " not 0.50+-0.02");
        if (s == 4.0) {
            top_acc = rep.criteria[1].second.accuracy;
            top_se = rep.criteria[1].second.se;
        }
    }
    // above 0.60 with 99% one-sided confidence
    e.require(top_acc - 2.326 * top_se > 0.60,
              "cosine accuracy at top signal " + detail::fmt(top_acc) +
                  " (se " + detail::fmt(top_se) + ") not above 0.60");
    if (e.pass)
        e.note("Pearson at chance everywhere; cosine " + detail::fmt(top_acc) +
               " at s=4");
    return {9, "zero-point advantage on ratio-only models (fig 4c)", e.pass,
            e.detail.str(), timer.seconds()};
}

inline CheckResult check_whitening_never_hurts(const CheckOptions& opt) {
    detail::Timer timer;
    detail::Expect e;
    const std::vector<Criterion> crit = {
        Criterion::pearson, Criterion::whitened_pearson, Criterion::cosine,
        Criterion::whitened_cosine};

    auto check_point = [&](const std::string& tag,
                           const std::vector<std::pair<Criterion,
                                                       CriterionStats>>& stats) {
        double p = stats[0].second.accuracy, wp = stats[1].second.accuracy;
        double c = stats[2].second.accuracy, wc = stats[3].second.accuracy;
        e.require(wp >= p - stats[0].second.se,
                  tag + ": whitened Pearson " + detail::fmt(wp) +
                      " below Pearson " + detail::fmt(p) + " - 1se");
        e.require(wc >= c - stats[2].second.se,
                  tag + ": WUC " + detail::fmt(wc) + " below cosine " +
                      detail::fmt(c) + " - 1se");
    };

    for (double s : {0.1, 0.2}) {
        Scenario sc = make_exp_like_scenario(1, s);
        sc.n_sims = detail::scaled(4000, opt.sims_scale);
        sc.seed = 48803;
        check_point("exp1 s=" + detail::fmt(s),
                    run_scenario(sc, crit, opt.threads).criteria);
    }
    {
        Scenario sc = make_exp_like_scenario(2, 0.1);
        sc.n_sims = detail::scaled(2500, opt.sims_scale);
        sc.seed = 48804;
        check_point("exp2 s=0.1", run_scenario(sc, crit, opt.threads).criteria);
    }

    Scenario base = make_condition_split_scenario(0.06);
    base.n_sims = detail::scaled(10000, opt.sims_scale);
    base.seed = 48805;
    ConditionSplitReport split =
        run_condition_split(base, crit, 4, opt.threads);
    std::ostringstream gaps;
    double prev_gap = -1.0;
    bool monotone = true;
    for (const auto& lv : split.levels) {
        check_point("cond_split K=" + std::to_string(lv.k), lv.criteria);
        double gap =
            lv.criteria[3].second.accuracy - lv.criteria[2].second.accuracy;
        gaps << (prev_gap < 0 ? "" : " -> ") << detail::fmt(gap);
        if (prev_gap >= 0.0 && gap <= prev_gap) monotone = false;
        prev_gap = gap;
    }
    e.require(monotone, "WUC - cosine gap not monotone over K: " + gaps.str());
    if (e.pass)
        e.note("WUC - cosine gap over K {5,10,20,40}: " + gaps.str());
    return {10, "whitening helps and never hurts", e.pass, e.detail.str(),
            timer.seconds()};
}

inline CheckResult check_spatial_noise(const CheckOptions& opt) {
    detail::Timer timer;
    detail::Expect e;
    Matrix kern0 = gaussian_spatial_covariance({6, 6, 6}, 0.0);
    e.require(effective_channel_count(kern0) == 216.0,
              "effective channel count at s2=0 is not 216");
    double eff5 = effective_channel_count(gaussian_spatial_covariance(
        {6, 6, 6}, 5.0));
    e.require(std::abs(eff5 - 15.0) <= 1.0,
              "effective channel count at s2=5 is " + detail::fmt(eff5));

    Scenario sc = make_spatial_noise_scenario(5.0, 0.3);
    sc.n_sims = detail::scaled(2500, opt.sims_scale);
    sc.seed = 48806;
    const std::vector<Criterion> crit = {
        Criterion::pearson, Criterion::whitened_pearson, Criterion::cosine,
        Criterion::whitened_cosine};
    AccuracyReport rep = run_scenario(sc, crit, opt.threads);
    double p = rep.criteria[0].second.accuracy;
    double wp = rep.criteria[1].second.accuracy;
    double c = rep.criteria[2].second.accuracy;
    double wc = rep.criteria[3].second.accuracy;
    double se_p = std::sqrt(rep.criteria[0].second.se * rep.criteria[0].second.se +
                            rep.criteria[1].second.se * rep.criteria[1].second.se);
    double se_c = std::sqrt(rep.criteria[2].second.se * rep.criteria[2].second.se +
                            rep.criteria[3].second.se * rep.criteria[3].second.se);
    e.require(wp - p >= se_p, "whitened Pearson advantage " +
                                  detail::fmt(wp - p) + " below 1se " +
                                  detail::fmt(se_p));
    e.require(wc - c >= se_c, "WUC advantage " + detail::fmt(wc - c) +
                                  " below 1se " + detail::fmt(se_c));
    if (e.pass)
        e.note("effective channels 216 -> " + detail::fmt(eff5) +
               "; whitening gains " + detail::fmt(wp - p) + " / " +
               detail::fmt(wc - c));
    return {11, "robustness to spatially correlated noise", e.pass,
            e.detail.str(), timer.seconds()};
}

inline CheckResult check_unbalanced_pooling(const CheckOptions& opt) {
    detail::Timer timer;
    const int k = 3, p = 10, m = 3;
    const int n_sims = detail::scaled(100000, opt.sims_scale);
    ContrastMatrix cm = build_contrast_matrix(k);
    std::vector<Matrix> sigma_ks = {Matrix::Identity(k, k),
                                    Matrix::Identity(k, k),
                                    4.0 * Matrix::Identity(k, k)};
    std::vector<double> noise_sd = {1.0, 1.0, 2.0};
    Matrix sigma_p = Matrix::Identity(p, p);

    detail::BatchCov acc_pool(3, 100, n_sims / 100),
        acc_plain(3, 100, n_sims / 100);
    for (int t = 0; t < n_sims; ++t) {
        RandomStream rng(62626, static_cast<std::uint64_t>(t));
        std::vector<Matrix> parts;
        for (int i = 0; i < m; ++i)
            parts.push_back(noise_sd[static_cast<std::size_t>(i)] *
                            rng.normal_matrix(k, p));
        ActivityDataset ds = ActivityDataset::create(std::move(parts));
        acc_plain.add(unbiased_distances(ds, cm).d);
        acc_pool.add(pooled_unbiased_distances(ds, cm, sigma_ks, sigma_p).d);
    }
    detail::Expect e;
    Vector mean_pool = acc_pool.mean();
    Vector se_pool =
        (acc_pool.cov().diagonal() / static_cast<double>(n_sims)).cwiseSqrt();
    Vector var_pool = acc_pool.cov().diagonal();
    Vector var_plain = acc_plain.cov().diagonal();
    for (int i = 0; i < 3; ++i) {
        e.require(std::abs(mean_pool[i]) <= 3.0 * se_pool[i],
                  "pooled mean pair " + std::to_string(i + 1) + " = " +
                      detail::fmt(mean_pool[i]) + " not within 3se of 0");
        e.require(var_pool[i] <= var_plain[i],
                  "pooled variance " + detail::fmt(var_pool[i]) +
                      " exceeds plain " + detail::fmt(var_plain[i]) +
                      " for pair " + std::to_string(i + 1));
    }
    if (e.pass)
        e.note("variance reduction " +
               detail::fmt((1.0 - (var_pool.array() / var_plain.array()))
                               .mean() *
                           100.0) +
               "% on average");
    return {12, "precision-weighted pooling for unbalanced designs", e.pass,
            e.detail.str(), timer.seconds()};
}

// The fast selftest subset: analytic-vs-Monte-Carlo with reduced budgets,
// the CKA equivalence, and the eigenstructure check.
inline std::vector<int> selftest_ids() { return {3, 4, 6, 7}; }

inline std::vector<int> all_ids() {
    return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
}

inline std::vector<CheckResult> run_checks(const std::vector<int>& ids,
                                           const CheckOptions& opt) {
    std::vector<CheckResult> results;
    bool pair_done = false;
    for (int id : ids) {
        switch (id) {
            case 1:
            case 2: {
                if (pair_done) break;
                auto [r1, r2] = check_unbiasedness_and_bias(opt);
                bool want1 = false, want2 = false;
                for (int i : ids) {
                    want1 |= i == 1;
                    want2 |= i == 2;
                }
                if (want1) results.push_back(r1);
                if (want2) results.push_back(r2);
                pair_done = true;
                break;
            }
            case 3: results.push_back(check_covariance_formulas(opt)); break;
            case 4: results.push_back(check_variance_ratio(opt)); break;
            case 5:
                results.push_back(check_null_covariance_structure(opt));
                break;
            case 6: results.push_back(check_eigenstructure(opt)); break;
            case 7: results.push_back(check_cka_equivalence(opt)); break;
            case 8:
                results.push_back(check_fig4a_selection_bias(opt));
                break;
            case 9: results.push_back(check_fig4c_zero_point(opt)); break;
            case 10:
                results.push_back(check_whitening_never_hurts(opt));
                break;
            case 11: results.push_back(check_spatial_noise(opt)); break;
            case 12: results.push_back(check_unbalanced_pooling(opt)); break;
            default:
                throw InvalidArgument("unknown check id " + std::to_string(id));
        }
    }
    return results;
}

}  // namespace rdmkit::selfcheck
