#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "rdmkit/compare.hpp"
#include "rdmkit/estimators.hpp"
#include "rdmkit/noise.hpp"
#include "rdmkit/rng.hpp"

namespace rdmkit {

enum class NoiseDist { gaussian, chi2_df6, t_df6 };

inline const char* to_string(NoiseDist d) {
    switch (d) {
        case NoiseDist::gaussian: return "gaussian";
        case NoiseDist::chi2_df6: return "chi2_df6";
        case NoiseDist::t_df6: return "t_df6";
    }
    return "?";
}

inline NoiseDist parse_noise_dist(const std::string& s) {
    if (s == "gaussian") return NoiseDist::gaussian;
    if (s == "chi2_df6") return NoiseDist::chi2_df6;
    if (s == "t_df6") return NoiseDist::t_df6;
    throw InvalidArgument("unknown noise distribution '" + s + "'");
}

// A fully parameterized model-selection experiment. signal_model may be
// empty, in which case trial t draws its true patterns from candidate model
// t % n_models (the usual "generate from each model" protocol).
struct Scenario {
    std::string name;
    int k = 0;
    int p = 0;
    int m = 0;
    Matrix signal_model;  // KxK second moment G, optional
    double signal_strength = 0.0;
    Matrix sigma_k;
    Matrix sigma_p;
    std::vector<ModelRDM> candidate_models;
    int n_sims = 1000;
    std::uint64_t seed = 0;
    NoiseDist noise_dist = NoiseDist::gaussian;
};

struct CriterionStats {
    double accuracy = 0.0;
    double se = 0.0;
    std::vector<double> split;  // fraction of draws assigned per model
    double undefined_frac = 0.0;
};

struct AccuracyReport {
    std::string scenario;
    int n_sims = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> model_names;
    std::vector<std::pair<Criterion, CriterionStats>> criteria;
    double runtime_seconds = 0.0;
};

// Squared-distance vector implied by a second moment matrix.
inline Vector rdm_from_gram(const Matrix& g) {
    const Index k = g.rows();
    Vector d(pair_count(k));
    Index row = 0;
    for (Index i = 0; i < k; ++i)
        for (Index j = i + 1; j < k; ++j, ++row)
            d[row] = g(i, i) + g(j, j) - g(i, j) - g(j, i);
    return d;
}

// Centered second moment realizing a distance vector: G = -H D H / 2 with D
// the KxK squared-distance matrix. Distances must be Euclidean-embeddable;
// eigenvalues slightly below zero are clamped.
inline Matrix gram_from_rdm(const Vector& d, int k) {
    if (d.size() != pair_count(k))
        throw InvalidArgument("distance vector has the wrong length for k");
    Matrix dist = Matrix::Zero(k, k);
    Index row = 0;
    for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j, ++row)
            dist(i, j) = dist(j, i) = d[row];
    Matrix h = Matrix::Identity(k, k) - Matrix::Constant(k, k, 1.0 / k);
    Matrix g = -0.5 * h * dist * h;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (g + g.transpose()));
    Vector ev = es.eigenvalues();
    double top = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    if (ev.minCoeff() < -1e-8 * top)
        throw InvalidArgument(
            "distance vector is not realizable as a Euclidean geometry");
    Vector clipped = ev.cwiseMax(0.0);
    return es.eigenvectors() * clipped.asDiagonal() *
           es.eigenvectors().transpose();
}

// True patterns with an exact second moment: K x P standard-normal rows are
// empirically whitened across channels, then colored with (G s)^{1/2}, so
// that B B^T / P = G s to numerical precision.
inline Matrix generate_signal(const Matrix& g, double s, int p,
                              RandomStream& rng) {
    const int k = static_cast<int>(g.rows());
    if (s < 0.0) throw InvalidArgument("signal strength must be >= 0");
    if (s == 0.0) return Matrix::Zero(k, p);
    if (p < k)
        throw InvalidArgument(
            "exact signal construction needs at least as many channels as "
            "conditions");
    Matrix z = rng.normal_matrix(k, p);
    Matrix gram = z * z.transpose() / static_cast<double>(p);
    Matrix white = symmetric_inv_sqrt(gram, 1e-12, /*pseudo=*/false) * z;
    return symmetric_sqrt(g * s) * white;
}

// E = Sigma_K^{1/2} Z Sigma_P^{1/2}; Z has i.i.d. standardized entries drawn
// from the requested distribution. Exact identity covariances skip their
// factor so that an identity Sigma_P run is bit-identical to one that never
// had a spatial kernel.
struct NoiseSampler {
    Matrix sqrt_k, sqrt_p;
    bool k_identity = true, p_identity = true;
    int k = 0, p = 0;
    NoiseDist dist = NoiseDist::gaussian;

    NoiseSampler() = default;
    NoiseSampler(const Matrix& sigma_k, const Matrix& sigma_p,
                 NoiseDist d = NoiseDist::gaussian)
        : k(static_cast<int>(sigma_k.rows())),
          p(static_cast<int>(sigma_p.rows())),
          dist(d) {
        k_identity = sigma_k.isIdentity(0.0);
        p_identity = sigma_p.isIdentity(0.0);
        if (!k_identity) sqrt_k = symmetric_sqrt(sigma_k);
        if (!p_identity) sqrt_p = symmetric_sqrt(sigma_p);
    }

    Matrix draw(RandomStream& rng) const {
        Matrix z(k, p);
        switch (dist) {
            case NoiseDist::gaussian:
                rng.fill_normal(z);
                break;
            case NoiseDist::chi2_df6:
                for (Index i = 0; i < z.rows(); ++i)
                    for (Index j = 0; j < z.cols(); ++j)
                        z(i, j) = rng.chi2_df6_standardized();
                break;
            case NoiseDist::t_df6:
                for (Index i = 0; i < z.rows(); ++i)
                    for (Index j = 0; j < z.cols(); ++j)
                        z(i, j) = rng.t_df6_standardized();
                break;
        }
        if (!k_identity) z = sqrt_k * z;
        if (!p_identity) z = z * sqrt_p;
        return z;
    }
};

inline Matrix generate_noise(const Matrix& sigma_k, const Matrix& sigma_p,
                             RandomStream& rng) {
    return NoiseSampler(sigma_k, sigma_p).draw(rng);
}

// Gaussian covariance kernel on a 3-D voxel grid:
// cov(e_i, e_j) = exp(-d_ij^2 / s2); s2 = 0 yields the exact identity.
inline Matrix gaussian_spatial_covariance(const std::array<int, 3>& grid,
                                          double s2) {
    if (s2 < 0.0) throw InvalidArgument("kernel variance must be >= 0");
    const int n = grid[0] * grid[1] * grid[2];
    if (s2 == 0.0) return Matrix::Identity(n, n);
    std::vector<std::array<int, 3>> pos;
    pos.reserve(static_cast<std::size_t>(n));
    for (int x = 0; x < grid[0]; ++x)
        for (int y = 0; y < grid[1]; ++y)
            for (int z = 0; z < grid[2]; ++z) pos.push_back({x, y, z});
    Matrix cov(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            double dx = pos[i][0] - pos[j][0];
            double dy = pos[i][1] - pos[j][1];
            double dz = pos[i][2] - pos[j][2];
            double d2 = dx * dx + dy * dy + dz * dz;
            cov(i, j) = cov(j, i) = std::exp(-d2 / s2);
        }
    }
    return cov;
}

namespace detail {

// Which estimate a criterion consumes: Pearson-family and rank criteria the
// biased one, cosine-family the crossvalidated one.
inline bool uses_unbiased(Criterion c) {
    return c == Criterion::cosine || c == Criterion::whitened_cosine;
}

inline bool is_whitened(Criterion c) {
    return c == Criterion::whitened_cosine ||
           c == Criterion::whitened_pearson || c == Criterion::cka;
}

// Per-run precomputation for evaluating a criterion set against a fixed
// model list under one null covariance.
struct CriterionContext {
    std::vector<Criterion> criteria;
    std::vector<Vector> models;           // raw model RDMs
    std::vector<Vector> centered_models;  // mean-removed
    Matrix w;                             // whitener of the null V
    std::vector<Vector> wm;               // W * model
    std::vector<Vector> wmc;              // W * centered model
    Matrix w_iid;                         // whitener for CKA (Sigma_K = I)
    std::vector<Vector> wm_iid;

    CriterionContext() = default;
    CriterionContext(std::vector<Criterion> crit,
                     const std::vector<ModelRDM>& model_list,
                     const Matrix& sigma_k, const ContrastMatrix& cm)
        : criteria(std::move(crit)) {
        bool need_w = false, need_w_iid = false;
        for (Criterion c : criteria) {
            if (c == Criterion::whitened_cosine ||
                c == Criterion::whitened_pearson)
                need_w = true;
            if (c == Criterion::cka) need_w_iid = true;
        }
        for (const ModelRDM& m : model_list) {
            models.push_back(m.m);
            centered_models.push_back(m.m.array() - m.m.mean());
        }
        if (need_w) {
            w = whitener(null_covariance(sigma_k, cm));
            for (const Vector& m : models) wm.push_back(w * m);
            for (const Vector& m : centered_models) wmc.push_back(w * m);
        }
        if (need_w_iid) {
            w_iid = whitener(null_covariance(
                Matrix::Identity(cm.k(), cm.k()), cm));
            for (const Vector& m : models) wm_iid.push_back(w_iid * m);
        }
    }

    std::size_t n_models() const { return models.size(); }

    // Values of one criterion for all models; throws UndefinedSimilarityError
    // if the data vector is degenerate for the criterion.
    void values(Criterion c, const Vector& d_biased, const Vector& d_unbiased,
                std::vector<double>& out) const {
        const Vector& d = uses_unbiased(c) ? d_unbiased : d_biased;
        out.resize(n_models());
        switch (c) {
            case Criterion::cosine:
                for (std::size_t i = 0; i < n_models(); ++i)
                    out[i] = cosine_similarity(d, models[i]);
                break;
            case Criterion::pearson:
                for (std::size_t i = 0; i < n_models(); ++i)
                    out[i] = pearson(d, models[i]);
                break;
            case Criterion::spearman:
                for (std::size_t i = 0; i < n_models(); ++i)
                    out[i] = rank_correlations(d, models[i]).spearman;
                break;
            case Criterion::kendall_tau_a:
                for (std::size_t i = 0; i < n_models(); ++i)
                    out[i] = rank_correlations(d, models[i]).kendall_tau_a;
                break;
            case Criterion::whitened_cosine: {
                Vector wd = w * d;
                double n2 = wd.squaredNorm();
                if (n2 == 0.0)
                    throw UndefinedSimilarityError("whitened data vector is zero");
                for (std::size_t i = 0; i < n_models(); ++i)
                    out[i] = wd.dot(wm[i]) / std::sqrt(n2 * wm[i].squaredNorm());
                break;
            }
            case Criterion::whitened_pearson: {
                Vector wd = w * Vector(d.array() - d.mean());
                double n2 = wd.squaredNorm();
                if (n2 == 0.0)
                    throw UndefinedSimilarityError(
                        "whitened centered data vector is zero");
                for (std::size_t i = 0; i < n_models(); ++i)
                    out[i] =
                        wd.dot(wmc[i]) / std::sqrt(n2 * wmc[i].squaredNorm());
                break;
            }
            case Criterion::cka: {
                Vector wd = w_iid * d;
                double n2 = wd.squaredNorm();
                if (n2 == 0.0)
                    throw UndefinedSimilarityError("whitened data vector is zero");
                for (std::size_t i = 0; i < n_models(); ++i)
                    out[i] = wd.dot(wm_iid[i]) /
                             std::sqrt(n2 * wm_iid[i].squaredNorm());
                break;
            }
        }
    }
};

// First model in shuffled order whose value is within 1e-12 of the maximum,
// so mathematically tied criteria are broken by the per-trial permutation
// rather than floating-point noise.
inline int pick_winner(const std::vector<double>& values,
                       const std::vector<int>& order) {
    double vmax = -std::numeric_limits<double>::infinity();
    for (double v : values) vmax = std::max(vmax, v);
    for (int idx : order)
        if (values[static_cast<std::size_t>(idx)] >= vmax - 1e-12) return idx;
    return order.front();
}

inline void shuffle_order(std::vector<int>& order, RandomStream& rng) {
    for (std::size_t i = order.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(order[i - 1], order[j]);
    }
}

struct TrialCounts {
    // [criterion][model] winner counts, [criterion] correct and undefined
    std::vector<std::vector<long long>> winners;
    std::vector<long long> correct;
    std::vector<long long> undefined;

    TrialCounts(std::size_t n_crit, std::size_t n_models)
        : winners(n_crit, std::vector<long long>(n_models, 0)),
          correct(n_crit, 0),
          undefined(n_crit, 0) {}

    void merge(const TrialCounts& other) {
        for (std::size_t c = 0; c < winners.size(); ++c) {
            for (std::size_t m = 0; m < winners[c].size(); ++m)
                winners[c][m] += other.winners[c][m];
            correct[c] += other.correct[c];
            undefined[c] += other.undefined[c];
        }
    }
};

inline int resolve_threads(int threads) {
    if (threads > 0) return threads;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Run `n_trials` independent trials on a pool; trial t derives its stream
// from (seed, t) and counts are merged additively, so the result does not
// depend on the thread count.
template <typename TrialFn>
TrialCounts run_trials(int n_trials, int threads, std::size_t n_crit,
                       std::size_t n_models, const TrialFn& trial_fn) {
    const int n_workers = std::min(resolve_threads(threads), n_trials);
    std::vector<TrialCounts> partial(static_cast<std::size_t>(n_workers),
                                     TrialCounts(n_crit, n_models));
    std::atomic<int> next{0};
    auto worker = [&](int w) {
        TrialCounts& counts = partial[static_cast<std::size_t>(w)];
        constexpr int kChunk = 64;
        while (true) {
            int start = next.fetch_add(kChunk);
            if (start >= n_trials) break;
            int stop = std::min(start + kChunk, n_trials);
            for (int t = start; t < stop; ++t) trial_fn(t, counts);
        }
    };
    if (n_workers <= 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_workers));
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker, w);
        for (auto& th : pool) th.join();
    }
    TrialCounts total(n_crit, n_models);
    for (const TrialCounts& c : partial) total.merge(c);
    return total;
}

inline CriterionStats stats_from_counts(const std::vector<long long>& winners,
                                        long long correct, long long undef,
                                        int n_trials) {
    CriterionStats s;
    const double n = static_cast<double>(n_trials);
    s.accuracy = static_cast<double>(correct) / n;
    s.se = std::sqrt(std::max(s.accuracy * (1.0 - s.accuracy), 0.0) / n);
    for (long long w : winners)
        s.split.push_back(static_cast<double>(w) / n);
    s.undefined_frac = static_cast<double>(undef) / n;
    return s;
}

}  // namespace detail

// Monte Carlo model-selection experiment: per trial, draw true patterns from
// the generating model, add M noise matrices, estimate biased and
// crossvalidated distances, evaluate every requested criterion against all
// candidate models, and record which model wins. Fully reproducible from the
// scenario seed, for any thread count.
inline AccuracyReport run_scenario(const Scenario& sc,
                                   const std::vector<Criterion>& criteria,
                                   int threads = 0) {
    if (sc.n_sims < 1) throw InvalidArgument("n_sims must be >= 1");
    if (criteria.empty()) throw InvalidArgument("no criteria requested");
    if (sc.candidate_models.empty())
        throw InvalidArgument("scenario has no candidate models");
    const auto t0 = std::chrono::steady_clock::now();

    ContrastMatrix cm = build_contrast_matrix(sc.k);
    detail::CriterionContext ctx(criteria, sc.candidate_models, sc.sigma_k, cm);
    NoiseSampler noise(sc.sigma_k, sc.sigma_p, sc.noise_dist);

    const std::size_t n_models = sc.candidate_models.size();
    std::vector<Matrix> gen_gram;
    if (sc.signal_model.size() > 0) {
        gen_gram.push_back(sc.signal_model);
    } else if (sc.signal_strength > 0.0) {
        for (const ModelRDM& m : sc.candidate_models)
            gen_gram.push_back(gram_from_rdm(m.m, sc.k));
    }

    auto trial_fn = [&](int t, detail::TrialCounts& counts) {
        RandomStream rng(sc.seed, static_cast<std::uint64_t>(t));
        const int gen = static_cast<int>(t % static_cast<int>(n_models));
        Matrix b;
        if (sc.signal_strength > 0.0) {
            const Matrix& g =
                gen_gram.size() == 1 ? gen_gram[0]
                                     : gen_gram[static_cast<std::size_t>(gen)];
            b = generate_signal(g, sc.signal_strength, sc.p, rng);
        } else {
            b = Matrix::Zero(sc.k, sc.p);
        }
        std::vector<Matrix> parts;
        parts.reserve(static_cast<std::size_t>(sc.m));
        for (int i = 0; i < sc.m; ++i) parts.push_back(b + noise.draw(rng));
        ActivityDataset ds = ActivityDataset::create(std::move(parts));
        Vector d_biased = biased_distances(ds, cm).d;
        Vector d_unbiased = unbiased_distances(ds, cm).d;

        std::vector<int> order(n_models);
        std::iota(order.begin(), order.end(), 0);
        detail::shuffle_order(order, rng);

        std::vector<double> values;
        for (std::size_t c = 0; c < criteria.size(); ++c) {
            try {
                ctx.values(criteria[c], d_biased, d_unbiased, values);
            } catch (const UndefinedSimilarityError&) {
                ++counts.undefined[c];
                continue;
            }
            int winner = detail::pick_winner(values, order);
            ++counts.winners[c][static_cast<std::size_t>(winner)];
            if (winner == gen) ++counts.correct[c];
        }
    };

    detail::TrialCounts counts = detail::run_trials(
        sc.n_sims, threads, criteria.size(), n_models, trial_fn);

    AccuracyReport report;
    report.scenario = sc.name;
    report.n_sims = sc.n_sims;
    report.seed = sc.seed;
    for (const ModelRDM& m : sc.candidate_models)
        report.model_names.push_back(m.name);
    for (std::size_t c = 0; c < criteria.size(); ++c)
        report.criteria.emplace_back(
            criteria[c],
            detail::stats_from_counts(counts.winners[c], counts.correct[c],
                                      counts.undefined[c], sc.n_sims));
    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return report;
}

}  // namespace rdmkit
