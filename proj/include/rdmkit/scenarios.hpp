#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rdmkit/simulate.hpp"

namespace rdmkit {

// Categorical RDM over k conditions: `groups[i]` is the category of
// condition i; within-category pairs get `within`, the rest `between`.
inline Vector categorical_rdm(const std::vector<int>& groups, double within,
                              double between) {
    const int k = static_cast<int>(groups.size());
    Vector d(pair_count(k));
    Index row = 0;
    for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j, ++row)
            d[row] = groups[static_cast<std::size_t>(i)] ==
                             groups[static_cast<std::size_t>(j)]
                         ? within
                         : between;
    return d;
}

// Condition covariance with correlation r between neighboring conditions.
inline Matrix neighbor_correlated_sigma_k(int k, double r) {
    Matrix s = Matrix::Identity(k, k);
    for (int i = 0; i + 1 < k; ++i) s(i, i + 1) = s(i + 1, i) = r;
    return s;
}

namespace detail {

// Two structured model RDMs whose correlation is tuned to `target_corr` by
// blending a smooth second-moment structure toward a clustered one.
// Both RDMs are normalized to unit norm.
inline std::pair<ModelRDM, ModelRDM> blended_model_pair(
    int k, double length_scale, const std::vector<int>& clusters,
    double target_corr) {
    Matrix g_smooth(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            g_smooth(i, j) = std::exp(-std::abs(i - j) / length_scale);
    Matrix g_cluster = Matrix::Identity(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            if (i != j)
                g_cluster(i, j) = clusters[static_cast<std::size_t>(i)] ==
                                          clusters[static_cast<std::size_t>(j)]
                                      ? 0.6
                                      : 0.05;
    Vector m_a = rdm_from_gram(g_smooth);
    Vector m_c = rdm_from_gram(g_cluster);
    auto corr_at = [&](double alpha) {
        Vector blend = (1.0 - alpha) * m_a + alpha * m_c;
        return pearson(m_a, blend);
    };
    if (corr_at(1.0) > target_corr)
        throw InvalidArgument("model structures are too similar to blend");
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        (corr_at(mid) > target_corr ? lo : hi) = mid;
    }
    double alpha = 0.5 * (lo + hi);
    Vector m_b = (1.0 - alpha) * m_a + alpha * m_c;
    ModelRDM a{"model_smooth", m_a / m_a.norm()};
    ModelRDM b{"model_blend", m_b / m_b.norm()};
    return {a, b};
}

}  // namespace detail

// K=5 stand-in for the finger-movement experiment: two candidate models with
// RDM correlation 0.85.
inline std::pair<ModelRDM, ModelRDM> exp1_models() {
    return detail::blended_model_pair(5, 2.0, {0, 0, 0, 1, 1}, 0.85);
}

// K=31 stand-in for the piano-chord experiment.
inline std::pair<ModelRDM, ModelRDM> exp2_models() {
    std::vector<int> clusters(31);
    for (int i = 0; i < 31; ++i) clusters[static_cast<std::size_t>(i)] = i / 11;
    return detail::blended_model_pair(31, 5.0, clusters, 0.85);
}

// Four-condition scenarios behind Fig. 4. Noise variance is proportional to
// the partition count so the variance of the averaged patterns stays
// constant as M varies. Variant 'a' adds correlation 0.15 between
// neighboring conditions; the others use independent noise.
inline Scenario make_fig4_scenario(char variant, int m,
                                   double signal_strength = 0.0) {
    if (m < 2) throw InvalidArgument("fig4 scenarios need m >= 2");
    Scenario sc;
    sc.name = std::string("fig4") + variant;
    sc.k = 4;
    sc.p = 50;
    sc.m = m;
    sc.signal_strength = signal_strength;
    sc.sigma_p = Matrix::Identity(sc.p, sc.p);
    Matrix base = variant == 'a' ? neighbor_correlated_sigma_k(4, 0.15)
                                 : Matrix::Identity(4, 4);
    sc.sigma_k = static_cast<double>(m) * base;
    switch (variant) {
        case 'a':
        case 'b':
            sc.candidate_models = {
                {"model1", categorical_rdm({0, 0, 1, 1}, 0.5, 1.0)},
                {"model2", categorical_rdm({0, 1, 0, 1}, 0.5, 1.0)}};
            break;
        case 'c': {
            Vector m1 = categorical_rdm({0, 0, 1, 1}, 1.0, 2.0);
            Vector m2 = categorical_rdm({0, 0, 1, 1}, 1.0, 4.0);
            sc.candidate_models = {{"model1", m1 / m1.norm()},
                                   {"model2", m2 / m2.norm()}};
            break;
        }
        case 'd': {
            Vector m1 = categorical_rdm({0, 0, 1, 1}, 0.5, 1.0);
            Vector m2 = categorical_rdm({0, 1, 0, 1}, 1.0, 1.5);
            sc.candidate_models = {{"model1", m1 / m1.norm()},
                                   {"model2", m2 / m2.norm()}};
            break;
        }
        default:
            throw InvalidArgument("unknown fig4 variant");
    }
    sc.n_sims = 20000;
    sc.seed = 20210401;
    return sc;
}

inline Scenario make_exp_like_scenario(int which, double signal_strength) {
    Scenario sc;
    sc.name = which == 1 ? "exp1_like" : "exp2_like";
    sc.k = which == 1 ? 5 : 31;
    sc.p = 160;
    sc.m = 8;
    sc.signal_strength = signal_strength;
    sc.sigma_k = Matrix::Identity(sc.k, sc.k);
    sc.sigma_p = Matrix::Identity(sc.p, sc.p);
    auto models = which == 1 ? exp1_models() : exp2_models();
    sc.candidate_models = {models.first, models.second};
    sc.n_sims = 3000;
    sc.seed = 20210402;
    return sc;
}

// Piano-chord-style models measured on a 6x6x6 voxel cube with spatially
// correlated noise of Gaussian kernel variance s2.
inline Scenario make_spatial_noise_scenario(double s2,
                                            double signal_strength) {
    Scenario sc = make_exp_like_scenario(2, signal_strength);
    sc.name = "spatial_noise_appendix";
    sc.p = 216;
    sc.sigma_p = gaussian_spatial_covariance({6, 6, 6}, s2);
    sc.seed = 20210403;
    return sc;
}

// Base design of the condition-splitting experiment: 5 conditions, 32
// partitions, relabeled level by level up to 40 conditions, 4 partitions.
inline Scenario make_condition_split_scenario(double signal_strength) {
    Scenario sc;
    sc.name = "cond_split_fig7";
    sc.k = 5;
    sc.p = 160;
    sc.m = 32;
    sc.signal_strength = signal_strength;
    sc.sigma_k = Matrix::Identity(5, 5);
    sc.sigma_p = Matrix::Identity(160, 160);
    auto models = exp1_models();
    sc.candidate_models = {models.first, models.second};
    sc.n_sims = 10000;
    sc.seed = 20210404;
    return sc;
}

inline Scenario scenario_library(const std::string& name) {
    if (name == "fig4a") return make_fig4_scenario('a', 2);
    if (name == "fig4b") return make_fig4_scenario('b', 2);
    if (name == "fig4c") return make_fig4_scenario('c', 4, 2.0);
    if (name == "fig4d") return make_fig4_scenario('d', 4, 0.5);
    if (name == "exp1_like") return make_exp_like_scenario(1, 0.1);
    if (name == "exp2_like") return make_exp_like_scenario(2, 0.1);
    if (name == "cond_split_fig7") return make_condition_split_scenario(0.06);
    if (name == "spatial_noise_appendix")
        return make_spatial_noise_scenario(5.0, 0.3);
    throw InvalidArgument("unknown scenario '" + name + "'");
}

struct ConditionSplitLevel {
    int k = 0;
    int m = 0;
    std::vector<std::pair<Criterion, CriterionStats>> criteria;
};

struct ConditionSplitReport {
    int n_sims = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> model_names;
    std::vector<ConditionSplitLevel> levels;
    double runtime_seconds = 0.0;
};

// Relabeling scheme of the condition-splitting analysis: each step merges
// partition pairs, mapping even partitions to the first half of a doubled
// condition set and odd partitions to the second half. The same data are
// re-analysed at (K,M) = (5,32), (10,16), (20,8), (40,4).
inline std::vector<Matrix> split_conditions_once(
    const std::vector<Matrix>& partitions) {
    if (partitions.size() % 2 != 0)
        throw InvalidArgument("condition splitting needs an even partition count");
    std::vector<Matrix> out;
    out.reserve(partitions.size() / 2);
    const Index k = partitions.front().rows();
    const Index p = partitions.front().cols();
    for (std::size_t j = 0; 2 * j + 1 < partitions.size(); ++j) {
        Matrix stacked(2 * k, p);
        stacked.topRows(k) = partitions[2 * j + 1];   // even partition (1-based)
        stacked.bottomRows(k) = partitions[2 * j];    // odd partition
        out.push_back(std::move(stacked));
    }
    return out;
}

// Model RDM for a split level: conditions are copies of the base set, so the
// predicted distance depends only on the base conditions (zero for clones of
// the same condition).
inline Vector tile_model_rdm(const Vector& base, int base_k, int level_k) {
    ContrastMatrix base_cm = build_contrast_matrix(base_k);
    Vector d(pair_count(level_k));
    Index row = 0;
    for (int i = 0; i < level_k; ++i) {
        for (int j = i + 1; j < level_k; ++j, ++row) {
            int bi = i % base_k, bj = j % base_k;
            if (bi == bj) {
                d[row] = 0.0;
            } else {
                d[row] = base[pair_to_row(std::min(bi, bj) + 1,
                                          std::max(bi, bj) + 1, base_k)];
            }
        }
    }
    return d;
}

inline ConditionSplitReport run_condition_split(
    const Scenario& base, const std::vector<Criterion>& criteria,
    int n_levels = 4, int threads = 0) {
    if (base.m % (1 << (n_levels - 1)) != 0)
        throw InvalidArgument("partition count must be divisible by 2^levels");
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t n_models = base.candidate_models.size();

    struct Level {
        int k, m;
        ContrastMatrix cm;
        detail::CriterionContext ctx;
    };
    std::vector<Level> levels;
    for (int l = 0; l < n_levels; ++l) {
        Level lv;
        lv.k = base.k * (1 << l);
        lv.m = base.m / (1 << l);
        lv.cm = build_contrast_matrix(lv.k);
        std::vector<ModelRDM> tiled;
        for (const ModelRDM& m : base.candidate_models)
            tiled.push_back({m.name, tile_model_rdm(m.m, base.k, lv.k)});
        lv.ctx = detail::CriterionContext(
            criteria, tiled, Matrix::Identity(lv.k, lv.k), lv.cm);
        levels.push_back(std::move(lv));
    }

    std::vector<Matrix> gen_gram;
    for (const ModelRDM& m : base.candidate_models)
        gen_gram.push_back(gram_from_rdm(m.m, base.k));
    NoiseSampler noise(base.sigma_k, base.sigma_p, base.noise_dist);

    // One flat counts block: criteria x levels.
    const std::size_t n_crit = criteria.size();
    auto trial_fn = [&](int t, detail::TrialCounts& counts) {
        RandomStream rng(base.seed, static_cast<std::uint64_t>(t));
        const int gen = static_cast<int>(t % static_cast<int>(n_models));
        Matrix b = generate_signal(gen_gram[static_cast<std::size_t>(gen)],
                                   base.signal_strength, base.p, rng);
        std::vector<Matrix> parts;
        parts.reserve(static_cast<std::size_t>(base.m));
        for (int i = 0; i < base.m; ++i) parts.push_back(b + noise.draw(rng));

        std::vector<int> order(n_models);
        std::iota(order.begin(), order.end(), 0);
        detail::shuffle_order(order, rng);

        std::vector<double> values;
        for (std::size_t l = 0; l < levels.size(); ++l) {
            if (l > 0) parts = split_conditions_once(parts);
            ActivityDataset ds = ActivityDataset::create(parts);
            Vector d_biased = biased_distances(ds, levels[l].cm).d;
            Vector d_unbiased = unbiased_distances(ds, levels[l].cm).d;
            for (std::size_t c = 0; c < n_crit; ++c) {
                std::size_t slot = l * n_crit + c;
                try {
                    levels[l].ctx.values(criteria[c], d_biased, d_unbiased,
                                         values);
                } catch (const UndefinedSimilarityError&) {
                    ++counts.undefined[slot];
                    continue;
                }
                int winner = detail::pick_winner(values, order);
                ++counts.winners[slot][static_cast<std::size_t>(winner)];
                if (winner == gen) ++counts.correct[slot];
            }
        }
    };

    detail::TrialCounts counts = detail::run_trials(
        base.n_sims, threads, n_crit * levels.size(), n_models, trial_fn);

    ConditionSplitReport report;
    report.n_sims = base.n_sims;
    report.seed = base.seed;
    for (const ModelRDM& m : base.candidate_models)
        report.model_names.push_back(m.name);
    for (std::size_t l = 0; l < levels.size(); ++l) {
        ConditionSplitLevel lv;
        lv.k = levels[l].k;
        lv.m = levels[l].m;
        for (std::size_t c = 0; c < n_crit; ++c) {
            std::size_t slot = l * n_crit + c;
            lv.criteria.emplace_back(
                criteria[c],
                detail::stats_from_counts(counts.winners[slot],
                                          counts.correct[slot],
                                          counts.undefined[slot], base.n_sims));
        }
        report.levels.push_back(std::move(lv));
    }
    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return report;
}

}  // namespace rdmkit
