#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "rdmkit/covariance.hpp"

namespace rdmkit {

struct ModelRDM {
    std::string name;
    Vector m;
};

enum class Criterion {
    cosine,
    pearson,
    whitened_cosine,  // WUC when paired with unbiased estimates
    whitened_pearson,
    spearman,
    kendall_tau_a,
    cka,
};

inline const char* to_string(Criterion c) {
    switch (c) {
        case Criterion::cosine: return "cosine";
        case Criterion::pearson: return "pearson";
        case Criterion::whitened_cosine: return "whitened_cosine";
        case Criterion::whitened_pearson: return "whitened_pearson";
        case Criterion::spearman: return "spearman";
        case Criterion::kendall_tau_a: return "kendall_tau_a";
        case Criterion::cka: return "cka";
    }
    return "?";
}

inline Criterion parse_criterion(const std::string& s) {
    if (s == "cosine") return Criterion::cosine;
    if (s == "pearson") return Criterion::pearson;
    if (s == "whitened_cosine" || s == "wuc") return Criterion::whitened_cosine;
    if (s == "whitened_pearson") return Criterion::whitened_pearson;
    if (s == "spearman") return Criterion::spearman;
    if (s == "kendall_tau_a" || s == "kendall") return Criterion::kendall_tau_a;
    if (s == "cka") return Criterion::cka;
    throw InvalidArgument("unknown criterion '" + s + "'");
}

inline double cosine_similarity(const Vector& d, const Vector& m) {
    if (d.size() != m.size())
        throw InvalidArgument("vectors differ in length");
    double dd = d.squaredNorm(), mm = m.squaredNorm();
    if (dd == 0.0 || mm == 0.0)
        throw UndefinedSimilarityError("cosine similarity of a zero vector");
    return d.dot(m) / std::sqrt(dd * mm);
}

inline double pearson(const Vector& d, const Vector& m) {
    if (d.size() != m.size())
        throw InvalidArgument("vectors differ in length");
    Vector dc = d.array() - d.mean();
    Vector mc = m.array() - m.mean();
    double dd = dc.squaredNorm(), mm = mc.squaredNorm();
    if (dd == 0.0 || mm == 0.0)
        throw UndefinedSimilarityError("Pearson correlation of a constant vector");
    return dc.dot(mc) / std::sqrt(dd * mm);
}

// Whitened cosine with a precomputed whitener W = V^{-1/2}; this is the path
// used when one V serves many model comparisons.
inline double whitened_cosine_with(const Matrix& w, const Vector& d,
                                   const Vector& m) {
    Vector wd = w * d;
    Vector wm = w * m;
    double dd = wd.squaredNorm(), mm = wm.squaredNorm();
    if (dd == 0.0 || mm == 0.0)
        throw UndefinedSimilarityError(
            "vector is annihilated by the whitening pseudo-inverse");
    return wd.dot(wm) / std::sqrt(dd * mm);
}

inline double whitened_cosine(const Vector& d, const Vector& m,
                              const DistanceCovariance& v) {
    return whitened_cosine_with(whitener(v), d, m);
}

inline double whitened_pearson_with(const Matrix& w, const Vector& d,
                                    const Vector& m) {
    Vector dc = d.array() - d.mean();
    Vector mc = m.array() - m.mean();
    return whitened_cosine_with(w, dc, mc);
}

inline double whitened_pearson(const Vector& d, const Vector& m,
                               const DistanceCovariance& v) {
    return whitened_pearson_with(whitener(v), d, m);
}

namespace detail {

// Average ranks (ties share the mean of their positions).
inline Vector rank_vector(const Vector& x) {
    const Index n = x.size();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(),
              [&](Index a, Index b) { return x[a] < x[b]; });
    Vector ranks(n);
    Index i = 0;
    while (i < n) {
        Index j = i;
        while (j + 1 < n && x[order[static_cast<std::size_t>(j + 1)]] ==
                                x[order[static_cast<std::size_t>(i)]])
            ++j;
        double mean_rank = 0.5 * (i + j) + 1.0;
        for (Index t = i; t <= j; ++t)
            ranks[order[static_cast<std::size_t>(t)]] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

}  // namespace detail

struct RankCorrelations {
    double spearman = 0.0;
    double kendall_tau_a = 0.0;
};

// Spearman = Pearson on average ranks; tau_a = (concordant - discordant)
// over n(n-1)/2, so ties shrink |tau_a|.
inline RankCorrelations rank_correlations(const Vector& d, const Vector& m) {
    if (d.size() != m.size())
        throw InvalidArgument("vectors differ in length");
    const Index n = d.size();
    if (n < 2) throw InvalidArgument("rank correlations need length >= 2");
    RankCorrelations out;
    out.spearman = pearson(detail::rank_vector(d), detail::rank_vector(m));
    long long concordant = 0, discordant = 0;
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            double s = (d[i] - d[j]) * (m[i] - m[j]);
            if (s > 0.0)
                ++concordant;
            else if (s < 0.0)
                ++discordant;
        }
    }
    out.kendall_tau_a = static_cast<double>(concordant - discordant) /
                        (0.5 * static_cast<double>(n) * (n - 1));
    return out;
}

// Linear CKA between two pattern sets with a shared row count:
//   HSIC(A,B) = vec(G_A)^T vec(G_B),  G = H X X^T H^T / P,
//   CKA = HSIC(A,B) / sqrt(HSIC(A,A) HSIC(B,B)).
inline double linear_cka(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw InvalidArgument("pattern matrices must share the row count");
    if (a.rows() < 2) throw InvalidArgument("need at least 2 rows");
    Matrix ac = a.rowwise() - a.colwise().mean();
    Matrix bc = b.rowwise() - b.colwise().mean();
    Matrix ga = ac * ac.transpose() / static_cast<double>(a.cols());
    Matrix gb = bc * bc.transpose() / static_cast<double>(b.cols());
    double hab = ga.cwiseProduct(gb).sum();
    double haa = ga.cwiseProduct(ga).sum();
    double hbb = gb.cwiseProduct(gb).sum();
    if (haa == 0.0 || hbb == 0.0)
        throw UndefinedSimilarityError("centered pattern matrix is zero");
    return hab / std::sqrt(haa * hbb);
}

struct WeightedFit {
    Vector theta;
    double loss = 0.0;
};

// Generalized least squares for m(theta) = sum_i theta_i m_i under the loss
// J(theta) = (d - m(theta))^T V^{-1} (d - m(theta)), evaluated in whitened
// coordinates. With nonneg, projected coordinate descent is run until the
// largest coordinate change drops below 1e-10.
inline WeightedFit fit_weighted_model(const Vector& d,
                                      const std::vector<ModelRDM>& components,
                                      const DistanceCovariance& v,
                                      bool nonneg = false) {
    if (components.empty()) throw InvalidArgument("no model components");
    const Index n = static_cast<Index>(components.size());
    const Index dim = d.size();
    Matrix design(dim, n);
    for (Index i = 0; i < n; ++i) {
        if (components[static_cast<std::size_t>(i)].m.size() != dim)
            throw InvalidArgument("component '" +
                                  components[static_cast<std::size_t>(i)].name +
                                  "' has the wrong length");
        design.col(i) = components[static_cast<std::size_t>(i)].m;
    }
    Matrix w = whitener(v);
    Matrix x = w * design;
    Vector y = w * d;

    Eigen::ColPivHouseholderQR<Matrix> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < n)
        throw DegenerateModelError(
            "model components are linearly dependent on the covariance range");

    WeightedFit fit;
    if (!nonneg) {
        fit.theta = qr.solve(y);
    } else {
        Matrix h = x.transpose() * x;
        Vector b = x.transpose() * y;
        Vector theta = Vector::Zero(n);
        for (int iter = 0; iter < 100000; ++iter) {
            double max_change = 0.0;
            for (Index i = 0; i < n; ++i) {
                double resid = b[i] - h.row(i).dot(theta) + h(i, i) * theta[i];
                double next = std::max(0.0, resid / h(i, i));
                max_change = std::max(max_change, std::abs(next - theta[i]));
                theta[i] = next;
            }
            if (max_change < 1e-10) break;
        }
        fit.theta = theta;
    }
    fit.loss = (y - x * fit.theta).squaredNorm();
    return fit;
}

struct ComparisonResult {
    Criterion criterion = Criterion::cosine;
    std::vector<std::pair<std::string, double>> per_model;  // sorted by name
    std::string winner;
};

// Evaluate one criterion for every model against the data RDM. Whitened
// criteria build the null-model V from sigma_k (identity when absent); CKA on
// RDM vectors is the whitened cosine under the identity-noise null V. Ties
// go to the first model in name order.
inline ComparisonResult compare_models(const Vector& d, int k,
                                       const std::vector<ModelRDM>& models,
                                       Criterion criterion,
                                       const Matrix* sigma_k = nullptr) {
    if (models.empty()) throw InvalidArgument("no models to compare");
    Matrix w;
    if (criterion == Criterion::whitened_cosine ||
        criterion == Criterion::whitened_pearson ||
        criterion == Criterion::cka) {
        ContrastMatrix cm = build_contrast_matrix(k);
        Matrix sk = (criterion != Criterion::cka && sigma_k != nullptr)
                        ? *sigma_k
                        : Matrix::Identity(k, k);
        w = whitener(null_covariance(sk, cm));
    }
    ComparisonResult res;
    res.criterion = criterion;
    for (const ModelRDM& model : models) {
        double value = 0.0;
        switch (criterion) {
            case Criterion::cosine: value = cosine_similarity(d, model.m); break;
            case Criterion::pearson: value = pearson(d, model.m); break;
            case Criterion::whitened_cosine:
            case Criterion::cka:
                value = whitened_cosine_with(w, d, model.m);
                break;
            case Criterion::whitened_pearson:
                value = whitened_pearson_with(w, d, model.m);
                break;
            case Criterion::spearman:
                value = rank_correlations(d, model.m).spearman;
                break;
            case Criterion::kendall_tau_a:
                value = rank_correlations(d, model.m).kendall_tau_a;
                break;
        }
        res.per_model.emplace_back(model.name, value);
    }
    std::sort(res.per_model.begin(), res.per_model.end());
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& [name, value] : res.per_model) {
        if (value > best) {
            best = value;
            res.winner = name;
        }
    }
    return res;
}

}  // namespace rdmkit
