#pragma once

#include <utility>
#include <vector>

#include "rdmkit/core.hpp"

namespace rdmkit {

// M independent partitions of K x P activity-pattern estimates, with
// optional per-partition GLM residual matrices (N_m x P). Immutable after
// construction; every invariant is checked up front.
struct ActivityDataset {
    Index k = 0;
    Index p = 0;
    Index m = 0;
    std::vector<Matrix> patterns;
    std::vector<Matrix> residuals;

    bool has_residuals() const { return !residuals.empty(); }

    static ActivityDataset create(std::vector<Matrix> patterns,
                                  std::vector<Matrix> residuals = {}) {
        if (patterns.empty())
            throw InvalidArgument("dataset needs at least one partition");
        ActivityDataset ds;
        ds.k = patterns.front().rows();
        ds.p = patterns.front().cols();
        ds.m = static_cast<Index>(patterns.size());
        if (ds.k < 1 || ds.p < 1)
            throw InvalidArgument("pattern matrices must be non-empty");
        for (std::size_t i = 0; i < patterns.size(); ++i) {
            const Matrix& b = patterns[i];
            if (b.rows() != ds.k || b.cols() != ds.p)
                throw IngestionError("partition " + std::to_string(i + 1) +
                                     " has shape " + std::to_string(b.rows()) +
                                     "x" + std::to_string(b.cols()) +
                                     ", expected " + std::to_string(ds.k) + "x" +
                                     std::to_string(ds.p));
            if (!b.allFinite())
                throw IngestionError("partition " + std::to_string(i + 1) +
                                     " contains non-finite values");
        }
        if (!residuals.empty()) {
            if (static_cast<Index>(residuals.size()) != ds.m)
                throw IngestionError("expected " + std::to_string(ds.m) +
                                     " residual matrices, got " +
                                     std::to_string(residuals.size()));
            for (std::size_t i = 0; i < residuals.size(); ++i) {
                const Matrix& r = residuals[i];
                if (r.cols() != ds.p)
                    throw IngestionError(
                        "residual matrix " + std::to_string(i + 1) + " has " +
                        std::to_string(r.cols()) + " columns, expected " +
                        std::to_string(ds.p));
                if (!r.allFinite())
                    throw IngestionError("residual matrix " +
                                         std::to_string(i + 1) +
                                         " contains non-finite values");
            }
        }
        ds.patterns = std::move(patterns);
        ds.residuals = std::move(residuals);
        return ds;
    }
};

// D x K contrast matrix: one row per unordered condition pair, +1/-1 entries.
// Pairs are enumerated in row-major upper-triangular order
// (1,2),(1,3),...,(K-1,K); this order is canonical throughout.
struct ContrastMatrix {
    Matrix c;
    std::vector<std::pair<int, int>> pair_index;  // 1-based, i < j

    Index k() const { return c.cols(); }
    Index d() const { return c.rows(); }
};

inline ContrastMatrix build_contrast_matrix(int k) {
    if (k < 2) throw InvalidArgument("need at least 2 conditions, got " +
                                     std::to_string(k));
    const Index d = pair_count(k);
    ContrastMatrix cm;
    cm.c = Matrix::Zero(d, k);
    cm.pair_index.reserve(static_cast<std::size_t>(d));
    Index row = 0;
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j, ++row) {
            cm.c(row, i) = 1.0;
            cm.c(row, j) = -1.0;
            cm.pair_index.emplace_back(i + 1, j + 1);
        }
    }
    return cm;
}

// Row index of pair (i, j), 1-based with i < j, in the canonical order.
inline Index pair_to_row(int i, int j, int k) {
    if (i < 1 || j <= i || j > k) throw InvalidArgument("bad condition pair");
    Index a = i - 1, b = j - 1;
    return a * k - a * (a + 1) / 2 + (b - a - 1);
}

// Element-wise square root of all pattern matrices; residuals untouched.
inline ActivityDataset sqrt_transform(const ActivityDataset& ds) {
    std::vector<Matrix> out;
    out.reserve(ds.patterns.size());
    for (std::size_t pi = 0; pi < ds.patterns.size(); ++pi) {
        const Matrix& b = ds.patterns[pi];
        for (Index r = 0; r < b.rows(); ++r)
            for (Index c = 0; c < b.cols(); ++c)
                if (b(r, c) < 0.0)
                    throw DomainError(
                        "negative value at partition " + std::to_string(pi + 1) +
                        ", row " + std::to_string(r + 1) + ", column " +
                        std::to_string(c + 1) +
                        "; square-root transform needs non-negative data");
        out.push_back(b.cwiseSqrt());
    }
    return ActivityDataset::create(std::move(out), ds.residuals);
}

// C * B_m for every partition: rows are the estimated pattern differences.
inline std::vector<Matrix> pattern_differences(const ActivityDataset& ds,
                                               const ContrastMatrix& cm) {
    if (cm.k() != ds.k)
        throw InvalidArgument("contrast matrix is for " +
                              std::to_string(cm.k()) + " conditions, dataset has " +
                              std::to_string(ds.k));
    std::vector<Matrix> out;
    out.reserve(ds.patterns.size());
    for (const Matrix& b : ds.patterns) {
        Matrix diff(cm.d(), ds.p);
        for (Index r = 0; r < cm.d(); ++r) {
            const auto& pr = cm.pair_index[static_cast<std::size_t>(r)];
            diff.row(r) = b.row(pr.first - 1) - b.row(pr.second - 1);
        }
        out.push_back(std::move(diff));
    }
    return out;
}

}  // namespace rdmkit
