#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdmkit/compare.hpp"
#include "rdmkit/dataset.hpp"
#include "rdmkit/estimators.hpp"
#include "rdmkit/scenarios.hpp"

namespace rdmkit {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Results land via write-to-temp-then-rename so no partial output file is
// ever observed.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IngestionError("cannot write " + tmp.string());
        out << content;
        if (!out.flush())
            throw IngestionError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

namespace detail {

inline double parse_cell(const std::string& cell, const fs::path& file,
                         std::size_t row) {
    const char* begin = cell.c_str();
    const char* end = begin + cell.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end > begin && (end[-1] == ' ' || end[-1] == '\t' ||
                           end[-1] == '\r'))
        --end;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
        throw IngestionError("non-numeric cell '" + cell + "' in " +
                             file.string() + ", row " + std::to_string(row));
    if (!std::isfinite(value))
        throw IngestionError("non-finite value in " + file.string() +
                             ", row " + std::to_string(row));
    return value;
}

}  // namespace detail

// Headerless CSV matrix: ',' separators, '.' decimals, one row per line.
inline Matrix load_csv_matrix(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            row.push_back(detail::parse_cell(cell, path, line_no));
        if (!rows.empty() && row.size() != rows.front().size())
            throw IngestionError("ragged row in " + path.string() + ", row " +
                                 std::to_string(line_no));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IngestionError(path.string() + " is empty");
    Matrix m(static_cast<Index>(rows.size()),
             static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j)
            m(i, j) = rows[static_cast<std::size_t>(i)]
                          [static_cast<std::size_t>(j)];
    return m;
}

inline void write_csv_matrix(const fs::path& path, const Matrix& m) {
    std::string out;
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j) out += ',';
            out += format_double(m(i, j));
        }
        out += '\n';
    }
    write_file_atomic(path, out);
}

// Manifest: {"k", "p", "m", "partitions": [paths], "residuals": [paths]?},
// paths relative to the manifest location.
inline ActivityDataset load_dataset(const fs::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IngestionError("cannot open manifest " +
                                  manifest_path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IngestionError("malformed manifest " + manifest_path.string() +
                             ": " + e.what());
    }
    for (const char* field : {"k", "p", "m", "partitions"})
        if (!j.contains(field))
            throw IngestionError("manifest " + manifest_path.string() +
                                 " is missing field '" + field + "'");
    const Index k = j["k"].get<Index>();
    const Index p = j["p"].get<Index>();
    const Index m = j["m"].get<Index>();
    const fs::path base = manifest_path.parent_path();

    auto load_list = [&](const json& names) {
        std::vector<Matrix> mats;
        for (const auto& name : names)
            mats.push_back(load_csv_matrix(base / name.get<std::string>()));
        return mats;
    };
    if (static_cast<Index>(j["partitions"].size()) != m)
        throw IngestionError("manifest declares m=" + std::to_string(m) +
                             " but lists " +
                             std::to_string(j["partitions"].size()) +
                             " partitions");
    std::vector<Matrix> patterns = load_list(j["partitions"]);
    for (std::size_t i = 0; i < patterns.size(); ++i)
        if (patterns[i].rows() != k || patterns[i].cols() != p)
            throw IngestionError(
                "partition file " + j["partitions"][i].get<std::string>() +
                " has shape " + std::to_string(patterns[i].rows()) + "x" +
                std::to_string(patterns[i].cols()) + ", manifest declares " +
                std::to_string(k) + "x" + std::to_string(p));
    std::vector<Matrix> residuals;
    if (j.contains("residuals") && !j["residuals"].is_null()) {
        if (static_cast<Index>(j["residuals"].size()) != m)
            throw IngestionError("manifest must list one residual file per "
                                 "partition");
        residuals = load_list(j["residuals"]);
    }
    return ActivityDataset::create(std::move(patterns), std::move(residuals));
}

// Writes partition/residual CSVs plus manifest.json into dir; returns the
// manifest path. Values round-trip bit-exactly through load_dataset.
inline fs::path write_dataset(const ActivityDataset& ds, const fs::path& dir) {
    fs::create_directories(dir);
    json manifest;
    manifest["k"] = ds.k;
    manifest["p"] = ds.p;
    manifest["m"] = ds.m;
    std::vector<std::string> part_names;
    for (Index i = 0; i < ds.m; ++i) {
        std::string name = "partition_" + std::to_string(i + 1) + ".csv";
        write_csv_matrix(dir / name, ds.patterns[static_cast<std::size_t>(i)]);
        part_names.push_back(name);
    }
    manifest["partitions"] = part_names;
    if (ds.has_residuals()) {
        std::vector<std::string> res_names;
        for (Index i = 0; i < ds.m; ++i) {
            std::string name = "residuals_" + std::to_string(i + 1) + ".csv";
            write_csv_matrix(dir / name,
                             ds.residuals[static_cast<std::size_t>(i)]);
            res_names.push_back(name);
        }
        manifest["residuals"] = res_names;
    }
    fs::path mpath = dir / "manifest.json";
    write_file_atomic(mpath, manifest.dump(2) + "\n");
    return mpath;
}

// RDM JSON: {"k", "m", "estimator", "metric", "pairs": [[i,j],...], "d": [...]}
// with 1-based condition indices in canonical pair order.
inline json rdm_to_json(const RDMEstimate& est) {
    json j;
    j["k"] = est.k;
    j["m"] = est.m;
    j["estimator"] = to_string(est.estimator);
    j["metric"] = to_string(est.metric);
    ContrastMatrix cm = build_contrast_matrix(est.k);
    json pairs = json::array();
    for (const auto& [i, k] : cm.pair_index) pairs.push_back({i, k});
    j["pairs"] = std::move(pairs);
    j["d"] = std::vector<double>(est.d.begin(), est.d.end());
    return j;
}

inline void write_rdm_json(const fs::path& path, const RDMEstimate& est) {
    write_file_atomic(path, rdm_to_json(est).dump(2) + "\n");
}

inline void write_rdm_csv(const fs::path& path, const RDMEstimate& est) {
    ContrastMatrix cm = build_contrast_matrix(est.k);
    std::string out = "i,j,d\n";
    for (Index r = 0; r < est.d.size(); ++r) {
        const auto& pr = cm.pair_index[static_cast<std::size_t>(r)];
        out += std::to_string(pr.first) + ',' + std::to_string(pr.second) +
               ',' + format_double(est.d[r]) + '\n';
    }
    write_file_atomic(path, out);
}

inline RDMEstimate load_rdm_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IngestionError("malformed RDM file " + path.string() + ": " +
                             e.what());
    }
    RDMEstimate est;
    if (!j.contains("k") || !j.contains("d"))
        throw IngestionError(path.string() + " is missing 'k' or 'd'");
    est.k = j["k"].get<int>();
    est.m = j.value("m", 0);
    std::string estimator = j.value("estimator", "unbiased");
    est.estimator = estimator == "biased" ? Estimator::biased
                                          : Estimator::unbiased;
    std::string metric = j.value("metric", "euclidean");
    est.metric = metric == "mahalanobis" ? Metric::mahalanobis
                                         : Metric::euclidean;
    std::vector<double> d = j["d"].get<std::vector<double>>();
    if (static_cast<Index>(d.size()) != pair_count(est.k))
        throw IngestionError(path.string() + " has " +
                             std::to_string(d.size()) +
                             " distances, expected k(k-1)/2");
    est.d = Eigen::Map<Vector>(d.data(), static_cast<Index>(d.size()));
    return est;
}

// Model RDM file: {"name"?, "d": [...]} (name defaults to the file stem) or
// a full RDM JSON.
inline ModelRDM load_model_rdm(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IngestionError("malformed model file " + path.string() + ": " +
                             e.what());
    }
    if (!j.contains("d"))
        throw IngestionError(path.string() + " is missing 'd'");
    ModelRDM model;
    model.name = j.value("name", path.stem().string());
    std::vector<double> d = j["d"].get<std::vector<double>>();
    model.m = Eigen::Map<Vector>(d.data(), static_cast<Index>(d.size()));
    if (model.m.size() == 0 || model.m.cwiseAbs().maxCoeff() == 0.0)
        throw IngestionError("model RDM " + path.string() + " is all-zero");
    return model;
}

inline json comparison_to_json(const ComparisonResult& res) {
    json j;
    j["criterion"] = to_string(res.criterion);
    json values = json::object();
    for (const auto& [name, value] : res.per_model) values[name] = value;
    j["per_model"] = std::move(values);
    j["winner"] = res.winner;
    return j;
}

inline json criterion_stats_to_json(const CriterionStats& s,
                                    const std::vector<std::string>& names) {
    json j;
    j["accuracy"] = s.accuracy;
    j["se"] = s.se;
    json split = json::object();
    for (std::size_t i = 0; i < names.size() && i < s.split.size(); ++i)
        split[names[i]] = s.split[i];
    j["split"] = std::move(split);
    j["undefined"] = s.undefined_frac;
    return j;
}

inline json report_to_json(const AccuracyReport& r) {
    json j;
    j["scenario"] = r.scenario;
    j["n_sims"] = r.n_sims;
    j["seed"] = r.seed;
    j["models"] = r.model_names;
    json crit = json::object();
    for (const auto& [c, stats] : r.criteria)
        crit[to_string(c)] = criterion_stats_to_json(stats, r.model_names);
    j["criteria"] = std::move(crit);
    return j;
}

inline json report_to_json(const ConditionSplitReport& r) {
    json j;
    j["scenario"] = "cond_split_fig7";
    j["n_sims"] = r.n_sims;
    j["seed"] = r.seed;
    j["models"] = r.model_names;
    json levels = json::array();
    for (const auto& lv : r.levels) {
        json l;
        l["k"] = lv.k;
        l["m"] = lv.m;
        json crit = json::object();
        for (const auto& [c, stats] : lv.criteria)
            crit[to_string(c)] = criterion_stats_to_json(stats, r.model_names);
        l["criteria"] = std::move(crit);
        levels.push_back(std::move(l));
    }
    j["levels"] = std::move(levels);
    return j;
}

// Scenario file: mirrors the Scenario struct; matrices as nested arrays,
// "identity" accepted for the covariances.
inline Scenario load_scenario_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open scenario " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IngestionError("malformed scenario " + path.string() + ": " +
                             e.what());
    }
    Scenario sc;
    sc.name = j.value("name", path.stem().string());
    for (const char* field : {"k", "p", "m"})
        if (!j.contains(field))
            throw IngestionError("scenario " + path.string() +
                                 " is missing '" + field + "'");
    sc.k = j["k"].get<int>();
    sc.p = j["p"].get<int>();
    sc.m = j["m"].get<int>();
    sc.signal_strength = j.value("signal_strength", 0.0);
    auto load_square = [&](const char* field, int dim) -> Matrix {
        if (!j.contains(field) || j[field].is_null() ||
            (j[field].is_string() && j[field] == "identity"))
            return Matrix::Identity(dim, dim);
        auto rows = j[field].get<std::vector<std::vector<double>>>();
        Matrix m(static_cast<Index>(rows.size()),
                 static_cast<Index>(rows.front().size()));
        for (Index a = 0; a < m.rows(); ++a)
            for (Index b = 0; b < m.cols(); ++b)
                m(a, b) = rows[static_cast<std::size_t>(a)]
                              [static_cast<std::size_t>(b)];
        if (m.rows() != dim || m.cols() != dim)
            throw IngestionError(std::string("scenario field '") + field +
                                 "' has the wrong shape");
        return m;
    };
    sc.sigma_k = load_square("sigma_k", sc.k);
    sc.sigma_p = load_square("sigma_p", sc.p);
    if (j.contains("signal_model") && !j["signal_model"].is_null()) {
        auto rows = j["signal_model"].get<std::vector<std::vector<double>>>();
        sc.signal_model.resize(static_cast<Index>(rows.size()),
                               static_cast<Index>(rows.front().size()));
        for (Index a = 0; a < sc.signal_model.rows(); ++a)
            for (Index b = 0; b < sc.signal_model.cols(); ++b)
                sc.signal_model(a, b) = rows[static_cast<std::size_t>(a)]
                                            [static_cast<std::size_t>(b)];
    }
    if (!j.contains("candidate_models"))
        throw IngestionError("scenario " + path.string() +
                             " is missing 'candidate_models'");
    for (const auto& jm : j["candidate_models"]) {
        ModelRDM model;
        model.name = jm.value("name", "model" +
                              std::to_string(sc.candidate_models.size() + 1));
        std::vector<double> d = jm["d"].get<std::vector<double>>();
        model.m = Eigen::Map<Vector>(d.data(), static_cast<Index>(d.size()));
        if (model.m.size() != pair_count(sc.k))
            throw IngestionError("model '" + model.name +
                                 "' has the wrong RDM length");
        sc.candidate_models.push_back(std::move(model));
    }
    sc.n_sims = j.value("n_sims", 1000);
    sc.seed = j.value("seed", std::uint64_t{0});
    sc.noise_dist = parse_noise_dist(j.value("noise_dist", "gaussian"));
    return sc;
}

}  // namespace rdmkit
