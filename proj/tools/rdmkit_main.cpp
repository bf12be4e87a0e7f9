// rdmkit command line: ingest -> prewhiten -> estimate -> whiten -> compare
// -> simulate, with machine-readable JSON outputs.
//
// Exit codes: 0 success, 2 usage error, 3 input error, 4 numerical error.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rdmkit/rdmkit.hpp"
#include "rdmkit/selfcheck.hpp"

namespace {

using namespace rdmkit;

void emit_json(const std::string& out_path, const json& j) {
    std::string text = j.dump(2) + "\n";
    if (out_path == "-") {
        std::cout << text;
    } else {
        write_file_atomic(out_path, text);
    }
}

int env_threads() {
    const char* env = std::getenv("RDMKIT_THREADS");
    if (env == nullptr) return 0;
    try {
        return std::max(0, std::stoi(env));
    } catch (...) {
        return 0;
    }
}

struct DistancesArgs {
    std::string manifest;
    std::string method = "crossval";
    std::string metric = "euclidean";
    double shrink = 0.3;
    int km = 0;
    std::string out = "-";
    std::string csv;
};

int cmd_distances(const DistancesArgs& args) {
    ActivityDataset ds = load_dataset(args.manifest);
    Metric metric = args.metric == "mahalanobis" ? Metric::mahalanobis
                                                 : Metric::euclidean;
    if (metric == Metric::mahalanobis) {
        if (!ds.has_residuals())
            throw MissingResidualsError(
                "residuals required for the Mahalanobis metric");
        int km = args.km > 0 ? args.km : static_cast<int>(ds.k);
        Matrix sigma = shrink_sigma_p(estimate_sigma_p(ds, km), args.shrink);
        ds = prewhiten(ds, sigma);
    }
    ContrastMatrix cm = build_contrast_matrix(static_cast<int>(ds.k));
    RDMEstimate est = args.method == "biased"
                          ? biased_distances(ds, cm, metric)
                          : unbiased_distances(ds, cm, metric);
    emit_json(args.out, rdm_to_json(est));
    if (!args.csv.empty()) write_rdm_csv(args.csv, est);
    return 0;
}

struct WhitenArgs {
    std::string rdm;
    std::string sigma_k;
    std::string out = "-";
};

int cmd_whiten(const WhitenArgs& args) {
    RDMEstimate est = load_rdm_json(args.rdm);
    ContrastMatrix cm = build_contrast_matrix(est.k);
    Matrix sk = args.sigma_k.empty() ? Matrix::Identity(est.k, est.k)
                                     : load_csv_matrix(args.sigma_k);
    Matrix w = whitener(null_covariance(sk, cm));
    RDMEstimate out = est;
    out.d = w * est.d;
    json j = rdm_to_json(out);
    j["whitened"] = true;
    emit_json(args.out, j);
    return 0;
}

struct CompareArgs {
    std::string criterion = "whitened_cosine";
    std::string rdm;
    std::vector<std::string> model_paths;
    std::string models_dir;
    std::string sigma_k;
    std::string out = "-";
};

int cmd_compare(const CompareArgs& args) {
    Criterion crit = parse_criterion(args.criterion);
    RDMEstimate est = load_rdm_json(args.rdm);
    std::vector<ModelRDM> models;
    std::vector<fs::path> files;
    for (const std::string& p : args.model_paths) files.emplace_back(p);
    if (!args.models_dir.empty()) {
        if (!fs::is_directory(args.models_dir))
            throw IngestionError(args.models_dir + " is not a directory");
        for (const auto& entry : fs::directory_iterator(args.models_dir))
            if (entry.path().extension() == ".json")
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
    }
    if (files.empty()) throw InvalidArgument("no model RDM files given");
    for (const fs::path& f : files) {
        ModelRDM model = load_model_rdm(f);
        if (model.m.size() != est.d.size())
            throw InvalidArgument("model file " + f.string() + " has " +
                                  std::to_string(model.m.size()) +
                                  " distances, data RDM has " +
                                  std::to_string(est.d.size()));
        models.push_back(std::move(model));
    }
    std::optional<Matrix> sk;
    if (!args.sigma_k.empty()) sk = load_csv_matrix(args.sigma_k);
    ComparisonResult res = compare_models(est.d, est.k, models, crit,
                                          sk ? &*sk : nullptr);
    emit_json(args.out, comparison_to_json(res));
    return 0;
}

struct SimulateArgs {
    std::string scenario;
    int sims = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string criteria = "pearson,whitened_pearson,cosine,whitened_cosine";
    std::string out = "-";
    int threads = 0;
    int m_override = 0;
    double signal_override = -1.0;
    double s2_override = -1.0;
};

int cmd_simulate(const SimulateArgs& args) {
    Scenario sc;
    bool is_library = false;
    try {
        sc = scenario_library(args.scenario);
        is_library = true;
    } catch (const InvalidArgument&) {
        if (!fs::exists(args.scenario))
            throw InvalidArgument("unknown scenario '" + args.scenario +
                                  "' and no such file");
        sc = load_scenario_json(args.scenario);
    }
    if (args.m_override > 0) {
        if (is_library && sc.name.rfind("fig4", 0) == 0) {
            sc = make_fig4_scenario(sc.name.back(), args.m_override,
                                    sc.signal_strength);
        } else {
            sc.m = args.m_override;
        }
    }
    if (args.signal_override >= 0.0) sc.signal_strength = args.signal_override;
    if (args.s2_override >= 0.0) {
        if (sc.name != "spatial_noise_appendix")
            throw InvalidArgument("--s2 only applies to spatial_noise_appendix");
        sc = make_spatial_noise_scenario(args.s2_override, sc.signal_strength);
    }
    if (args.sims > 0) sc.n_sims = args.sims;
    if (args.seed_set) sc.seed = args.seed;

    std::vector<Criterion> criteria;
    std::stringstream ss(args.criteria);
    std::string token;
    while (std::getline(ss, token, ','))
        if (!token.empty()) criteria.push_back(parse_criterion(token));

    int threads = args.threads > 0 ? args.threads : env_threads();
    std::cerr << "scenario " << sc.name << ": " << sc.n_sims
              << " sims, seed " << sc.seed << "\n";
    json j;
    double runtime = 0.0;
    if (sc.name == "cond_split_fig7") {
        ConditionSplitReport rep = run_condition_split(sc, criteria, 4, threads);
        runtime = rep.runtime_seconds;
        j = report_to_json(rep);
    } else {
        AccuracyReport rep = run_scenario(sc, criteria, threads);
        runtime = rep.runtime_seconds;
        j = report_to_json(rep);
    }
    emit_json(args.out, j);
    std::cerr << "done in " << runtime << "s\n";
    return 0;
}

struct SelftestArgs {
    int threads = 0;
    double sims_scale = 0.25;
    double perturb_v = 0.0;
    std::vector<int> checks;
};

int cmd_selftest(const SelftestArgs& args) {
    selfcheck::CheckOptions opt;
    opt.sims_scale = args.sims_scale;
    opt.threads = args.threads > 0 ? args.threads : env_threads();
    opt.v_perturbation = args.perturb_v;
    std::vector<int> ids =
        args.checks.empty() ? selfcheck::selftest_ids() : args.checks;
    auto results = selfcheck::run_checks(ids, opt);
    int failures = 0;
    for (const auto& r : results) {
        std::cerr << (r.pass ? "[PASS] " : "[FAIL] ") << "check " << r.id
                  << ": " << r.name << " (" << r.detail << ") ["
                  << r.seconds << "s]\n";
        failures += r.pass ? 0 : 1;
    }
    std::cerr << (failures == 0 ? "selftest passed\n"
                                : "selftest FAILED\n");
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rdmkit: crossvalidated distance estimation and whitened "
                 "RDM model comparison"};
    app.require_subcommand(1);

    DistancesArgs dist_args;
    auto* dist = app.add_subcommand(
        "distances", "estimate an RDM from a dataset manifest");
    dist->add_option("--manifest", dist_args.manifest, "dataset manifest JSON")
        ->required();
    dist->add_option("--method", dist_args.method, "biased or crossval")
        ->check(CLI::IsMember({"biased", "crossval"}));
    dist->add_option("--metric", dist_args.metric, "euclidean or mahalanobis")
        ->check(CLI::IsMember({"euclidean", "mahalanobis"}));
    dist->add_option("--shrink", dist_args.shrink,
                     "shrinkage weight h in [0,1] for Sigma_P")
        ->check(CLI::Range(0.0, 1.0));
    dist->add_option("--km", dist_args.km,
                     "regressors per partition (default: condition count)");
    dist->add_option("--out", dist_args.out, "output RDM JSON ('-' = stdout)");
    dist->add_option("--csv", dist_args.csv, "also write a CSV mirror");

    WhitenArgs whiten_args;
    auto* whiten = app.add_subcommand(
        "whiten", "whiten an RDM with the null-model covariance");
    whiten->add_option("--rdm", whiten_args.rdm, "RDM JSON file")->required();
    whiten->add_option("--sigma-k", whiten_args.sigma_k,
                       "condition covariance CSV (default identity)");
    whiten->add_option("--out", whiten_args.out, "output JSON ('-' = stdout)");

    CompareArgs cmp_args;
    auto* cmp = app.add_subcommand("compare",
                                   "compare a data RDM against model RDMs");
    cmp->add_option("--criterion", cmp_args.criterion,
                    "cosine|pearson|whitened_cosine|whitened_pearson|"
                    "spearman|kendall_tau_a|cka");
    cmp->add_option("--rdm", cmp_args.rdm, "data RDM JSON")->required();
    cmp->add_option("--models", cmp_args.models_dir,
                    "directory of model RDM JSON files");
    cmp->add_option("--model", cmp_args.model_paths,
                    "individual model RDM JSON (repeatable)");
    cmp->add_option("--sigma-k", cmp_args.sigma_k,
                    "condition covariance CSV for whitened criteria");
    cmp->add_option("--out", cmp_args.out, "output JSON ('-' = stdout)");

    SimulateArgs sim_args;
    auto* sim = app.add_subcommand(
        "simulate", "run a Monte Carlo model-selection scenario");
    sim->add_option("--scenario", sim_args.scenario,
                    "library name (fig4a..fig4d, exp1_like, exp2_like, "
                    "cond_split_fig7, spatial_noise_appendix) or JSON file")
        ->required();
    sim->add_option("--sims", sim_args.sims, "number of simulations")
        ->check(CLI::PositiveNumber);
    sim->add_option("--seed", sim_args.seed, "RNG seed")
        ->each([&](const std::string&) { sim_args.seed_set = true; });
    sim->add_option("--criteria", sim_args.criteria,
                    "comma-separated criterion list");
    sim->add_option("--out", sim_args.out, "report JSON ('-' = stdout)");
    sim->add_option("--threads", sim_args.threads,
                    "worker threads (default: RDMKIT_THREADS or all cores)");
    sim->add_option("--m", sim_args.m_override, "override partition count");
    sim->add_option("--signal", sim_args.signal_override,
                    "override signal strength");
    sim->add_option("--s2", sim_args.s2_override,
                    "spatial kernel variance for spatial_noise_appendix");

    SelftestArgs self_args;
    auto* self = app.add_subcommand(
        "selftest", "run the fast subset of the acceptance checks");
    self->add_option("--threads", self_args.threads, "worker threads");
    self->add_option("--sims-scale", self_args.sims_scale,
                     "Monte Carlo budget multiplier");
    self->add_option("--check", self_args.checks,
                     "run specific check ids (repeatable)");
    self->add_option("--perturb-v", self_args.perturb_v,
                     "test hook: distort V before the eigenstructure check")
        ->group("");  // hidden

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (dist->parsed()) return cmd_distances(dist_args);
        if (whiten->parsed()) return cmd_whiten(whiten_args);
        if (cmp->parsed()) return cmd_compare(cmp_args);
        if (sim->parsed()) return cmd_simulate(sim_args);
        if (self->parsed()) return cmd_selftest(self_args);
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
