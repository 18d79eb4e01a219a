#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include <gnc/gnc.hpp>
#include <gnc/io.hpp>

namespace {

using gnc::io::json;
using Clock = std::chrono::steady_clock;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct AlphaGridArgs {
    double lo = 1e-2;
    double hi = 1e4;
    std::size_t count = 40;

    std::vector<double> grid() const { return gnc::log_grid(lo, hi, count); }
};

void add_grid_options(CLI::App* cmd, AlphaGridArgs& g) {
    cmd->add_option("--alpha-min", g.lo, "Smallest alpha on the tuning grid")->capture_default_str();
    cmd->add_option("--alpha-max", g.hi, "Largest alpha on the tuning grid")->capture_default_str();
    cmd->add_option("--alpha-count", g.count, "Number of log-spaced alphas")->capture_default_str();
}

json curve_to_json(const gnc::TuningCurve& c) {
    return json{{"alphas", c.alphas}, {"scores", c.scores}, {"chosen_alpha", c.chosen_alpha},
                {"chosen_index", c.chosen_index}};
}

void finish_manifest(gnc::io::Manifest& m, bool record_time, Clock::time_point start) {
    if (record_time) m.wall_clock_seconds = std::chrono::duration<double>(Clock::now() - start).count();
}

// Data + network shared by fit, tune and roc.
struct Inputs {
    Eigen::MatrixXd X;
    gnc::Network net;
    gnc::BasisPtr basis;
};

Inputs load_inputs(const std::string& data, const std::string& edges, bool standardize) {
    Inputs in;
    in.X = gnc::io::read_matrix_csv(data);
    in.net = gnc::io::load_network(edges, static_cast<std::size_t>(in.X.rows()));
    if (standardize) in.X = gnc::standardize_columns(in.X);
    const auto components = gnc::component_count(in.net);
    if (components > 1) {
        std::cerr << "warning: network is disconnected (" << components
                  << " components); effective dimension unavailable\n";
    }
    in.basis = gnc::make_basis(in.net);
    return in;
}

struct AlphaChoice {
    double alpha = 0.0;
    std::string method = "fixed";
    std::optional<gnc::TuningCurve> curve;
};

AlphaChoice choose_alpha(const Inputs& in, std::optional<double> alpha, bool use_gcv, const AlphaGridArgs& grid,
                         std::size_t folds, std::uint64_t seed) {
    AlphaChoice out;
    if (alpha) {
        gnc::detail::require(*alpha >= 0.0, "alpha must be nonnegative");
        out.alpha = *alpha;
        return out;
    }
    if (use_gcv) {
        out.curve = gnc::gcv_curve(in.X, in.basis, grid.grid());
        out.method = "gcv";
    } else {
        out.curve = gnc::cross_validate_alpha(in.X, in.net, *in.basis, grid.grid(), folds, seed);
        out.method = "cv";
    }
    out.alpha = out.curve->chosen_alpha;
    return out;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
    std::string data, edges, out = "model.json";
    std::optional<double> alpha, lambda;
    std::optional<std::size_t> target_edges;
    bool gcv = false, cv = false, no_standardize = false, record_time = false;
    std::size_t folds = 10;
    std::uint64_t seed = 1;
    std::string precision_out;
    AlphaGridArgs grid;
};

int run_fit(const FitArgs& a) {
    const auto start = Clock::now();
    gnc::detail::require(a.lambda.has_value() != a.target_edges.has_value(),
                         "give exactly one of --lambda or --target-edges");
    const Inputs in = load_inputs(a.data, a.edges, !a.no_standardize);
    const AlphaChoice ac = choose_alpha(in, a.alpha, a.gcv, a.grid, a.folds, a.seed);

    gnc::GncModel model;
    model.mean_fit = gnc::smooth_means(in.X, in.basis, ac.alpha);
    const Eigen::MatrixXd S = gnc::residual_covariance(in.X, model.mean_fit);
    if (a.lambda) {
        model.precision_fit = gnc::fit_glasso(S, *a.lambda);
        model.config.lambda_method = "fixed";
    } else {
        model.precision_fit = gnc::fit_glasso_target_edges(S, *a.target_edges);
        model.config.lambda_method = "target_edges";
    }
    model.config.alpha = ac.alpha;
    model.config.alpha_method = ac.method;
    model.config.lambda = model.precision_fit.lambda;
    if (model.precision_fit.diagnostics.repaired_input) {
        std::cerr << "warning: residual covariance was not PSD; negative eigenvalues clipped\n";
    }

    json config{{"alpha", ac.alpha}, {"alpha_method", ac.method}, {"lambda", model.config.lambda},
                {"lambda_method", model.config.lambda_method}, {"standardize", !a.no_standardize}};
    if (a.target_edges) config["target_edges"] = *a.target_edges;
    if (ac.curve) {
        config["alpha_curve"] = curve_to_json(*ac.curve);
        if (ac.method == "cv") {
            config["folds"] = a.folds;
            config["seed"] = a.seed;
        }
    }
    const auto net_hash = gnc::io::network_hash(in.net);
    gnc::io::write_file(a.out, gnc::io::dump(gnc::io::model_to_json(model, net_hash, config)));
    if (!a.precision_out.empty()) {
        gnc::io::write_file(a.precision_out, gnc::io::dump(gnc::io::precision_to_json(model.precision_fit)));
    }

    gnc::io::Manifest manifest;
    manifest.command = "fit";
    manifest.add_input(a.data);
    manifest.add_input(a.edges);
    manifest.config = config;
    manifest.config["network_hash"] = net_hash;
    finish_manifest(manifest, a.record_time, start);
    gnc::io::write_file(gnc::io::manifest_path_for(a.out), gnc::io::dump(manifest.to_json()));

    const auto& d = model.precision_fit.diagnostics;
    std::cout << "alpha " << gnc::io::format_double(ac.alpha) << " (" << ac.method << ")\n"
              << "lambda " << gnc::io::format_double(model.config.lambda) << "\n"
              << "support_size " << model.precision_fit.support.size() << "\n"
              << "glasso_iterations " << d.iterations << "\n"
              << "converged " << (d.converged ? "true" : "false") << "\n"
              << "kkt_residual " << gnc::io::format_double(d.kkt_residual) << "\n"
              << "objective " << gnc::io::format_double(d.objective) << "\n";
    if (!d.converged) std::cerr << "warning: glasso hit the sweep limit before converging\n";
    return kExitOk;
}

// ---------------------------------------------------------------- tune

struct TuneArgs {
    std::string data, edges, method = "gcv", out;
    bool no_standardize = false, record_time = false;
    std::size_t folds = 10;
    std::uint64_t seed = 1;
    AlphaGridArgs grid;
};

int run_tune(const TuneArgs& a) {
    const auto start = Clock::now();
    const Inputs in = load_inputs(a.data, a.edges, !a.no_standardize);
    const AlphaChoice ac = choose_alpha(in, std::nullopt, a.method == "gcv", a.grid, a.folds, a.seed);
    std::string csv = "alpha,score\n";
    for (std::size_t i = 0; i < ac.curve->alphas.size(); ++i) {
        csv += gnc::io::format_double(ac.curve->alphas[i]) + "," + gnc::io::format_double(ac.curve->scores[i]) + "\n";
    }
    if (a.out.empty()) {
        std::cout << csv;
    } else {
        gnc::io::write_file(a.out, csv);
        gnc::io::Manifest manifest;
        manifest.command = "tune";
        manifest.add_input(a.data);
        manifest.add_input(a.edges);
        manifest.config = json{{"method", ac.method}, {"curve", curve_to_json(*ac.curve)},
                               {"standardize", !a.no_standardize}};
        if (ac.method == "cv") {
            manifest.config["folds"] = a.folds;
            manifest.config["seed"] = a.seed;
        }
        finish_manifest(manifest, a.record_time, start);
        gnc::io::write_file(gnc::io::manifest_path_for(a.out), gnc::io::dump(manifest.to_json()));
    }
    std::cerr << "chosen alpha " << gnc::io::format_double(ac.alpha) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- simulate

struct SimArgs {
    gnc::SimConfig cfg;
    std::string edges, out_csv = "report.csv", out_json = "summary.json", dump_dir;
    std::size_t reps = 10;
    std::size_t threads = 0;
    bool iterative = false, record_time = false;
};

int run_simulate(const SimArgs& a) {
    const auto start = Clock::now();
    gnc::SimConfig cfg = a.cfg;
    gnc::detail::require(a.reps >= 1, "need at least one replicate");
    gnc::Network net;
    if (!a.edges.empty()) {
        net = gnc::io::load_network(a.edges, cfg.n);
    } else {
        const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(cfg.n))));
        if (side * side != cfg.n) {
            throw gnc::ValidationError("--n must be a perfect square for the default lattice; pass --edges otherwise");
        }
        net = gnc::lattice_network(side);
    }
    cfg.validate();
    const auto basis = gnc::make_basis(net);
    gnc::HarnessOptions opts;
    opts.include_iterative = a.iterative;
    const std::size_t threads = a.threads > 0 ? a.threads : std::max(1u, std::thread::hardware_concurrency());
    const auto results = gnc::run_simulation(net, basis, cfg, a.reps, opts, threads);

    std::string csv = "replicate,method,lambda,fpr,tpr\n";
    json reps = json::array();
    for (const auto& r : results) {
        json methods = json::object();
        for (const auto& m : r.methods) {
            for (const auto& pt : m.roc.path_points) {
                csv += std::to_string(r.replicate) + "," + m.method + "," + gnc::io::format_double(pt.lambda) + "," +
                       gnc::io::format_double(pt.fpr) + "," + gnc::io::format_double(pt.tpr) + "\n";
            }
            methods[m.method] = json{{"auc", m.roc.auc}, {"tuning", m.tuning}};
        }
        reps.push_back(json{{"replicate", r.replicate}, {"true_edges", r.true_edges}, {"methods", methods}});
    }
    json config{{"n", cfg.n},     {"p", cfg.p},         {"t", cfg.t},
                {"k", cfg.k},     {"snr", cfg.snr},     {"edge_prob", cfg.graph_edge_prob},
                {"seed", cfg.seed}, {"reps", a.reps},   {"iterative", a.iterative},
                {"network_hash", gnc::io::network_hash(net)}};
    json summary{{"config", config}, {"mean_auc", gnc::mean_auc(results)}, {"replicates", reps}};
    gnc::io::write_file(a.out_csv, csv);
    gnc::io::write_file(a.out_json, gnc::io::dump(summary));

    if (!a.dump_dir.empty()) {
        std::filesystem::create_directories(a.dump_dir);
        const auto data = gnc::simulate_replicate(*basis, cfg, 0);
        const std::filesystem::path dir(a.dump_dir);
        gnc::io::write_file((dir / "X.csv").string(), gnc::io::format_matrix_csv(data.X));
        gnc::io::write_file((dir / "edges.txt").string(), gnc::io::format_edge_list(net));
        gnc::io::write_file((dir / "truth_precision.json").string(),
                            gnc::io::dump(gnc::io::theta_to_json(data.precision.Theta)));
    }

    gnc::io::Manifest manifest;
    manifest.command = "simulate";
    if (!a.edges.empty()) manifest.add_input(a.edges);
    manifest.config = config;
    manifest.config["outputs"] = json::array({a.out_csv, a.out_json});
    finish_manifest(manifest, a.record_time, start);
    gnc::io::write_file(gnc::io::manifest_path_for(a.out_json), gnc::io::dump(manifest.to_json()));

    for (const auto& [name, auc] : gnc::mean_auc(results)) {
        std::cout << name << " " << gnc::io::format_double(auc) << "\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------- roc

struct RocArgs {
    std::string data, edges, truth, method = "gnc", out_csv;
    std::optional<double> alpha;
    bool cv = false, no_standardize = false, record_time = false;
    std::size_t folds = 10, clusters = 3, lambda_count = 30;
    double lambda_ratio = 0.01;
    std::uint64_t seed = 1;
    AlphaGridArgs grid;
};

int run_roc(const RocArgs& a) {
    const auto start = Clock::now();
    const Inputs in = load_inputs(a.data, a.edges, !a.no_standardize);
    const Eigen::MatrixXd truth_theta = gnc::io::read_precision_json(a.truth);
    gnc::detail::require(truth_theta.rows() == in.X.cols(), "truth precision must be p x p");
    const auto truth = gnc::support_mask(truth_theta);

    Eigen::MatrixXd M;
    json config{{"method", a.method}, {"lambda_count", a.lambda_count}, {"lambda_ratio", a.lambda_ratio},
                {"standardize", !a.no_standardize}};
    if (a.method == "glasso") {
        M = in.X.colwise().mean().replicate(in.X.rows(), 1);
    } else if (a.method == "cluster") {
        M = gnc::cluster_mean_matrix(in.X, gnc::kmeans(in.X, a.clusters, a.seed));
        config["clusters"] = a.clusters;
        config["seed"] = a.seed;
    } else if (a.method == "gnc") {
        const AlphaChoice ac = choose_alpha(in, a.alpha, !a.cv, a.grid, a.folds, a.seed);
        M = gnc::smooth_means(in.X, in.basis, ac.alpha).M_hat;
        config["alpha"] = ac.alpha;
        config["alpha_method"] = ac.method;
        if (ac.curve) config["alpha_curve"] = curve_to_json(*ac.curve);
        if (ac.method == "cv") config["seed"] = a.seed;
    } else {
        throw gnc::ValidationError("unknown method '" + a.method + "' (glasso, cluster, gnc)");
    }
    const Eigen::MatrixXd S = gnc::residual_covariance(in.X, M);
    const auto lambdas = gnc::lambda_path_grid(S, a.lambda_count, a.lambda_ratio);
    const auto roc = gnc::roc_curve(gnc::glasso_path(S, lambdas), truth);

    std::string csv = "lambda,fpr,tpr\n";
    for (const auto& pt : roc.path_points) {
        csv += gnc::io::format_double(pt.lambda) + "," + gnc::io::format_double(pt.fpr) + "," +
               gnc::io::format_double(pt.tpr) + "\n";
    }
    if (a.out_csv.empty()) {
        std::cout << csv;
    } else {
        gnc::io::write_file(a.out_csv, csv);
        gnc::io::Manifest manifest;
        manifest.command = "roc";
        manifest.add_input(a.data);
        manifest.add_input(a.edges);
        manifest.add_input(a.truth);
        manifest.config = config;
        manifest.config["auc"] = roc.auc;
        finish_manifest(manifest, a.record_time, start);
        gnc::io::write_file(gnc::io::manifest_path_for(a.out_csv), gnc::io::dump(manifest.to_json()));
    }
    std::cerr << "auc " << gnc::io::format_double(roc.auc) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- diagnose

struct DiagnoseArgs {
    std::string edges, json_out;
    std::size_t n = 0;
};

int run_diagnose(const DiagnoseArgs& a) {
    const auto net = gnc::io::load_network(a.edges, a.n);
    const auto components = gnc::component_count(net);
    if (components > 1) {
        throw gnc::ValidationError("disconnected (" + std::to_string(components) + " components)");
    }
    const auto basis = gnc::eigendecompose(net);
    const auto m_a = gnc::effective_dimension(basis);
    const auto n = basis.size();

    std::cout << "nodes " << n << "\n"
              << "edges " << net.edge_count() << "\n"
              << "algebraic_connectivity " << gnc::io::format_double(basis.algebraic_connectivity()) << "\n"
              << "effective_dimension " << m_a << "\n"
              << "m,tau,inv_sqrt_m\n";
    json series = json::array();
    for (std::size_t m = 1; m < n; ++m) {
        // (m+1)-th smallest eigenvalue.
        const double tau = basis.tau(static_cast<Eigen::Index>(n - 1 - m));
        const double bound = 1.0 / std::sqrt(static_cast<double>(m));
        std::cout << m << "," << gnc::io::format_double(tau) << "," << gnc::io::format_double(bound) << "\n";
        series.push_back(json::array({m, tau}));
    }
    if (!a.json_out.empty()) {
        json report{{"nodes", n},
                    {"edges", net.edge_count()},
                    {"algebraic_connectivity", basis.algebraic_connectivity()},
                    {"effective_dimension", m_a},
                    {"series", series},
                    {"network_hash", gnc::io::network_hash(net)}};
        gnc::io::write_file(a.json_out, gnc::io::dump(report));
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Network-cohesive graphical lasso: smoothing, precision estimation, simulation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", gnc::io::kToolVersion);

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "Fit means and a sparse precision matrix");
    fit_cmd->add_option("--data", fit.data, "Data CSV (n rows, p columns)")->required();
    fit_cmd->add_option("--edges", fit.edges, "Edge list over the n rows")->required();
    auto* alpha_opt = fit_cmd->add_option("--alpha", fit.alpha, "Smoothing strength");
    auto* gcv_flag = fit_cmd->add_flag("--gcv", fit.gcv, "Tune alpha by GCV");
    auto* cv_flag = fit_cmd->add_flag("--cv", fit.cv, "Tune alpha by cross-validation (default)");
    alpha_opt->excludes(gcv_flag)->excludes(cv_flag);
    gcv_flag->excludes(cv_flag);
    fit_cmd->add_option("--lambda", fit.lambda, "Glasso penalty");
    fit_cmd->add_option("--target-edges", fit.target_edges, "Choose lambda to hit this support size");
    fit_cmd->add_option("--folds", fit.folds, "Cross-validation folds")->capture_default_str();
    fit_cmd->add_option("--seed", fit.seed, "Seed for fold assignment")->capture_default_str();
    fit_cmd->add_flag("--no-standardize", fit.no_standardize, "Skip column standardization");
    fit_cmd->add_option("--out", fit.out, "Model JSON path")->capture_default_str();
    fit_cmd->add_option("--precision-out", fit.precision_out, "Also write the precision JSON here");
    fit_cmd->add_flag("--record-time", fit.record_time, "Add wall-clock time to the manifest");
    add_grid_options(fit_cmd, fit.grid);

    TuneArgs tune;
    auto* tune_cmd = app.add_subcommand("tune", "Print the alpha tuning curve");
    tune_cmd->add_option("--data", tune.data, "Data CSV")->required();
    tune_cmd->add_option("--edges", tune.edges, "Edge list")->required();
    tune_cmd->add_option("--method", tune.method, "gcv or cv")
        ->check(CLI::IsMember({"gcv", "cv"}))
        ->capture_default_str();
    tune_cmd->add_option("--folds", tune.folds, "Cross-validation folds")->capture_default_str();
    tune_cmd->add_option("--seed", tune.seed, "Seed for fold assignment")->capture_default_str();
    tune_cmd->add_flag("--no-standardize", tune.no_standardize, "Skip column standardization");
    tune_cmd->add_option("--out", tune.out, "Curve CSV path (stdout if absent)");
    tune_cmd->add_flag("--record-time", tune.record_time, "Add wall-clock time to the manifest");
    add_grid_options(tune_cmd, tune.grid);

    SimArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Run the ROC simulation harness");
    sim_cmd->add_option("--n", sim.cfg.n, "Nodes (a perfect square unless --edges is given)")->capture_default_str();
    sim_cmd->add_option("--edges", sim.edges, "Network edge list instead of a lattice");
    sim_cmd->add_option("--p", sim.cfg.p, "Variables")->capture_default_str();
    sim_cmd->add_option("--t", sim.cfg.t, "Weight of the network component in the means")->capture_default_str();
    sim_cmd->add_option("--k", sim.cfg.k, "Eigenvector pool size")->capture_default_str();
    sim_cmd->add_option("--snr", sim.cfg.snr, "Signal-to-noise ratio")->capture_default_str();
    sim_cmd->add_option("--edge-prob", sim.cfg.graph_edge_prob, "Dependence graph edge probability")
        ->capture_default_str();
    sim_cmd->add_option("--reps", sim.reps, "Replicates")->capture_default_str();
    sim_cmd->add_option("--seed", sim.cfg.seed, "Master seed")->capture_default_str();
    sim_cmd->add_option("--threads", sim.threads, "Worker threads (0 = logical cores)")->capture_default_str();
    sim_cmd->add_flag("--iterative", sim.iterative, "Also run the iterative joint estimator");
    sim_cmd->add_option("--out-csv", sim.out_csv, "Report CSV")->capture_default_str();
    sim_cmd->add_option("--out-json", sim.out_json, "Summary JSON")->capture_default_str();
    sim_cmd->add_option("--dump-dir", sim.dump_dir, "Write replicate 0 data, edges and true precision here");
    sim_cmd->add_flag("--record-time", sim.record_time, "Add wall-clock time to the manifest");

    RocArgs roc;
    auto* roc_cmd = app.add_subcommand("roc", "ROC path against a known precision matrix");
    roc_cmd->add_option("--data", roc.data, "Data CSV")->required();
    roc_cmd->add_option("--edges", roc.edges, "Edge list")->required();
    roc_cmd->add_option("--truth", roc.truth, "True precision JSON")->required();
    roc_cmd->add_option("--method", roc.method, "glasso, cluster or gnc")
        ->check(CLI::IsMember({"glasso", "cluster", "gnc"}))
        ->capture_default_str();
    auto* roc_alpha = roc_cmd->add_option("--alpha", roc.alpha, "Smoothing strength (GCV-tuned if absent)");
    auto* roc_cv = roc_cmd->add_flag("--cv", roc.cv, "Tune alpha by cross-validation instead of GCV");
    roc_alpha->excludes(roc_cv);
    roc_cmd->add_option("--clusters", roc.clusters, "K-means clusters for the cluster method")->capture_default_str();
    roc_cmd->add_option("--folds", roc.folds, "Cross-validation folds")->capture_default_str();
    roc_cmd->add_option("--seed", roc.seed, "Seed")->capture_default_str();
    roc_cmd->add_option("--lambda-count", roc.lambda_count, "Path length")->capture_default_str();
    roc_cmd->add_option("--lambda-ratio", roc.lambda_ratio, "Smallest lambda over lambda_max")->capture_default_str();
    roc_cmd->add_flag("--no-standardize", roc.no_standardize, "Skip column standardization");
    roc_cmd->add_option("--out-csv", roc.out_csv, "ROC CSV path (stdout if absent)");
    roc_cmd->add_flag("--record-time", roc.record_time, "Add wall-clock time to the manifest");
    add_grid_options(roc_cmd, roc.grid);

    DiagnoseArgs diag;
    auto* diag_cmd = app.add_subcommand("diagnose", "Spectrum and effective dimension of a network");
    diag_cmd->add_option("--edges", diag.edges, "Edge list")->required();
    diag_cmd->add_option("--n", diag.n, "Node count (default: largest index + 1)");
    diag_cmd->add_option("--json", diag.json_out, "Also write a JSON report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (*fit_cmd) return run_fit(fit);
        if (*tune_cmd) return run_tune(tune);
        if (*sim_cmd) return run_simulate(sim);
        if (*roc_cmd) return run_roc(roc);
        if (*diag_cmd) return run_diagnose(diag);
    } catch (const gnc::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const gnc::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitValidation;
}
