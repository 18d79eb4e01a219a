#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include <gnc/glasso.hpp>
#include <gnc/graph.hpp>
#include <gnc/kmeans.hpp>
#include <gnc/pipeline.hpp>
#include <gnc/sim.hpp>
#include <gnc/smoother.hpp>

namespace gnc {

inline const std::string kMethodGlasso = "glasso";
inline const std::string kMethodCluster = "cluster_glasso_oracle";
inline const std::string kMethodGncCv = "gnc_cv";
inline const std::string kMethodGncOracle = "gnc_oracle";
inline const std::string kMethodIterative = "gnc_iterative_oracle";

struct HarnessOptions {
    std::size_t lambda_count = 30;
    double lambda_ratio = 0.01;
    std::vector<double> oracle_alphas = log_grid(1e-2, 1e4, 13);
    std::vector<double> cv_alphas = default_alpha_grid();
    std::size_t folds = 10;
    std::size_t max_clusters = 10;
    bool include_iterative = false;
    JointOptions joint{20, 1e-6, {}, true};
    GlassoOptions glasso;
};

struct MethodOutcome {
    std::string method;
    RocCurve roc;
    // Chosen alpha for GNC variants, chosen k for cluster+glasso, 0 otherwise.
    double tuning = 0.0;
};

struct ReplicateOutcome {
    std::size_t replicate = 0;
    std::size_t true_edges = 0;
    std::vector<MethodOutcome> methods;

    const MethodOutcome& get(const std::string& name) const {
        for (const auto& m : methods)
            if (m.method == name) return m;
        throw ValidationError("method " + name + " not present in replicate");
    }
};

/// Independent stream per (seed, replicate, purpose); schedule independent.
inline std::uint64_t derive_seed(std::uint64_t seed, std::size_t replicate, std::uint32_t purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(replicate), purpose};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

struct SimulatedReplicate {
    SimulatedPrecision precision;
    Eigen::MatrixXd M;
    Eigen::MatrixXd X;
};

/// Draws one dataset. The dependence graph is redrawn (new stream) until
/// its support is neither empty nor complete, so ROC rates are defined.
inline SimulatedReplicate simulate_replicate(const SpectralBasis& basis, const SimConfig& cfg, std::size_t rep) {
    cfg.validate();
    detail::require(basis.size() == cfg.n, "network size must equal n");
    SimulatedReplicate out;
    for (std::uint32_t attempt = 0;; ++attempt) {
        detail::require(attempt < 1000, "could not draw a dependence graph with nontrivial support");
        out.precision = simulate_precision(cfg.p, cfg.graph_edge_prob, derive_seed(cfg.seed, rep, 100 + attempt));
        const auto edges = out.precision.support.count() / 2;
        const auto pairs = cfg.p * (cfg.p - 1) / 2;
        if (edges > 0 && static_cast<std::size_t>(edges) < pairs) break;
    }
    out.M = simulate_means(basis, cfg.p, cfg.k, cfg.t, cfg.snr, out.precision.Sigma, derive_seed(cfg.seed, rep, 2));
    out.X = sample_data(out.M, out.precision.Sigma, derive_seed(cfg.seed, rep, 3));
    return out;
}

inline RocCurve roc_for_covariance(const Eigen::MatrixXd& S, const SupportMask& truth, const HarnessOptions& opts) {
    const auto lambdas = lambda_path_grid(S, opts.lambda_count, opts.lambda_ratio);
    return roc_curve(glasso_path(S, lambdas, opts.glasso), truth);
}

inline MethodOutcome run_glasso_baseline(const Eigen::MatrixXd& X, const SupportMask& truth,
                                         const HarnessOptions& opts) {
    const Eigen::MatrixXd centered = X.rowwise() - X.colwise().mean();
    return {kMethodGlasso, roc_for_covariance(residual_covariance(X, X - centered), truth, opts), 0.0};
}

/// Best AUC over k = 1..max_clusters (not available in practice).
inline MethodOutcome run_cluster_oracle(const Eigen::MatrixXd& X, const SupportMask& truth, const HarnessOptions& opts,
                                        std::uint64_t seed) {
    MethodOutcome best{kMethodCluster, {}, 0.0};
    best.roc.auc = -1.0;
    const std::size_t kmax = std::min<std::size_t>(opts.max_clusters, static_cast<std::size_t>(X.rows()) - 1);
    for (std::size_t k = 1; k <= kmax; ++k) {
        const auto km = kmeans(X, k, seed + k);
        const auto roc = roc_for_covariance(residual_covariance(X, cluster_mean_matrix(X, km)), truth, opts);
        if (roc.auc > best.roc.auc) {
            best.roc = roc;
            best.tuning = static_cast<double>(k);
        }
    }
    return best;
}

inline MethodOutcome run_gnc_oracle(const Eigen::MatrixXd& X, const BasisPtr& basis, const SupportMask& truth,
                                    const HarnessOptions& opts) {
    MethodOutcome best{kMethodGncOracle, {}, 0.0};
    best.roc.auc = -1.0;
    for (double alpha : opts.oracle_alphas) {
        const auto roc = roc_for_covariance(residual_covariance(X, smooth_means(X, basis, alpha)), truth, opts);
        if (roc.auc > best.roc.auc) {
            best.roc = roc;
            best.tuning = alpha;
        }
    }
    return best;
}

inline MethodOutcome run_gnc_cv(const Eigen::MatrixXd& X, const Network& net, const BasisPtr& basis,
                                const SupportMask& truth, const HarnessOptions& opts, std::uint64_t seed) {
    const auto curve = cross_validate_alpha(X, net, *basis, opts.cv_alphas, opts.folds, seed);
    const auto S = residual_covariance(X, smooth_means(X, basis, curve.chosen_alpha));
    return {kMethodGncCv, roc_for_covariance(S, truth, opts), curve.chosen_alpha};
}

/// Iterative joint estimator, oracle-tuned over alpha. For each alpha the
/// lambda grid is the two-stage one so both estimators share a path.
inline MethodOutcome run_iterative_oracle(const Eigen::MatrixXd& X, const BasisPtr& basis, const SupportMask& truth,
                                          const HarnessOptions& opts) {
    MethodOutcome best{kMethodIterative, {}, 0.0};
    best.roc.auc = -1.0;
    for (double alpha : opts.oracle_alphas) {
        const auto S = residual_covariance(X, smooth_means(X, basis, alpha));
        const auto lambdas = lambda_path_grid(S, opts.lambda_count, opts.lambda_ratio);
        std::vector<PrecisionFit> fits;
        fits.reserve(lambdas.size());
        for (double lam : lambdas) fits.push_back(fit_iterative_joint(X, basis, alpha, lam, opts.joint).precision_fit);
        const auto roc = roc_curve(fits, truth);
        if (roc.auc > best.roc.auc) {
            best.roc = roc;
            best.tuning = alpha;
        }
    }
    return best;
}

inline ReplicateOutcome run_replicate(const Network& net, const BasisPtr& basis, const SimConfig& cfg,
                                      std::size_t rep, const HarnessOptions& opts) {
    const auto data = simulate_replicate(*basis, cfg, rep);
    const auto& truth = data.precision.support;
    ReplicateOutcome out;
    out.replicate = rep;
    out.true_edges = static_cast<std::size_t>(truth.count() / 2);
    out.methods.push_back(run_glasso_baseline(data.X, truth, opts));
    out.methods.push_back(run_cluster_oracle(data.X, truth, opts, derive_seed(cfg.seed, rep, 4)));
    out.methods.push_back(run_gnc_cv(data.X, net, basis, truth, opts, derive_seed(cfg.seed, rep, 5)));
    out.methods.push_back(run_gnc_oracle(data.X, basis, truth, opts));
    if (opts.include_iterative) out.methods.push_back(run_iterative_oracle(data.X, basis, truth, opts));
    return out;
}

/// Runs replicates 0..reps-1 on up to `threads` workers. Output order and
/// content do not depend on the thread count.
inline std::vector<ReplicateOutcome> run_simulation(const Network& net, const BasisPtr& basis, const SimConfig& cfg,
                                                    std::size_t reps, const HarnessOptions& opts,
                                                    std::size_t threads = 1) {
    cfg.validate();
    std::vector<ReplicateOutcome> results(reps);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
        for (std::size_t r = next++; r < reps; r = next++) {
            try {
                results[r] = run_replicate(net, basis, cfg, r, opts);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, reps));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

/// Mean AUC per method, keyed by method name.
inline std::map<std::string, double> mean_auc(const std::vector<ReplicateOutcome>& results) {
    std::map<std::string, double> sums;
    std::map<std::string, std::size_t> counts;
    for (const auto& rep : results) {
        for (const auto& m : rep.methods) {
            sums[m.method] += m.roc.auc;
            ++counts[m.method];
        }
    }
    for (auto& [name, total] : sums) total /= static_cast<double>(counts[name]);
    return sums;
}

} // namespace gnc
