#pragma once

#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include <gnc/error.hpp>

namespace gnc {

struct KMeansResult {
    std::vector<Eigen::Index> labels;
    Eigen::MatrixXd centroids;  // k x p
    double inertia = std::numeric_limits<double>::infinity();
};

struct KMeansOptions {
    std::size_t restarts = 10;
    std::size_t max_iter = 100;
    // Re-initializations allowed per restart when a cluster empties.
    std::size_t reseed_cap = 10;
};

namespace detail {

// One Lloyd run from k distinct random rows. Returns false if a cluster
// became empty.
inline bool lloyd_run(const Eigen::MatrixXd& X, std::size_t k, std::mt19937_64& rng, std::size_t max_iter,
                      KMeansResult& out) {
    const auto n = static_cast<std::size_t>(X.rows());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    const auto K = static_cast<Eigen::Index>(k);
    Eigen::MatrixXd C(K, X.cols());
    for (Eigen::Index c = 0; c < K; ++c) C.row(c) = X.row(static_cast<Eigen::Index>(order[static_cast<std::size_t>(c)]));

    std::vector<Eigen::Index> labels(n, -1);
    for (std::size_t it = 0; it < max_iter; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::Index best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (Eigen::Index c = 0; c < K; ++c) {
                const double d = (X.row(static_cast<Eigen::Index>(i)) - C.row(c)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (labels[i] != best) {
                labels[i] = best;
                changed = true;
            }
        }
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, X.cols());
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sums.row(labels[i]) += X.row(static_cast<Eigen::Index>(i));
            ++counts[static_cast<std::size_t>(labels[i])];
        }
        for (Eigen::Index c = 0; c < K; ++c) {
            if (counts[static_cast<std::size_t>(c)] == 0) return false;
            C.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        }
        if (!changed && it > 0) break;
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        inertia += (X.row(static_cast<Eigen::Index>(i)) - C.row(labels[i])).squaredNorm();
    out.labels = std::move(labels);
    out.centroids = std::move(C);
    out.inertia = inertia;
    return true;
}

} // namespace detail

/// Seeded Lloyd's algorithm with squared Euclidean distance; best of
/// `restarts` random initializations by inertia.
inline KMeansResult kmeans(const Eigen::MatrixXd& X, std::size_t k, std::uint64_t seed,
                           const KMeansOptions& opts = {}) {
    detail::require(X.rows() > 0, "k-means on empty data");
    detail::require(k >= 1 && k <= static_cast<std::size_t>(X.rows()), "cluster count must be in [1, n]");
    std::mt19937_64 rng(seed);
    KMeansResult best;
    for (std::size_t r = 0; r < opts.restarts; ++r) {
        KMeansResult trial;
        bool ok = false;
        for (std::size_t attempt = 0; attempt <= opts.reseed_cap && !ok; ++attempt) {
            ok = detail::lloyd_run(X, k, rng, opts.max_iter, trial);
        }
        if (!ok) throw NumericalError("k-means kept producing an empty cluster");
        if (trial.inertia < best.inertia) best = std::move(trial);
    }
    return best;
}

} // namespace gnc
