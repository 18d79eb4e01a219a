#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include <gnc/error.hpp>
#include <gnc/glasso.hpp>
#include <gnc/graph.hpp>
#include <gnc/smoother.hpp>

namespace gnc {

struct SimConfig {
    std::size_t n = 100;
    std::size_t p = 50;
    double graph_edge_prob = 0.01;
    double t = 0.5;
    std::size_t k = 6;
    double snr = 1.6;
    std::uint64_t seed = 1;

    void validate() const {
        detail::require(n >= 2 && p >= 2, "n and p must be at least 2");
        detail::require(graph_edge_prob >= 0.0 && graph_edge_prob <= 1.0, "edge probability must be in [0, 1]");
        detail::require(t >= 0.0 && t <= 1.0, "mixing proportion t must be in [0, 1]");
        detail::require(k >= 1, "eigenvector pool size k must be at least 1");
        detail::require(snr > 0.0, "snr must be positive");
    }
};

/// Boolean p x p mask of the true off-diagonal support.
using SupportMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct SimulatedPrecision {
    Eigen::MatrixXd Theta;
    Eigen::MatrixXd Sigma;
    Eigen::MatrixXd adjacency;
    SupportMask support;
};

inline SupportMask support_mask(const Eigen::MatrixXd& Theta, double threshold = kSupportThreshold) {
    SupportMask mask = (Theta.array().abs() > threshold).matrix();
    mask.diagonal().setConstant(false);
    return mask;
}

/// Erdos-Renyi dependence graph G, Theta0 = 0.3 A_G + (0.3 e_G + 0.1) I with
/// e_G = |lambda_min(A_G)|, then rescaled so Sigma = Theta^{-1} is a
/// correlation matrix: Theta = D^{1/2} Theta0 D^{1/2}, D = diag(Theta0^{-1}).
inline SimulatedPrecision simulate_precision(std::size_t p, double edge_prob, std::uint64_t seed) {
    detail::require(p >= 2, "p must be at least 2");
    detail::require(edge_prob >= 0.0 && edge_prob <= 1.0, "edge probability must be in [0, 1]");
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(edge_prob);
    const auto P = static_cast<Eigen::Index>(p);
    SimulatedPrecision out;
    out.adjacency = Eigen::MatrixXd::Zero(P, P);
    for (Eigen::Index i = 0; i < P; ++i)
        for (Eigen::Index j = i + 1; j < P; ++j)
            if (coin(rng)) out.adjacency(i, j) = out.adjacency(j, i) = 1.0;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.adjacency, Eigen::EigenvaluesOnly);
    const double e_g = std::abs(es.eigenvalues().minCoeff());
    const Eigen::MatrixXd theta0 =
        0.3 * out.adjacency + (0.3 * e_g + 0.1) * Eigen::MatrixXd::Identity(P, P);

    Eigen::LLT<Eigen::MatrixXd> llt(theta0);
    if (llt.info() != Eigen::Success) throw NumericalError("base precision matrix is not positive definite");
    const Eigen::MatrixXd sigma0 = llt.solve(Eigen::MatrixXd::Identity(P, P));
    const Eigen::VectorXd root = sigma0.diagonal().cwiseSqrt();

    out.Theta = root.asDiagonal() * theta0 * root.asDiagonal();
    out.Sigma = root.cwiseInverse().asDiagonal() * sigma0 * root.cwiseInverse().asDiagonal();
    out.Sigma = 0.5 * (out.Sigma + out.Sigma.transpose());
    out.support = support_mask(out.Theta);
    if ((out.Sigma.diagonal().array() - 1.0).abs().maxCoeff() > 1e-10) {
        throw NumericalError("simulated covariance failed to reach unit diagonal");
    }
    return out;
}

/// Cohesive means: column j = sqrt(t) sqrt(n) u^{(j)} + sqrt(1 - t) 1, with
/// u^{(j)} drawn with replacement from the k eigenvectors of the smallest
/// positive eigenvalues. M is then scaled so that
/// (||M||_F^2 / (n p)) / (tr(Sigma) / p) = snr.
inline Eigen::MatrixXd simulate_means(const SpectralBasis& basis, std::size_t p, std::size_t k, double t, double snr,
                                      const Eigen::MatrixXd& Sigma, std::uint64_t seed) {
    const std::size_t n = basis.size();
    detail::require(basis.connected(), "cohesive means need a connected network");
    detail::require(k >= 1, "k must be at least 1");
    if (k > n - 1) throw ValidationError("k exceeds the number of nonconstant eigenvectors");
    detail::require(t >= 0.0 && t <= 1.0, "t must be in [0, 1]");
    detail::require(snr > 0.0, "snr must be positive");
    detail::require(Sigma.rows() == static_cast<Eigen::Index>(p) && Sigma.cols() == Sigma.rows(),
                    "Sigma must be p x p");

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(1, k);
    const auto N = static_cast<Eigen::Index>(n);
    const double a = std::sqrt(t) * std::sqrt(static_cast<double>(n));
    const double b = std::sqrt(1.0 - t);
    Eigen::MatrixXd M(N, static_cast<Eigen::Index>(p));
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
        // m-th smallest positive eigenvalue sits at descending index n-1-m.
        const auto col = static_cast<Eigen::Index>(n - 1 - pick(rng));
        M.col(j) = a * basis.U.col(col) + Eigen::VectorXd::Constant(N, b);
    }
    const double signal = M.squaredNorm() / (static_cast<double>(n) * static_cast<double>(p));
    const double noise = Sigma.trace() / static_cast<double>(p);
    M *= std::sqrt(snr * noise / signal);
    return M;
}

/// Rows X_i = M_i + z_i L^T with Sigma = L L^T and z_i standard normal.
inline Eigen::MatrixXd sample_data(const Eigen::MatrixXd& M, const Eigen::MatrixXd& Sigma, std::uint64_t seed) {
    detail::require(Sigma.rows() == M.cols() && Sigma.cols() == M.cols(), "Sigma must be p x p");
    Eigen::LLT<Eigen::MatrixXd> llt(Sigma);
    if (llt.info() != Eigen::Success) throw ValidationError("Sigma is not positive definite");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd Z(M.rows(), M.cols());
    for (Eigen::Index i = 0; i < Z.rows(); ++i)
        for (Eigen::Index j = 0; j < Z.cols(); ++j) Z(i, j) = normal(rng);
    const Eigen::MatrixXd L = llt.matrixL();
    return M + Z * L.transpose();
}

struct RocPoint {
    double lambda = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    // One point per fit in path order.
    std::vector<RocPoint> path_points;
    // Same points sorted by (fpr, tpr).
    std::vector<RocPoint> points;
    double auc = 0.0;
};

struct RatePair {
    double fpr = 0.0;
    double tpr = 0.0;
};

/// TPR and FPR of an estimated support over unordered off-diagonal pairs.
inline RatePair support_rates(const SupportMask& estimate, const SupportMask& truth) {
    detail::require(estimate.rows() == truth.rows() && estimate.cols() == truth.cols(), "support sizes differ");
    const auto p = truth.rows();
    std::size_t pos = 0, neg = 0, tp = 0, fp = 0;
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = i + 1; j < p; ++j) {
            if (truth(i, j)) {
                ++pos;
                if (estimate(i, j)) ++tp;
            } else {
                ++neg;
                if (estimate(i, j)) ++fp;
            }
        }
    }
    if (pos == 0) throw ValidationError("true support is empty; TPR undefined");
    if (neg == 0) throw ValidationError("true support is complete; FPR undefined");
    return {static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos)};
}

/// Trapezoid area under sorted points anchored at (0,0) and (1,1).
inline double trapezoid_auc(std::vector<RocPoint> points) {
    std::sort(points.begin(), points.end(), [](const RocPoint& a, const RocPoint& b) {
        return a.fpr < b.fpr || (a.fpr == b.fpr && a.tpr < b.tpr);
    });
    double area = 0.0;
    double x = 0.0, y = 0.0;
    for (const auto& pt : points) {
        area += (pt.fpr - x) * (pt.tpr + y) * 0.5;
        x = pt.fpr;
        y = pt.tpr;
    }
    area += (1.0 - x) * (1.0 + y) * 0.5;
    return area;
}

inline RocCurve roc_curve(const std::vector<SupportMask>& estimates, const std::vector<double>& lambdas,
                          const SupportMask& truth) {
    detail::require(!estimates.empty(), "ROC needs a nonempty path");
    detail::require(estimates.size() == lambdas.size(), "one lambda per estimate");
    RocCurve roc;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        const auto r = support_rates(estimates[i], truth);
        roc.path_points.push_back({lambdas[i], r.fpr, r.tpr});
    }
    roc.points = roc.path_points;
    std::sort(roc.points.begin(), roc.points.end(), [](const RocPoint& a, const RocPoint& b) {
        return a.fpr < b.fpr || (a.fpr == b.fpr && a.tpr < b.tpr);
    });
    roc.auc = trapezoid_auc(roc.points);
    return roc;
}

inline RocCurve roc_curve(const std::vector<PrecisionFit>& path, const SupportMask& truth) {
    std::vector<SupportMask> estimates;
    std::vector<double> lambdas;
    for (const auto& fit : path) {
        detail::require(fit.Theta.rows() == truth.rows(), "estimate and truth dimensions differ");
        estimates.push_back(support_mask(fit.Theta));
        lambdas.push_back(fit.lambda);
    }
    return roc_curve(estimates, lambdas, truth);
}

/// count points log-spaced from lambda_max(S) down to lambda_max(S) * ratio.
inline std::vector<double> lambda_path_grid(const Eigen::MatrixXd& S, std::size_t count = 30, double ratio = 0.01) {
    const double top = lambda_max(S);
    if (!(top > 0.0)) throw NumericalError("S has no off-diagonal signal; lambda path undefined");
    return log_grid(top * ratio, top, count, /*ascending=*/false);
}

} // namespace gnc
