#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include <gnc/error.hpp>
#include <gnc/glasso.hpp>
#include <gnc/graph.hpp>
#include <gnc/kmeans.hpp>
#include <gnc/smoother.hpp>

namespace gnc {

struct GncConfig {
    double alpha = 0.0;
    double lambda = 0.0;
    std::string alpha_method = "fixed";
    std::string lambda_method = "fixed";
};

struct JointDiagnostics {
    std::size_t outer_iterations = 0;
    bool converged = false;
    // The precision step failed (degenerate or non positive definite
    // iterate); the model holds the last valid iterate.
    bool diverged = false;
    std::vector<double> objective_history;
};

struct GncModel {
    MeanFit mean_fit;
    PrecisionFit precision_fit;
    GncConfig config;
    // Filled only by the iterative joint estimator.
    JointDiagnostics joint;
};

namespace detail {

inline void require_spd(const Eigen::MatrixXd& Theta, const char* what) {
    require(Theta.rows() == Theta.cols(), std::string(what) + " must be square");
    const double scale = std::max(1.0, Theta.cwiseAbs().maxCoeff());
    require((Theta - Theta.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale,
            std::string(what) + " must be symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(Theta);
    if (llt.info() != Eigen::Success) throw ValidationError(std::string(what) + " is not positive definite");
}

inline bool is_diagonal(const Eigen::MatrixXd& A) {
    for (Eigen::Index j = 0; j < A.cols(); ++j)
        for (Eigen::Index i = 0; i < A.rows(); ++i)
            if (i != j && A(i, j) != 0.0) return false;
    return true;
}

} // namespace detail

/// Solves Y Theta + alpha diag(tau) Y = rhs for n x p Y, with Theta SPD.
/// Theta = Q D Q^T turns this into independent scalar equations
/// (Y Q)_ij (d_j + alpha tau_i) = (rhs Q)_ij.
inline Eigen::MatrixXd solve_coefficient_sylvester(const Eigen::MatrixXd& Theta, const Eigen::VectorXd& tau,
                                                   double alpha, const Eigen::MatrixXd& rhs) {
    detail::require(rhs.rows() == tau.size() && rhs.cols() == Theta.rows(), "Sylvester system shape mismatch");
    const auto n = rhs.rows();
    const auto p = rhs.cols();
    if (detail::is_diagonal(Theta)) {
        Eigen::MatrixXd Y(n, p);
        for (Eigen::Index j = 0; j < p; ++j)
            for (Eigen::Index i = 0; i < n; ++i) Y(i, j) = rhs(i, j) / (Theta(j, j) + alpha * tau(i));
        return Y;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Theta);
    if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed on Theta");
    const Eigen::VectorXd& d = es.eigenvalues();
    if (d.minCoeff() <= 0.0) throw NumericalError("Theta lost positive definiteness");
    const Eigen::MatrixXd& Q = es.eigenvectors();
    Eigen::MatrixXd Y = rhs * Q;
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index i = 0; i < n; ++i) Y(i, j) /= d(j) + alpha * tau(i);
    return Y * Q.transpose();
}

/// Relative residual ||Y Theta + alpha diag(tau) Y - rhs||_F / ||rhs||_F,
/// evaluated directly without any factorization.
inline double sylvester_residual(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Theta, const Eigen::VectorXd& tau,
                                 double alpha, const Eigen::MatrixXd& rhs) {
    const Eigen::MatrixXd lhs = Y * Theta + alpha * (tau.asDiagonal() * Y);
    const double denom = std::max(rhs.norm(), std::numeric_limits<double>::min());
    return (lhs - rhs).norm() / denom;
}

/// Mean step of the joint objective for fixed Theta:
///   min_B tr(Theta (X - U B)^T (X - U B)) + alpha tr(B^T Lambda B),
/// i.e. B Theta + alpha Lambda B = U^T X Theta.
inline MeanFit joint_mean_step(const Eigen::MatrixXd& X, const BasisPtr& basis, double alpha,
                               const Eigen::MatrixXd& Theta) {
    detail::require(basis != nullptr, "spectral basis is required");
    detail::require(static_cast<std::size_t>(X.rows()) == basis->size(), "data rows must match the network size");
    detail::require(Theta.rows() == X.cols(), "Theta must be p x p");
    MeanFit fit;
    fit.alpha = alpha;
    fit.basis = basis;
    const Eigen::MatrixXd rhs = (basis->U.transpose() * X) * Theta;
    fit.B_hat = solve_coefficient_sylvester(Theta, basis->tau, alpha, rhs);
    fit.M_hat = basis->U * fit.B_hat;
    return fit;
}

/// Mean estimate using a known precision matrix (the oracle benchmark).
inline MeanFit oracle_mean_fit(const Eigen::MatrixXd& X, const BasisPtr& basis, double alpha,
                               const Eigen::MatrixXd& Theta_true) {
    detail::require_spd(Theta_true, "true precision");
    detail::require(alpha >= 0.0, "alpha must be nonnegative");
    return joint_mean_step(X, basis, alpha, Theta_true);
}

inline GncModel assemble_model(const Eigen::MatrixXd& X, MeanFit mean_fit, double lambda,
                               const GlassoOptions& opts) {
    const Eigen::MatrixXd S = residual_covariance(X, mean_fit);
    GncModel model;
    model.precision_fit = fit_glasso(S, lambda, opts);
    model.config.alpha = mean_fit.alpha;
    model.config.lambda = lambda;
    model.mean_fit = std::move(mean_fit);
    return model;
}

/// Two-stage estimator: Laplacian smoothing, then glasso on the residual
/// covariance.
inline GncModel fit_two_stage(const Eigen::MatrixXd& X, const BasisPtr& basis, double alpha, double lambda,
                              const GlassoOptions& opts = {}) {
    detail::require(lambda >= 0.0, "lambda must be nonnegative");
    return assemble_model(X, smooth_means(X, basis, alpha), lambda, opts);
}

inline GncModel fit_two_stage(const Eigen::MatrixXd& X, const Network& net, double alpha, double lambda,
                              const GlassoOptions& opts = {}) {
    return fit_two_stage(X, make_basis(net), alpha, lambda, opts);
}

/// Penalized joint log-likelihood
///   log det Theta - tr(Theta S) - lambda ||Theta||_{1,off} - (alpha/n) tr(B^T Lambda B)
///   [- lambda tr(Theta) when the diagonal is penalized]
/// with S = (X - M)^T (X - M) / n and M = U B.
inline double joint_objective(const Eigen::MatrixXd& X, const MeanFit& mean, const Eigen::MatrixXd& Theta,
                              double lambda, bool penalize_diagonal = true) {
    const Eigen::MatrixXd S = residual_covariance(X, mean);
    const double smooth = (mean.basis->tau.asDiagonal() * mean.B_hat.cwiseAbs2()).sum();
    double value = glasso_objective(S, Theta, lambda) - mean.alpha * smooth / static_cast<double>(X.rows());
    if (penalize_diagonal) value -= lambda * Theta.trace();
    return value;
}

struct JointOptions {
    std::size_t outer_iters = 50;
    double tol = 1e-6;
    GlassoOptions glasso;
    // With an unpenalized diagonal the joint objective is unbounded above
    // (M = X, S = 0, Theta = cI, c -> inf), so the alternating iterates
    // run off to M = X. Penalizing tr(Theta) keeps the problem bounded.
    bool penalize_diagonal = true;
};

/// Alternating maximization of the joint objective, starting from
/// Theta = I (so the first mean step equals smooth_means).
/// `initial` optionally supplies a starting precision fit.
inline GncModel fit_iterative_joint(const Eigen::MatrixXd& X, const BasisPtr& basis, double alpha, double lambda,
                                    const JointOptions& opts = {}, const PrecisionFit* initial = nullptr) {
    detail::require(alpha > 0.0, "iterative joint fit requires alpha > 0");
    detail::require(lambda > 0.0, "iterative joint fit requires lambda > 0");
    detail::require(opts.outer_iters >= 1, "need at least one outer iteration");

    GncModel model;
    model.config.alpha = alpha;
    model.config.lambda = lambda;
    model.config.alpha_method = "fixed";

    Eigen::MatrixXd Theta = initial != nullptr ? initial->Theta : Eigen::MatrixXd::Identity(X.cols(), X.cols());
    const PrecisionFit* warm = initial;
    PrecisionFit current;
    double previous = -std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < opts.outer_iters; ++it) {
        MeanFit mean = joint_mean_step(X, basis, alpha, Theta);
        const Eigen::MatrixXd S = residual_covariance(X, mean);
        try {
            // A penalized diagonal is plain glasso on S + lambda I.
            const Eigen::MatrixXd S_step =
                opts.penalize_diagonal ? Eigen::MatrixXd(S + lambda * Eigen::MatrixXd::Identity(S.rows(), S.cols())) : S;
            current = fit_glasso(S_step, lambda, opts.glasso, warm);
        } catch (const NumericalError&) {
            if (it == 0) throw;
            model.joint.diverged = true;
            break;
        }
        Theta = current.Theta;
        const double obj = joint_objective(X, mean, Theta, lambda, opts.penalize_diagonal);
        model.joint.objective_history.push_back(obj);
        model.joint.outer_iterations = it + 1;
        model.mean_fit = std::move(mean);
        model.precision_fit = current;
        warm = &model.precision_fit;
        if (std::abs(obj - previous) <= opts.tol * (1.0 + std::abs(obj))) {
            model.joint.converged = true;
            break;
        }
        previous = obj;
    }
    return model;
}

/// Error matrices in the eigenbasis for true coefficients B and noise E:
///   W1 (I + a Lambda) = a Lambda B + E~,          E~ = -U^T E
///   W2 Theta + a Lambda W2 = a Lambda B + E.,     E. = -U^T E Theta
///   W3 (I + a Lambda) = a Lambda B + E.
///   W4 diag(Theta) + a Lambda W4 = a Lambda B + E.
struct OracleErrorSet {
    Eigen::MatrixXd W1, W2, W3, W4;
    Eigen::MatrixXd E_tilde, E_dot;
};

inline OracleErrorSet compute_oracle_errors(const Eigen::MatrixXd& B, const Eigen::MatrixXd& E,
                                            const Eigen::MatrixXd& Theta, double alpha, const SpectralBasis& basis) {
    const auto n = static_cast<Eigen::Index>(basis.size());
    detail::require(B.rows() == n && E.rows() == n, "B and E must have one row per node");
    detail::require(B.cols() == E.cols() && Theta.rows() == B.cols(), "B, E and Theta widths must agree");
    detail::require(alpha >= 0.0, "alpha must be nonnegative");
    detail::require_spd(Theta, "Theta");

    const Eigen::VectorXd& tau = basis.tau;
    OracleErrorSet out;
    const Eigen::MatrixXd UtE = basis.U.transpose() * E;
    out.E_tilde = -UtE;
    out.E_dot = -(UtE * Theta);
    const Eigen::MatrixXd signal = alpha * (tau.asDiagonal() * B);

    const Eigen::MatrixXd rhs1 = signal + out.E_tilde;
    const Eigen::MatrixXd rhs_dot = signal + out.E_dot;
    const auto p = B.cols();
    out.W1.resize(n, p);
    out.W3.resize(n, p);
    out.W4.resize(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double shrink = 1.0 + alpha * tau(i);
            out.W1(i, j) = rhs1(i, j) / shrink;
            out.W3(i, j) = rhs_dot(i, j) / shrink;
            out.W4(i, j) = rhs_dot(i, j) / (Theta(j, j) + alpha * tau(i));
        }
    }
    out.W2 = solve_coefficient_sylvester(Theta, tau, alpha, rhs_dot);
    return out;
}

/// Symmetric Theta with unit diagonal whose largest off-diagonal row l1
/// mass equals rho. Off-diagonals are Gaussian, kept with probability
/// `density`, then scaled as a whole.
inline Eigen::MatrixXd random_diagonally_dominant_theta(std::size_t p, double rho, std::uint64_t seed,
                                                        double density = 1.0) {
    detail::require(p >= 2, "need p >= 2");
    detail::require(rho > 0.0 && rho < 1.0, "rho must be in (0, 1)");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::bernoulli_distribution keep(density);
    const auto P = static_cast<Eigen::Index>(p);
    Eigen::MatrixXd off = Eigen::MatrixXd::Zero(P, P);
    for (Eigen::Index i = 0; i < P; ++i) {
        for (Eigen::Index j = i + 1; j < P; ++j) {
            const double v = normal(rng);
            if (keep(rng)) off(i, j) = off(j, i) = v;
        }
    }
    double max_row = off.cwiseAbs().rowwise().sum().maxCoeff();
    if (max_row == 0.0) {
        off(0, 1) = off(1, 0) = 1.0;
        max_row = 1.0;
    }
    return Eigen::MatrixXd::Identity(P, P) + (rho / max_row) * off;
}

/// max_j sum_{j' != j} |Theta_j'j| / Theta_jj.
inline double diagonal_dominance_ratio(const Eigen::MatrixXd& Theta) {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < Theta.cols(); ++j) {
        const double off = Theta.col(j).cwiseAbs().sum() - std::abs(Theta(j, j));
        worst = std::max(worst, off / Theta(j, j));
    }
    return worst;
}

struct ClusterGlassoFit {
    KMeansResult clustering;
    Eigen::MatrixXd M_hat;
    PrecisionFit precision_fit;
};

/// Row means replaced by their K-means cluster centroid.
inline Eigen::MatrixXd cluster_mean_matrix(const Eigen::MatrixXd& X, const KMeansResult& km) {
    Eigen::MatrixXd M(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) M.row(i) = km.centroids.row(km.labels[static_cast<std::size_t>(i)]);
    return M;
}

/// Baseline ignoring the network: K-means on rows, per-cluster centering,
/// glasso on the pooled residual covariance.
inline ClusterGlassoFit fit_cluster_glasso(const Eigen::MatrixXd& X, std::size_t k_clusters, double lambda,
                                           std::uint64_t seed, const GlassoOptions& opts = {}) {
    ClusterGlassoFit out;
    out.clustering = kmeans(X, k_clusters, seed);
    out.M_hat = cluster_mean_matrix(X, out.clustering);
    out.precision_fit = fit_glasso(residual_covariance(X, out.M_hat), lambda, opts);
    return out;
}

} // namespace gnc
