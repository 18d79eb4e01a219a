#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include <gnc/error.hpp>

namespace gnc {

inline constexpr double kSupportThreshold = 1e-8;

struct GlassoDiagnostics {
    double objective = -std::numeric_limits<double>::infinity();
    double kkt_residual = std::numeric_limits<double>::infinity();
    std::size_t iterations = 0;
    bool converged = false;
    // Input was not PSD and had its negative eigenvalues clipped.
    bool repaired_input = false;
    // log det(Sigma_hat) after each sweep. Block coordinate ascent on the
    // dual makes this non-decreasing once the iterate is dual feasible.
    std::vector<double> dual_history;
};

struct PrecisionFit {
    Eigen::MatrixXd Theta;
    Eigen::MatrixXd Sigma_hat;
    double lambda = 0.0;
    std::vector<std::pair<std::size_t, std::size_t>> support;
    GlassoDiagnostics diagnostics;
    // Lasso coefficients per column, kept for warm starts along a path.
    Eigen::MatrixXd coefficients;
};

struct GlassoOptions {
    double tol = 1e-5;
    std::size_t max_iter = 200;
};

/// Largest off-diagonal magnitude; any lambda at or above it yields a
/// diagonal estimate.
inline double lambda_max(const Eigen::MatrixXd& S) {
    double m = 0.0;
    for (Eigen::Index j = 0; j < S.cols(); ++j)
        for (Eigen::Index i = 0; i < S.rows(); ++i)
            if (i != j) m = std::max(m, std::abs(S(i, j)));
    return m;
}

/// Off-diagonal pairs (j < j') with |Theta| above the support threshold.
inline std::vector<std::pair<std::size_t, std::size_t>> support_of(const Eigen::MatrixXd& Theta,
                                                                   double threshold = kSupportThreshold) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (Eigen::Index i = 0; i < Theta.rows(); ++i)
        for (Eigen::Index j = i + 1; j < Theta.cols(); ++j)
            if (std::abs(Theta(i, j)) > threshold)
                out.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    return out;
}

/// log det(Theta) - tr(S Theta) - lambda * sum_{j != j'} |Theta_jj'|.
/// Returns -inf if Theta is not positive definite.
inline double glasso_objective(const Eigen::MatrixXd& S, const Eigen::MatrixXd& Theta, double lambda) {
    Eigen::LLT<Eigen::MatrixXd> llt(Theta);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double off_l1 = Theta.cwiseAbs().sum() - Theta.diagonal().cwiseAbs().sum();
    return logdet - (S.cwiseProduct(Theta)).sum() - lambda * off_l1;
}

/// Stationarity residual of a candidate Theta, computed from Theta^{-1}
/// and independent of the solver state:
///   diagonal:        |S_jj - Sigma_jj|
///   Theta_jj' != 0:  |S_jj' - Sigma_jj' + lambda sign(Theta_jj')|
///   Theta_jj' == 0:  max(0, |S_jj' - Sigma_jj'| - lambda)
inline double kkt_residual(const Eigen::MatrixXd& S, const Eigen::MatrixXd& Theta, double lambda) {
    Eigen::LLT<Eigen::MatrixXd> llt(Theta);
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const Eigen::MatrixXd Sigma = llt.solve(Eigen::MatrixXd::Identity(Theta.rows(), Theta.cols()));
    double worst = 0.0;
    for (Eigen::Index j = 0; j < S.cols(); ++j) {
        for (Eigen::Index i = 0; i < S.rows(); ++i) {
            const double gap = S(i, j) - Sigma(i, j);
            double r;
            if (i == j) {
                r = std::abs(gap);
            } else if (Theta(i, j) != 0.0) {
                r = std::abs(gap + lambda * (Theta(i, j) > 0.0 ? 1.0 : -1.0));
            } else {
                r = std::max(0.0, std::abs(gap) - lambda);
            }
            worst = std::max(worst, r);
        }
    }
    return worst;
}

namespace detail {

inline double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

inline double mean_abs_offdiag(const Eigen::MatrixXd& A) {
    const auto p = A.rows();
    if (p < 2) return 0.0;
    const double off = A.cwiseAbs().sum() - A.diagonal().cwiseAbs().sum();
    return off / static_cast<double>(p * (p - 1));
}

// Clip negative eigenvalues at zero. Returns true if anything changed.
inline bool repair_psd(Eigen::MatrixXd& S) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed while checking S for PSD");
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() >= -1e-10 * scale) return false;
    const Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(0.0);
    S = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
    S = 0.5 * (S + S.transpose());
    return true;
}

// Solves min_b 0.5 b'W_{-j,-j} b - S_{-j,j}'b + lambda |b|_1 by cyclic
// coordinate descent, in place on column j of `beta`. `w` receives W_{.,-j} b.
inline void column_lasso(const Eigen::MatrixXd& W, const Eigen::MatrixXd& S, Eigen::Index j, double lambda,
                         double tol, Eigen::Ref<Eigen::VectorXd> beta, Eigen::VectorXd& w) {
    const auto p = W.rows();
    w.setZero();
    for (Eigen::Index k = 0; k < p; ++k)
        if (k != j && beta(k) != 0.0) w.noalias() += beta(k) * W.col(k);

    constexpr int kMaxInner = 100000;
    for (int it = 0; it < kMaxInner; ++it) {
        double max_step = 0.0;
        for (Eigen::Index k = 0; k < p; ++k) {
            if (k == j) continue;
            const double wkk = W(k, k);
            const double c = S(k, j) - (w(k) - wkk * beta(k));
            const double next = soft_threshold(c, lambda) / wkk;
            const double d = next - beta(k);
            if (d != 0.0) {
                beta(k) = next;
                w.noalias() += d * W.col(k);
                max_step = std::max(max_step, std::abs(d) * wkk);
            }
        }
        if (max_step <= tol) return;
    }
}

} // namespace detail

/// Graphical lasso with an unpenalized diagonal. Maximizes
/// log det(Theta) - tr(S Theta) - lambda ||Theta||_{1,off} by block
/// coordinate ascent over the columns of Sigma_hat, each column a lasso
/// solved by cyclic coordinate descent.
///
/// Convergence: mean |change| of the off-diagonal Sigma_hat entries over a
/// sweep is at most tol * mean|S_offdiag|, and kkt_residual() <= tol.
/// When max_iter is hit the best iterate is returned with converged = false.
inline PrecisionFit fit_glasso(const Eigen::MatrixXd& S_in, double lambda, const GlassoOptions& opts = {},
                               const PrecisionFit* warm = nullptr) {
    detail::require(S_in.rows() == S_in.cols() && S_in.rows() > 0, "S must be a nonempty square matrix");
    detail::require(S_in.allFinite(), "S has non-finite entries");
    detail::require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be nonnegative");
    detail::require(opts.tol > 0.0, "tolerance must be positive");
    {
        const double scale = std::max(1.0, S_in.cwiseAbs().maxCoeff());
        detail::require((S_in - S_in.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale, "S must be symmetric");
    }
    const auto p = S_in.rows();
    const double diag_scale = S_in.diagonal().cwiseAbs().maxCoeff();
    if (!(S_in.diagonal().minCoeff() > 1e-14 * std::max(diag_scale, 1e-300))) {
        throw NumericalError("degenerate residual covariance: S has a zero diagonal entry");
    }

    Eigen::MatrixXd S = 0.5 * (S_in + S_in.transpose());
    PrecisionFit fit;
    fit.lambda = lambda;
    if (p > 1 && Eigen::LLT<Eigen::MatrixXd>(S).info() != Eigen::Success) {
        fit.diagnostics.repaired_input = detail::repair_psd(S);
    }

    if (lambda == 0.0) {
        Eigen::LLT<Eigen::MatrixXd> llt(S);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("S is singular; an unpenalized fit has no finite solution");
        }
    }

    Eigen::MatrixXd W = S;
    Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(p, p);
    if (warm != nullptr && warm->Sigma_hat.rows() == p && warm->coefficients.rows() == p) {
        Eigen::MatrixXd candidate = warm->Sigma_hat;
        candidate.diagonal() = S.diagonal();
        // A warm start is only usable if it is still positive definite
        // under the new diagonal.
        if (Eigen::LLT<Eigen::MatrixXd>(candidate).info() == Eigen::Success) {
            W = std::move(candidate);
            beta = warm->coefficients;
        }
    }

    const double s_off = detail::mean_abs_offdiag(S);
    const double change_tol = opts.tol * (s_off > 0.0 ? s_off : 1.0);
    const double inner_tol = 1e-3 * opts.tol;

    auto assemble_theta = [&]() {
        Eigen::MatrixXd Theta = Eigen::MatrixXd::Zero(p, p);
        for (Eigen::Index j = 0; j < p; ++j) {
            double quad = 0.0;
            for (Eigen::Index k = 0; k < p; ++k)
                if (k != j) quad += W(k, j) * beta(k, j);
            const double tjj = 1.0 / (W(j, j) - quad);
            Theta(j, j) = tjj;
            for (Eigen::Index k = 0; k < p; ++k)
                if (k != j) Theta(k, j) = -beta(k, j) * tjj;
        }
        Eigen::MatrixXd sym = 0.5 * (Theta + Theta.transpose());
        // Entries zeroed on one side only are treated as zero on both.
        for (Eigen::Index j = 0; j < p; ++j)
            for (Eigen::Index k = 0; k < p; ++k)
                if (Theta(k, j) == 0.0 || Theta(j, k) == 0.0) sym(k, j) = 0.0;
        return sym;
    };

    Eigen::VectorXd w(p);
    auto& diag = fit.diagnostics;
    Eigen::MatrixXd Theta;
    for (std::size_t sweep = 0; sweep < opts.max_iter; ++sweep) {
        double total_change = 0.0;
        for (Eigen::Index j = 0; j < p && p > 1; ++j) {
            detail::column_lasso(W, S, j, lambda, inner_tol, beta.col(j), w);
            for (Eigen::Index k = 0; k < p; ++k) {
                if (k == j) continue;
                total_change += std::abs(w(k) - W(k, j));
                W(k, j) = w(k);
                W(j, k) = w(k);
            }
        }
        diag.iterations = sweep + 1;
        {
            Eigen::LLT<Eigen::MatrixXd> llt(W);
            diag.dual_history.push_back(llt.info() == Eigen::Success
                                            ? 2.0 * llt.matrixLLT().diagonal().array().log().sum()
                                            : -std::numeric_limits<double>::infinity());
        }
        const double mean_change = p > 1 ? total_change / static_cast<double>(p * (p - 1)) : 0.0;
        if (mean_change <= change_tol) {
            Theta = assemble_theta();
            diag.kkt_residual = kkt_residual(S, Theta, lambda);
            if (diag.kkt_residual <= opts.tol) {
                diag.converged = true;
                break;
            }
        }
    }
    if (!diag.converged) {
        Theta = assemble_theta();
        diag.kkt_residual = kkt_residual(S, Theta, lambda);
    }

    fit.Theta = std::move(Theta);
    fit.Sigma_hat = W;
    fit.coefficients = std::move(beta);
    fit.support = support_of(fit.Theta);
    diag.objective = glasso_objective(S, fit.Theta, lambda);
    if (!std::isfinite(diag.objective)) {
        throw NumericalError("glasso produced a non positive definite precision estimate");
    }
    return fit;
}

/// Warm-started fits along a strictly decreasing lambda grid.
inline std::vector<PrecisionFit> glasso_path(const Eigen::MatrixXd& S, const std::vector<double>& lambdas,
                                             const GlassoOptions& opts = {}) {
    detail::require(!lambdas.empty(), "lambda grid is empty");
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        detail::require(lambdas[i] >= 0.0, "lambda values must be nonnegative");
        if (i > 0) detail::require(lambdas[i] < lambdas[i - 1], "lambda grid must be strictly decreasing");
    }
    std::vector<PrecisionFit> path;
    path.reserve(lambdas.size());
    for (double lam : lambdas) {
        path.push_back(fit_glasso(S, lam, opts, path.empty() ? nullptr : &path.back()));
    }
    return path;
}

/// Lambda chosen so the support has `target` edges, or as close as the
/// search resolution allows (ties go to the larger lambda). Halves lambda
/// from lambda_max until the target is bracketed, then bisects in log
/// lambda.
inline PrecisionFit fit_glasso_target_edges(const Eigen::MatrixXd& S, std::size_t target,
                                            const GlassoOptions& opts = {}, std::size_t max_bisect = 40) {
    const auto p = static_cast<std::size_t>(S.rows());
    detail::require(p >= 2, "a target edge count needs p >= 2");
    detail::require(target <= p * (p - 1) / 2, "target edge count exceeds p(p-1)/2");
    const double top = lambda_max(S);
    if (!(top > 0.0)) throw NumericalError("S has no off-diagonal signal; cannot target an edge count");

    PrecisionFit best;
    bool have_best = false;
    auto consider = [&](PrecisionFit fit) {
        const auto gap = [&](const PrecisionFit& f) {
            const auto e = f.support.size();
            return e > target ? e - target : target - e;
        };
        if (!have_best || gap(fit) < gap(best) || (gap(fit) == gap(best) && fit.lambda > best.lambda)) {
            best = std::move(fit);
            have_best = true;
        }
    };

    double hi = top;
    consider(fit_glasso(S, hi, opts));
    if (best.support.size() == target) return best;
    double lo = top;
    for (;;) {
        lo *= 0.5;
        if (lo < top * 1e-6) return best;
        PrecisionFit fit = fit_glasso(S, lo, opts);
        const bool reached = fit.support.size() >= target;
        consider(std::move(fit));
        if (best.support.size() == target) return best;
        if (reached) break;
        hi = lo;
    }
    for (std::size_t it = 0; it < max_bisect; ++it) {
        const double mid = std::sqrt(lo * hi);
        PrecisionFit fit = fit_glasso(S, mid, opts);
        if (fit.support.size() >= target) lo = mid; else hi = mid;
        consider(std::move(fit));
        if (best.support.size() == target) break;
    }
    return best;
}

} // namespace gnc
