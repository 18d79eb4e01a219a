#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include <gnc/error.hpp>
#include <gnc/graph.hpp>

namespace gnc {

/// Laplacian-smoothed means. M_hat = U * B_hat.
struct MeanFit {
    Eigen::MatrixXd M_hat;
    Eigen::MatrixXd B_hat;
    double alpha = 0.0;
    BasisPtr basis;
};

struct TuningCurve {
    std::vector<double> alphas;
    std::vector<double> scores;
    double chosen_alpha = 0.0;
    std::size_t chosen_index = 0;
};

/// n points log-spaced from hi down to lo, or lo up to hi when ascending.
inline std::vector<double> log_grid(double lo, double hi, std::size_t count, bool ascending = true) {
    detail::require(lo > 0.0 && hi >= lo, "log grid needs 0 < lo <= hi");
    detail::require(count >= 1, "log grid needs at least one point");
    std::vector<double> grid(count);
    if (count == 1) {
        grid[0] = ascending ? lo : hi;
        return grid;
    }
    const double a = std::log(lo);
    const double b = std::log(hi);
    for (std::size_t i = 0; i < count; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(count - 1);
        grid[i] = std::exp(a + t * (b - a));
    }
    grid.front() = lo;
    grid.back() = hi;
    if (!ascending) std::reverse(grid.begin(), grid.end());
    return grid;
}

inline std::vector<double> default_alpha_grid() { return log_grid(1e-2, 1e4, 40); }

namespace detail {

inline void check_alpha_grid(const std::vector<double>& alphas) {
    require(!alphas.empty(), "alpha grid is empty");
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        require(alphas[i] > 0.0 && std::isfinite(alphas[i]), "alpha grid values must be positive and finite");
        if (i > 0) require(alphas[i] > alphas[i - 1], "alpha grid must be strictly increasing");
    }
}

// Smallest alpha whose score is within abs_tol of the minimum.
inline void choose_minimum(TuningCurve& curve, double abs_tol) {
    for (double s : curve.scores) {
        if (!std::isfinite(s)) throw NumericalError("non-finite tuning score");
    }
    const double best = *std::min_element(curve.scores.begin(), curve.scores.end());
    const double tol = abs_tol + 1e-9 * std::abs(best);
    for (std::size_t i = 0; i < curve.scores.size(); ++i) {
        if (curve.scores[i] <= best + tol) {
            curve.chosen_index = i;
            curve.chosen_alpha = curve.alphas[i];
            return;
        }
    }
}

} // namespace detail

/// Closed-form Laplacian smoothing, column by column:
/// B_hat(i, j) = (U^T X)(i, j) / (1 + alpha tau_i).
inline MeanFit smooth_means(const Eigen::MatrixXd& X, const BasisPtr& basis, double alpha) {
    detail::require(basis != nullptr, "spectral basis is required");
    detail::require(static_cast<std::size_t>(X.rows()) == basis->size(),
                    "data has " + std::to_string(X.rows()) + " rows but the network has " +
                        std::to_string(basis->size()) + " nodes");
    detail::require(alpha >= 0.0 && std::isfinite(alpha), "alpha must be nonnegative");

    MeanFit fit;
    fit.alpha = alpha;
    fit.basis = basis;
    fit.B_hat = basis->U.transpose() * X;
    if (alpha == 0.0) {
        fit.M_hat = X;
        return fit;
    }
    const Eigen::VectorXd shrink = (1.0 + alpha * basis->tau.array()).inverse().matrix();
    fit.B_hat = shrink.asDiagonal() * fit.B_hat;
    fit.M_hat = basis->U * fit.B_hat;
    return fit;
}

/// (1/n) sum_i 1/(1 + alpha tau_i) = (1/n) tr((I + alpha L_s)^{-1}).
inline double mean_hat_trace(const SpectralBasis& basis, double alpha) {
    return (1.0 + alpha * basis.tau.array()).inverse().mean();
}

inline double gcv(const Eigen::MatrixXd& X, const BasisPtr& basis, double alpha) {
    detail::require(alpha > 0.0 && std::isfinite(alpha), "GCV requires alpha > 0");
    const MeanFit fit = smooth_means(X, basis, alpha);
    const double denom_root = 1.0 - mean_hat_trace(*basis, alpha);
    const double denom = denom_root * denom_root;
    if (denom < 1e-12) throw NumericalError("GCV denominator is degenerate");
    const double np = static_cast<double>(X.rows()) * static_cast<double>(X.cols());
    return (X - fit.M_hat).squaredNorm() / np / denom;
}

inline TuningCurve gcv_curve(const Eigen::MatrixXd& X, const BasisPtr& basis, const std::vector<double>& alphas) {
    detail::check_alpha_grid(alphas);
    TuningCurve curve;
    curve.alphas = alphas;
    curve.scores.reserve(alphas.size());
    for (double a : alphas) curve.scores.push_back(gcv(X, basis, a));
    const double scale = X.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, X.size()));
    detail::choose_minimum(curve, 1e-12 * scale);
    return curve;
}

/// Seeded node partition: fold f holds the nodes at shuffled positions
/// congruent to f modulo folds.
inline std::vector<std::size_t> assign_folds(std::size_t n, std::size_t folds, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> fold_of(n);
    for (std::size_t pos = 0; pos < n; ++pos) fold_of[order[pos]] = pos % folds;
    return fold_of;
}

/// Masked-fidelity fit: solves (P + alpha L_s) M = P X where P is the 0/1
/// diagonal mask of observed rows.
inline Eigen::MatrixXd masked_smooth(const Eigen::MatrixXd& X, const Eigen::MatrixXd& laplacian,
                                     const std::vector<bool>& observed, double alpha) {
    const auto n = X.rows();
    Eigen::MatrixXd A = alpha * laplacian;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, X.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        if (observed[static_cast<std::size_t>(i)]) {
            A(i, i) += 1.0;
            rhs.row(i) = X.row(i);
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("masked smoothing system is singular (alpha = " + std::to_string(alpha) + ")");
    }
    return llt.solve(rhs);
}

/// k-fold cross-validation of alpha over a node partition. Score is the
/// held-out sum of squared errors, averaged over folds.
inline TuningCurve cross_validate_alpha(const Eigen::MatrixXd& X, const Network& net, const SpectralBasis& basis,
                                        const std::vector<double>& alphas, std::size_t folds, std::uint64_t seed) {
    const std::size_t n = static_cast<std::size_t>(X.rows());
    detail::require(n == net.n && n == basis.size(), "data rows must match the network size");
    detail::require(folds >= 2, "cross-validation needs at least 2 folds");
    detail::require(n >= folds, "more folds than nodes");
    detail::check_alpha_grid(alphas);

    const Eigen::MatrixXd laplacian = standardized_laplacian(net).matrix;
    const auto fold_of = assign_folds(n, folds, seed);

    TuningCurve curve;
    curve.alphas = alphas;
    curve.scores.assign(alphas.size(), 0.0);
    for (std::size_t a = 0; a < alphas.size(); ++a) {
        double total = 0.0;
        for (std::size_t f = 0; f < folds; ++f) {
            std::vector<bool> observed(n);
            for (std::size_t i = 0; i < n; ++i) observed[i] = fold_of[i] != f;
            const Eigen::MatrixXd M = masked_smooth(X, laplacian, observed, alphas[a]);
            for (std::size_t i = 0; i < n; ++i) {
                if (!observed[i]) {
                    const auto r = static_cast<Eigen::Index>(i);
                    total += (X.row(r) - M.row(r)).squaredNorm();
                }
            }
        }
        curve.scores[a] = total / static_cast<double>(folds);
    }
    const double scale = X.squaredNorm() / static_cast<double>(folds);
    detail::choose_minimum(curve, 1e-12 * scale);
    return curve;
}

/// S_hat = (1/n) (X - M_hat)^T (X - M_hat).
inline Eigen::MatrixXd residual_covariance(const Eigen::MatrixXd& X, const Eigen::MatrixXd& M_hat) {
    detail::require(X.rows() == M_hat.rows() && X.cols() == M_hat.cols(), "data and mean shapes differ");
    detail::require(X.rows() > 0, "empty data");
    const Eigen::MatrixXd R = X - M_hat;
    Eigen::MatrixXd S = (R.transpose() * R) / static_cast<double>(X.rows());
    // Enforce exact symmetry.
    return 0.5 * (S + S.transpose());
}

inline Eigen::MatrixXd residual_covariance(const Eigen::MatrixXd& X, const MeanFit& fit) {
    return residual_covariance(X, fit.M_hat);
}

/// Zero mean, unit (n-1) standard deviation per column.
inline Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& X) {
    detail::require(X.rows() >= 2, "standardization needs at least two rows");
    Eigen::MatrixXd Z = X.rowwise() - X.colwise().mean();
    for (Eigen::Index j = 0; j < Z.cols(); ++j) {
        const double sd = std::sqrt(Z.col(j).squaredNorm() / static_cast<double>(X.rows() - 1));
        if (!(sd > 0.0)) throw ValidationError("column " + std::to_string(j) + " has zero variance");
        Z.col(j) /= sd;
    }
    return Z;
}

} // namespace gnc
