#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include <gnc/glasso.hpp>
#include <gnc/sim.hpp>

namespace {

Eigen::MatrixXd random_spd(Eigen::Index p, std::mt19937_64& rng, Eigen::Index samples = 0) {
    std::normal_distribution<double> z;
    if (samples == 0) samples = 3 * p;
    Eigen::MatrixXd A(samples, p);
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index i = 0; i < samples; ++i) A(i, j) = z(rng);
    Eigen::MatrixXd S = A.transpose() * A / static_cast<double>(samples);
    return 0.5 * (S + S.transpose());
}

// Closed-form 2x2 solution: the diagonal of Sigma_hat equals S, and the
// off-diagonal is S12 soft-thresholded by lambda.
Eigen::Matrix2d two_by_two_oracle(const Eigen::Matrix2d& S, double lambda) {
    Eigen::Matrix2d W = S;
    const double s = S(0, 1);
    const double w = std::abs(s) > lambda ? s - lambda * (s > 0 ? 1.0 : -1.0) : 0.0;
    W(0, 1) = W(1, 0) = w;
    return W.inverse();
}

} // namespace

TEST(Glasso, LambdaZeroInvertsS) {
    std::mt19937_64 rng(1);
    const Eigen::MatrixXd S = random_spd(6, rng);
    const auto fit = gnc::fit_glasso(S, 0.0);
    EXPECT_TRUE(fit.diagnostics.converged);
    EXPECT_LE((fit.Theta - S.inverse()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Glasso, LargeLambdaIsDiagonal) {
    std::mt19937_64 rng(2);
    const Eigen::MatrixXd S = random_spd(5, rng);
    for (double scale : {1.0, 3.0}) {
        const auto fit = gnc::fit_glasso(S, scale * gnc::lambda_max(S));
        EXPECT_TRUE(fit.support.empty());
        for (Eigen::Index j = 0; j < 5; ++j) {
            EXPECT_DOUBLE_EQ(fit.Theta(j, j), 1.0 / S(j, j));
            for (Eigen::Index k = 0; k < 5; ++k)
                if (k != j) EXPECT_EQ(fit.Theta(j, k), 0.0);
        }
    }
}

TEST(Glasso, TwoByTwoExample) {
    Eigen::Matrix2d S;
    S << 1.0, 0.5, 0.5, 1.0;
    const auto fit = gnc::fit_glasso(S, 0.2);
    const Eigen::Matrix2d want = two_by_two_oracle(S, 0.2);
    EXPECT_LE((fit.Theta - Eigen::MatrixXd(want)).cwiseAbs().maxCoeff(), 1e-5);
    // 1/(1 - 0.09) and -0.3/(1 - 0.09).
    EXPECT_NEAR(fit.Theta(0, 0), 1.0 / 0.91, 1e-5);
    EXPECT_NEAR(fit.Theta(0, 1), -0.3 / 0.91, 1e-5);
}

TEST(Glasso, TwoByTwoRandomAgainstOracle) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::MatrixXd S = random_spd(2, rng, 4);
        const double lambda = unif(rng) * 1.2 * std::abs(S(0, 1));
        const auto fit = gnc::fit_glasso(S, lambda);
        const Eigen::Matrix2d want = two_by_two_oracle(S, lambda);
        EXPECT_LE((fit.Theta - Eigen::MatrixXd(want)).cwiseAbs().maxCoeff(), 1e-5 * std::max(1.0, want.cwiseAbs().maxCoeff()))
            << "trial " << trial;
    }
}

TEST(Glasso, KktAndInvariantsOnConvergedFits) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::MatrixXd S = random_spd(12, rng, 30);
        const double lambda = (0.05 + 0.1 * trial) * gnc::lambda_max(S);
        const auto fit = gnc::fit_glasso(S, lambda);
        ASSERT_TRUE(fit.diagnostics.converged);
        EXPECT_LE(gnc::kkt_residual(S, fit.Theta, lambda), 1e-5);
        EXPECT_LE((fit.Theta - fit.Theta.transpose()).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(fit.Theta).info(), Eigen::Success);
        EXPECT_LE((fit.Theta * fit.Sigma_hat - Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff(), 1e-3);
        EXPECT_EQ(fit.support, gnc::support_of(fit.Theta));
    }
}

TEST(Glasso, DualObjectiveNonDecreasing) {
    std::mt19937_64 rng(5);
    const Eigen::MatrixXd S = random_spd(15, rng, 20);
    const auto fit = gnc::fit_glasso(S, 0.1 * gnc::lambda_max(S));
    const auto& h = fit.diagnostics.dual_history;
    ASSERT_GE(h.size(), 2u);
    for (std::size_t i = 1; i < h.size(); ++i) EXPECT_GE(h[i], h[i - 1] - 1e-10 * std::abs(h[i - 1]));
}

TEST(Glasso, SolutionBeatsPerturbations) {
    std::mt19937_64 rng(6);
    const Eigen::MatrixXd S = random_spd(6, rng);
    const double lambda = 0.2 * gnc::lambda_max(S);
    const auto fit = gnc::fit_glasso(S, lambda, {1e-9, 1000});
    const double best = gnc::glasso_objective(S, fit.Theta, lambda);
    std::normal_distribution<double> z;
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::MatrixXd D(6, 6);
        for (Eigen::Index j = 0; j < 6; ++j)
            for (Eigen::Index i = 0; i <= j; ++i) D(i, j) = D(j, i) = 1e-3 * z(rng);
        EXPECT_LE(gnc::glasso_objective(S, fit.Theta + D, lambda), best + 1e-12);
    }
}

TEST(Glasso, PermutationEquivariance) {
    std::mt19937_64 rng(7);
    const Eigen::MatrixXd S = random_spd(8, rng, 16);
    const double lambda = 0.15 * gnc::lambda_max(S);
    std::vector<int> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::PermutationMatrix<Eigen::Dynamic> P(8);
    for (int i = 0; i < 8; ++i) P.indices()(i) = perm[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd SP = P * S * P.transpose();
    const auto a = gnc::fit_glasso(S, lambda);
    const auto b = gnc::fit_glasso(SP, lambda);
    EXPECT_LE((Eigen::MatrixXd(P * a.Theta * P.transpose()) - b.Theta).cwiseAbs().maxCoeff(), 1e-4);
    EXPECT_EQ(gnc::support_mask(Eigen::MatrixXd(P * a.Theta * P.transpose())), gnc::support_mask(b.Theta));
}

TEST(Glasso, DiagonalInputGivesReciprocal) {
    Eigen::MatrixXd S = Eigen::Vector4d(0.5, 2.0, 1.0, 4.0).asDiagonal();
    for (double lambda : {0.0, 0.1, 5.0}) {
        const auto fit = gnc::fit_glasso(S, lambda);
        for (Eigen::Index j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(fit.Theta(j, j), 1.0 / S(j, j));
        EXPECT_TRUE(fit.support.empty());
    }
}

TEST(Glasso, Errors) {
    Eigen::Matrix2d S;
    S << 1.0, 0.2, 0.2, 1.0;
    EXPECT_THROW(gnc::fit_glasso(S, -1.0), gnc::ValidationError);
    Eigen::Matrix2d bad = S;
    bad(0, 1) = std::nan("");
    EXPECT_THROW(gnc::fit_glasso(bad, 0.1), gnc::ValidationError);
    Eigen::Matrix2d asym = S;
    asym(0, 1) = 0.3;
    EXPECT_THROW(gnc::fit_glasso(asym, 0.1), gnc::ValidationError);
    EXPECT_THROW(gnc::fit_glasso(Eigen::MatrixXd::Zero(3, 3), 0.5), gnc::NumericalError);
    Eigen::Matrix2d singular;
    singular << 1.0, 1.0, 1.0, 1.0;
    EXPECT_THROW(gnc::fit_glasso(singular, 0.0), gnc::NumericalError);
    EXPECT_THROW(gnc::fit_glasso(Eigen::MatrixXd(0, 0), 0.1), gnc::ValidationError);
}

TEST(Glasso, NonPsdInputIsRepaired) {
    Eigen::Matrix3d S;
    S << 1.0, 0.9, 0.9, 0.9, 1.0, -0.9, 0.9, -0.9, 1.0;
    ASSERT_LT(Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(S).eigenvalues().minCoeff(), 0.0);
    const auto fit = gnc::fit_glasso(S, 0.3);
    EXPECT_TRUE(fit.diagnostics.repaired_input);
    EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(fit.Theta).info(), Eigen::Success);
}

TEST(Glasso, IterationCapFlagsNonConvergence) {
    std::mt19937_64 rng(8);
    const Eigen::MatrixXd S = random_spd(10, rng, 12);
    const auto fit = gnc::fit_glasso(S, 0.01 * gnc::lambda_max(S), {1e-14, 1});
    EXPECT_FALSE(fit.diagnostics.converged);
    EXPECT_EQ(fit.diagnostics.iterations, 1u);
}

TEST(GlassoPath, SinglePointAtLambdaMax) {
    std::mt19937_64 rng(9);
    const Eigen::MatrixXd S = random_spd(4, rng);
    const auto path = gnc::glasso_path(S, {gnc::lambda_max(S)});
    ASSERT_EQ(path.size(), 1u);
    EXPECT_TRUE(path[0].support.empty());
}

TEST(GlassoPath, EndpointZeroInverts) {
    std::mt19937_64 rng(10);
    const Eigen::MatrixXd S = random_spd(3, rng);
    const auto path = gnc::glasso_path(S, {gnc::lambda_max(S), 0.0});
    EXPECT_LE((path.back().Theta - S.inverse()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(GlassoPath, SweepsFromEmptyTowardFull) {
    const auto sim = gnc::simulate_precision(20, 0.1, 11);
    std::mt19937_64 rng(12);
    std::normal_distribution<double> z;
    Eigen::MatrixXd Z(200, 20);
    for (Eigen::Index j = 0; j < 20; ++j)
        for (Eigen::Index i = 0; i < 200; ++i) Z(i, j) = z(rng);
    const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(sim.Sigma).matrixL();
    const Eigen::MatrixXd X = Z * L.transpose();
    const Eigen::MatrixXd C = X.rowwise() - X.colwise().mean();
    const Eigen::MatrixXd S = C.transpose() * C / 200.0;
    const auto path = gnc::glasso_path(0.5 * (S + S.transpose()), gnc::lambda_path_grid(S, 30, 0.01));
    EXPECT_TRUE(path.front().support.empty());
    EXPECT_GT(path.back().support.size(), path.front().support.size());
    for (const auto& fit : path) EXPECT_TRUE(fit.diagnostics.converged);
}

TEST(GlassoPath, GridValidation) {
    std::mt19937_64 rng(13);
    const Eigen::MatrixXd S = random_spd(3, rng);
    EXPECT_THROW(gnc::glasso_path(S, {}), gnc::ValidationError);
    EXPECT_THROW(gnc::glasso_path(S, {0.1, 0.2}), gnc::ValidationError);
    EXPECT_THROW(gnc::glasso_path(S, {0.1, 0.1}), gnc::ValidationError);
    EXPECT_THROW(gnc::glasso_path(S, {0.1, -0.1}), gnc::ValidationError);
}

TEST(GlassoTarget, HitsRequestedEdgeCount) {
    std::mt19937_64 rng(14);
    const Eigen::MatrixXd S = random_spd(12, rng, 40);
    for (std::size_t target : {0u, 5u, 12u, 25u}) {
        const auto fit = gnc::fit_glasso_target_edges(S, target);
        EXPECT_NEAR(static_cast<double>(fit.support.size()), static_cast<double>(target), 1.0) << target;
    }
    EXPECT_THROW(gnc::fit_glasso_target_edges(S, 67), gnc::ValidationError);
}

TEST(KktResidual, DetectsWrongAnswers) {
    std::mt19937_64 rng(15);
    const Eigen::MatrixXd S = random_spd(5, rng);
    const double lambda = 0.1 * gnc::lambda_max(S);
    const auto fit = gnc::fit_glasso(S, lambda);
    EXPECT_LE(gnc::kkt_residual(S, fit.Theta, lambda), 1e-5);
    EXPECT_GT(gnc::kkt_residual(S, S.inverse(), lambda), 1e-3);
    EXPECT_TRUE(std::isinf(gnc::kkt_residual(S, -Eigen::MatrixXd::Identity(5, 5), lambda)));
}
