#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include <gnc/pipeline.hpp>
#include <gnc/sim.hpp>

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    Eigen::MatrixXd A(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) A(i, j) = z(rng);
    return A;
}

Eigen::MatrixXd random_spd(Eigen::Index p, std::mt19937_64& rng) {
    const Eigen::MatrixXd A = gaussian(p, p, rng);
    Eigen::MatrixXd T = A * A.transpose() / static_cast<double>(p) + 0.5 * Eigen::MatrixXd::Identity(p, p);
    return 0.5 * (T + T.transpose());
}

// vec(Y Theta + alpha diag(tau) Y) = (Theta kron I + alpha I kron diag(tau)) vec(Y).
Eigen::MatrixXd kronecker_solve(const Eigen::MatrixXd& Theta, const Eigen::VectorXd& tau, double alpha,
                                const Eigen::MatrixXd& rhs) {
    const auto n = rhs.rows();
    const auto p = rhs.cols();
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n * p, n * p);
    for (Eigen::Index a = 0; a < p; ++a)
        for (Eigen::Index b = 0; b < p; ++b)
            for (Eigen::Index i = 0; i < n; ++i) K(b * n + i, a * n + i) += Theta(a, b);
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index i = 0; i < n; ++i) K(j * n + i, j * n + i) += alpha * tau(i);
    const Eigen::VectorXd v = K.fullPivLu().solve(Eigen::Map<const Eigen::VectorXd>(rhs.data(), n * p));
    return Eigen::Map<const Eigen::MatrixXd>(v.data(), n, p);
}

double max_abs(const Eigen::MatrixXd& A) { return A.cwiseAbs().maxCoeff(); }

} // namespace

TEST(Sylvester, MatchesKroneckerSolve) {
    std::mt19937_64 rng(1);
    const auto basis = gnc::eigendecompose(gnc::lattice_network(2));
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::MatrixXd Theta = random_spd(3, rng);
        const Eigen::MatrixXd rhs = gaussian(4, 3, rng);
        const double alpha = 0.3 + trial;
        const auto Y = gnc::solve_coefficient_sylvester(Theta, basis.tau, alpha, rhs);
        EXPECT_LE(max_abs(Y - kronecker_solve(Theta, basis.tau, alpha, rhs)), 1e-10);
        EXPECT_LE(gnc::sylvester_residual(Y, Theta, basis.tau, alpha, rhs), 1e-10);
    }
}

TEST(Sylvester, ShapeMismatch) {
    EXPECT_THROW(gnc::solve_coefficient_sylvester(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(3), 1.0,
                                                  Eigen::MatrixXd::Zero(4, 2)),
                 gnc::ValidationError);
}

TEST(JointMeanStep, IdentityThetaEqualsSmoothMeans) {
    std::mt19937_64 rng(2);
    const auto basis = gnc::make_basis(gnc::lattice_network(5));
    const Eigen::MatrixXd X = gaussian(25, 4, rng);
    for (double alpha : {0.01, 1.0, 50.0}) {
        const auto a = gnc::joint_mean_step(X, basis, alpha, Eigen::MatrixXd::Identity(4, 4));
        const auto b = gnc::smooth_means(X, basis, alpha);
        EXPECT_LE(max_abs(a.B_hat - b.B_hat), 1e-10);
        EXPECT_LE(max_abs(a.M_hat - b.M_hat), 1e-10);
    }
}

TEST(JointMeanStep, ScalarCase) {
    std::mt19937_64 rng(3);
    const auto basis = gnc::make_basis(gnc::lattice_network(3));
    const Eigen::MatrixXd X = gaussian(9, 1, rng);
    const double theta = 2.5, alpha = 0.8;
    const auto fit = gnc::joint_mean_step(X, basis, alpha, Eigen::MatrixXd::Constant(1, 1, theta));
    const Eigen::VectorXd utx = basis->U.transpose() * X;
    for (Eigen::Index i = 0; i < 9; ++i)
        EXPECT_NEAR(fit.B_hat(i, 0), theta * utx(i) / (theta + alpha * basis->tau(i)), 1e-12);
}

TEST(OracleMeanFit, DiagonalThetaDecouples) {
    std::mt19937_64 rng(4);
    const auto basis = gnc::make_basis(gnc::lattice_network(3));
    const Eigen::MatrixXd X = gaussian(9, 3, rng);
    const Eigen::Vector3d theta(0.5, 1.0, 4.0);
    const double alpha = 2.0;
    const auto fit = gnc::oracle_mean_fit(X, basis, alpha, theta.asDiagonal().toDenseMatrix());
    const Eigen::MatrixXd utx = basis->U.transpose() * X;
    for (Eigen::Index j = 0; j < 3; ++j)
        for (Eigen::Index i = 0; i < 9; ++i)
            EXPECT_NEAR(fit.B_hat(i, j), theta(j) * utx(i, j) / (theta(j) + alpha * basis->tau(i)), 1e-12);
}

TEST(OracleMeanFit, IdentityMatchesSmoothMeans) {
    std::mt19937_64 rng(5);
    const auto basis = gnc::make_basis(gnc::lattice_network(3));
    const Eigen::MatrixXd X = gaussian(9, 2, rng);
    const auto a = gnc::oracle_mean_fit(X, basis, 1.5, Eigen::MatrixXd::Identity(2, 2));
    EXPECT_LE(max_abs(a.M_hat - gnc::smooth_means(X, basis, 1.5).M_hat), 1e-12);
}

TEST(OracleMeanFit, EstimatingEquationResidual) {
    std::mt19937_64 rng(6);
    const auto basis = gnc::make_basis(gnc::lattice_network(2));
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXd X = gaussian(4, 3, rng);
        const Eigen::MatrixXd Theta = random_spd(3, rng);
        const double alpha = 0.1 + 0.5 * trial;
        const auto fit = gnc::oracle_mean_fit(X, basis, alpha, Theta);
        const Eigen::MatrixXd rhs = basis->U.transpose() * X * Theta;
        EXPECT_LE(gnc::sylvester_residual(fit.B_hat, Theta, basis->tau, alpha, rhs), 1e-10);
    }
}

TEST(OracleMeanFit, RejectsNonSpd) {
    const auto basis = gnc::make_basis(gnc::lattice_network(2));
    Eigen::Matrix2d bad;
    bad << 1, 2, 2, 1;
    EXPECT_THROW(gnc::oracle_mean_fit(Eigen::MatrixXd::Zero(4, 2), basis, 1.0, bad), gnc::ValidationError);
}

TEST(TwoStage, AlphaZeroIsDegenerate) {
    std::mt19937_64 rng(7);
    const auto net = gnc::lattice_network(3);
    const Eigen::MatrixXd X = gaussian(9, 3, rng);
    try {
        gnc::fit_two_stage(X, net, 0.0, 0.1);
        FAIL() << "expected a degenerate covariance error";
    } catch (const gnc::NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("degenerate residual covariance"), std::string::npos);
    }
}

TEST(TwoStage, IidDataMatchesCenteredGlasso) {
    std::mt19937_64 rng(8);
    const auto net = gnc::lattice_network(8);
    const auto sim = gnc::simulate_precision(10, 0.2, 9);
    const Eigen::MatrixXd M = Eigen::RowVectorXd::LinSpaced(10, -1.0, 1.0).replicate(64, 1);
    const Eigen::MatrixXd X = gnc::sample_data(M, sim.Sigma, 10);
    const Eigen::MatrixXd C = X.rowwise() - X.colwise().mean();
    const Eigen::MatrixXd S = gnc::residual_covariance(X, X - C);
    const double lambda = 0.2 * gnc::lambda_max(S);
    const auto model = gnc::fit_two_stage(X, net, 1e8, lambda);
    const auto plain = gnc::fit_glasso(S, lambda);
    EXPECT_EQ(model.precision_fit.support, plain.support);
    EXPECT_LE(max_abs(model.precision_fit.Theta - plain.Theta), 1e-4);
    EXPECT_EQ(model.config.alpha, 1e8);
    EXPECT_EQ(model.config.lambda, lambda);
}

TEST(TwoStage, Deterministic) {
    std::mt19937_64 rng(9);
    const auto net = gnc::lattice_network(4);
    const Eigen::MatrixXd X = gaussian(16, 5, rng);
    const auto a = gnc::fit_two_stage(X, net, 1.0, 0.05);
    const auto b = gnc::fit_two_stage(X, net, 1.0, 0.05);
    EXPECT_TRUE(a.precision_fit.Theta == b.precision_fit.Theta);
    EXPECT_TRUE(a.mean_fit.M_hat == b.mean_fit.M_hat);
}

TEST(IterativeJoint, ObjectiveNonDecreasing) {
    const auto net = gnc::lattice_network(6);
    const auto basis = gnc::make_basis(net);
    gnc::SimConfig cfg;
    cfg.n = 36;
    cfg.p = 8;
    cfg.graph_edge_prob = 0.2;
    cfg.seed = 3;
    const auto prec = gnc::simulate_precision(cfg.p, cfg.graph_edge_prob, 1);
    const auto M = gnc::simulate_means(*basis, cfg.p, 3, 0.5, 1.6, prec.Sigma, 2);
    const auto X = gnc::sample_data(M, prec.Sigma, 3);
    const auto model = gnc::fit_iterative_joint(X, basis, 2.0, 0.1, {50, 1e-10, {1e-8, 500}, true});
    const auto& h = model.joint.objective_history;
    ASSERT_GE(h.size(), 2u);
    for (std::size_t i = 1; i < h.size(); ++i) EXPECT_GE(h[i], h[i - 1] - 1e-6 * (1.0 + std::abs(h[i - 1])));
    EXPECT_FALSE(model.joint.diverged);
}

TEST(IterativeJoint, FirstStepIsTwoStageOnShiftedCovariance) {
    std::mt19937_64 rng(10);
    const auto basis = gnc::make_basis(gnc::lattice_network(4));
    const Eigen::MatrixXd X = gaussian(16, 4, rng);
    const double alpha = 1.0, lambda = 0.05;
    const auto one = gnc::fit_iterative_joint(X, basis, alpha, lambda, {1, 1e-6, {}, true});
    const auto mean = gnc::smooth_means(X, basis, alpha);
    EXPECT_LE(max_abs(one.mean_fit.M_hat - mean.M_hat), 1e-10);
    const Eigen::MatrixXd S = gnc::residual_covariance(X, mean) + lambda * Eigen::MatrixXd::Identity(4, 4);
    EXPECT_LE(max_abs(one.precision_fit.Theta - gnc::fit_glasso(S, lambda).Theta), 1e-12);
}

TEST(IterativeJoint, Preconditions) {
    const auto basis = gnc::make_basis(gnc::lattice_network(2));
    const Eigen::MatrixXd X = Eigen::MatrixXd::Random(4, 2);
    EXPECT_THROW(gnc::fit_iterative_joint(X, basis, 0.0, 0.1), gnc::ValidationError);
    EXPECT_THROW(gnc::fit_iterative_joint(X, basis, 1.0, 0.0), gnc::ValidationError);
}

TEST(OracleErrors, W3MinusW1Identity) {
    std::mt19937_64 rng(11);
    const auto basis = gnc::eigendecompose(gnc::lattice_network(3));
    std::uniform_real_distribution<double> log_alpha(-2.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::MatrixXd B = gaussian(9, 3, rng);
        const Eigen::MatrixXd E = gaussian(9, 3, rng);
        const Eigen::MatrixXd Theta = random_spd(3, rng);
        const double alpha = std::pow(10.0, log_alpha(rng));
        const auto w = gnc::compute_oracle_errors(B, E, Theta, alpha, basis);
        const Eigen::VectorXd shrink = (1.0 + alpha * basis.tau.array()).inverse().matrix();
        const Eigen::MatrixXd want =
            shrink.asDiagonal() * (basis.U.transpose() * E * (Eigen::MatrixXd::Identity(3, 3) - Theta));
        EXPECT_LE(max_abs(w.W3 - w.W1 - want), 1e-10);
    }
}

TEST(OracleErrors, DefiningEquations) {
    std::mt19937_64 rng(12);
    const auto basis = gnc::eigendecompose(gnc::lattice_network(3));
    const Eigen::MatrixXd B = gaussian(9, 4, rng);
    const Eigen::MatrixXd E = gaussian(9, 4, rng);
    const Eigen::MatrixXd Theta = random_spd(4, rng);
    const double alpha = 0.7;
    const auto w = gnc::compute_oracle_errors(B, E, Theta, alpha, basis);
    const Eigen::MatrixXd L = basis.tau.asDiagonal();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(9, 9);
    const Eigen::MatrixXd signal = alpha * L * B;
    const auto rel = [](const Eigen::MatrixXd& r, const Eigen::MatrixXd& ref) { return r.norm() / ref.norm(); };
    EXPECT_LE(rel((I + alpha * L) * w.W1 - (signal + w.E_tilde), signal), 1e-9);
    EXPECT_LE(rel(w.W2 * Theta + alpha * L * w.W2 - (signal + w.E_dot), signal), 1e-9);
    EXPECT_LE(rel((I + alpha * L) * w.W3 - (signal + w.E_dot), signal), 1e-9);
    const Eigen::MatrixXd D = Theta.diagonal().asDiagonal();
    EXPECT_LE(rel(w.W4 * D + alpha * L * w.W4 - (signal + w.E_dot), signal), 1e-9);
}

TEST(OracleErrors, IdentityThetaCollapses) {
    std::mt19937_64 rng(13);
    const auto basis = gnc::eigendecompose(gnc::lattice_network(3));
    const Eigen::MatrixXd B = gaussian(9, 3, rng);
    const Eigen::MatrixXd E = gaussian(9, 3, rng);
    const auto w = gnc::compute_oracle_errors(B, E, Eigen::MatrixXd::Identity(3, 3), 1.3, basis);
    EXPECT_TRUE(w.W1 == w.W3);
    EXPECT_TRUE(w.W3 == w.W4);
    EXPECT_LE(max_abs(w.W2 - w.W1), 1e-14);
}

TEST(OracleErrors, RatioBoundsUnderDiagonalDominance) {
    std::mt19937_64 rng(14);
    const auto basis = gnc::eigendecompose(gnc::lattice_network(4));
    const double rho = 0.4;
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::MatrixXd Theta = gnc::random_diagonally_dominant_theta(6, rho, 1000 + trial, 0.5);
        ASSERT_NEAR(gnc::diagonal_dominance_ratio(Theta), rho, 1e-12);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Theta);
        const double kbar = std::max(es.eigenvalues().maxCoeff(), 1.0 / es.eigenvalues().minCoeff());
        const Eigen::MatrixXd B = gaussian(16, 6, rng);
        const Eigen::MatrixXd E = gaussian(16, 6, rng);
        const auto w = gnc::compute_oracle_errors(B, E, Theta, 0.5 + 0.1 * trial, basis);
        const double ratio = max_abs(w.W3) / max_abs(w.W2);
        EXPECT_GE(ratio, (1.0 - rho) / kbar) << trial;
        EXPECT_LE(ratio, (1.0 + rho) * kbar) << trial;
    }
}

TEST(DiagonallyDominant, Construction) {
    const auto T = gnc::random_diagonally_dominant_theta(5, 0.3, 7);
    EXPECT_TRUE(T == T.transpose());
    for (Eigen::Index j = 0; j < 5; ++j) EXPECT_EQ(T(j, j), 1.0);
    EXPECT_NEAR(gnc::diagonal_dominance_ratio(T), 0.3, 1e-12);
    EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(T).info(), Eigen::Success);
    EXPECT_THROW(gnc::random_diagonally_dominant_theta(5, 1.0, 7), gnc::ValidationError);
}

TEST(ClusterGlasso, OneClusterIsCenteredGlasso) {
    std::mt19937_64 rng(15);
    const Eigen::MatrixXd X = gaussian(30, 5, rng);
    const auto fit = gnc::fit_cluster_glasso(X, 1, 0.05, 3);
    const Eigen::MatrixXd C = X.rowwise() - X.colwise().mean();
    const auto plain = gnc::fit_glasso(gnc::residual_covariance(X, X - C), 0.05);
    EXPECT_LE(max_abs(fit.precision_fit.Theta - plain.Theta), 1e-10);
}

TEST(ClusterGlasso, NClustersIsDegenerate) {
    std::mt19937_64 rng(16);
    const Eigen::MatrixXd X = gaussian(6, 3, rng);
    EXPECT_THROW(gnc::fit_cluster_glasso(X, 6, 0.1, 1), gnc::NumericalError);
    EXPECT_THROW(gnc::fit_cluster_glasso(X, 7, 0.1, 1), gnc::ValidationError);
}
