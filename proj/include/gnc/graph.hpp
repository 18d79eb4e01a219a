#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include <gnc/error.hpp>

namespace gnc {

using Edge = std::pair<std::size_t, std::size_t>;

/// Undirected simple graph. Edges are stored once with first < second,
/// sorted lexicographically.
struct Network {
    std::size_t n = 0;
    std::vector<Edge> edges;
    std::vector<std::size_t> degrees;
    double mean_degree = 0.0;

    std::size_t edge_count() const { return edges.size(); }
};

/// Build a network from an arbitrary list of node pairs. Symmetric
/// duplicates collapse to one edge.
inline Network build_network(const std::vector<Edge>& edge_list, std::size_t n) {
    detail::require(n > 0, "network must have at least one node");
    std::vector<Edge> edges;
    edges.reserve(edge_list.size());
    for (const auto& [a, b] : edge_list) {
        if (a >= n || b >= n) {
            throw ValidationError("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                                  ") has a node index out of range [0, " + std::to_string(n) + ")");
        }
        if (a == b) throw ValidationError("self-loop at node " + std::to_string(a));
        edges.emplace_back(std::min(a, b), std::max(a, b));
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    Network net;
    net.n = n;
    net.degrees.assign(n, 0);
    for (const auto& [a, b] : edges) {
        ++net.degrees[a];
        ++net.degrees[b];
    }
    net.edges = std::move(edges);
    net.mean_degree = 2.0 * static_cast<double>(net.edges.size()) / static_cast<double>(n);
    return net;
}

/// side x side grid with 4-neighbour adjacency; node (r, c) has index r*side + c.
inline Network lattice_network(std::size_t side) {
    detail::require(side >= 2, "lattice side must be at least 2");
    std::vector<Edge> edges;
    for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
            const std::size_t v = r * side + c;
            if (c + 1 < side) edges.emplace_back(v, v + 1);
            if (r + 1 < side) edges.emplace_back(v, v + side);
        }
    }
    return build_network(edges, side * side);
}

inline Network complete_network(std::size_t n) {
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(i, j);
    return build_network(edges, n);
}

/// Number of connected components (union-find).
inline std::size_t component_count(const Network& net) {
    std::vector<std::size_t> parent(net.n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    std::size_t components = net.n;
    for (const auto& [a, b] : net.edges) {
        const auto ra = find(a);
        const auto rb = find(b);
        if (ra != rb) {
            parent[ra] = rb;
            --components;
        }
    }
    return components;
}

/// (D - A) / mean degree, stored dense.
struct StandardizedLaplacian {
    Eigen::MatrixXd matrix;
    double mean_degree = 0.0;

    std::size_t size() const { return static_cast<std::size_t>(matrix.rows()); }
};

inline StandardizedLaplacian standardized_laplacian(const Network& net) {
    if (net.edges.empty()) {
        throw ValidationError("standardized Laplacian undefined for a network without edges");
    }
    const auto n = static_cast<Eigen::Index>(net.n);
    StandardizedLaplacian lap;
    lap.mean_degree = net.mean_degree;
    lap.matrix = Eigen::MatrixXd::Zero(n, n);
    const double scale = 1.0 / net.mean_degree;
    for (const auto& [a, b] : net.edges) {
        const auto i = static_cast<Eigen::Index>(a);
        const auto j = static_cast<Eigen::Index>(b);
        lap.matrix(i, j) -= scale;
        lap.matrix(j, i) -= scale;
        lap.matrix(i, i) += scale;
        lap.matrix(j, j) += scale;
    }
    return lap;
}

/// Eigenpairs of L_s. tau is sorted descending, so tau(n-1) is the null
/// eigenvalue; column i of U pairs with tau(i).
struct SpectralBasis {
    Eigen::VectorXd tau;
    Eigen::MatrixXd U;
    std::size_t zero_count = 0;

    std::size_t size() const { return static_cast<std::size_t>(tau.size()); }
    bool connected() const { return zero_count == 1; }

    /// (m+1)-th smallest eigenvalue, i.e. tau_{n-m} in 1-based descending order.
    double ascending(std::size_t m) const { return tau(tau.size() - 1 - static_cast<Eigen::Index>(m)); }

    /// Smallest nonzero eigenvalue (algebraic connectivity when connected).
    double algebraic_connectivity() const { return ascending(zero_count); }
};

inline constexpr double kZeroEigenTol = 1e-10;

inline SpectralBasis eigendecompose(const StandardizedLaplacian& lap) {
    const Eigen::MatrixXd& L = lap.matrix;
    detail::require(L.rows() == L.cols(), "Laplacian must be square");
    if (!L.isApprox(L.transpose(), 1e-12)) throw ValidationError("Laplacian is not symmetric");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(L);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("symmetric eigensolver did not converge");
    }
    const auto n = L.rows();
    SpectralBasis basis;
    basis.tau.resize(n);
    basis.U.resize(n, n);
    // Eigen returns ascending order.
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index src = n - 1 - i;
        double value = solver.eigenvalues()(src);
        if (std::abs(value) <= kZeroEigenTol) {
            value = 0.0;
            ++basis.zero_count;
        } else if (value < 0.0) {
            throw NumericalError("Laplacian has a negative eigenvalue " + std::to_string(value));
        }
        basis.tau(i) = value;
        Eigen::VectorXd v = solver.eigenvectors().col(src);
        Eigen::Index pivot = 0;
        v.cwiseAbs().maxCoeff(&pivot);
        if (v(pivot) < 0.0) v = -v;
        basis.U.col(i) = v;
    }
    return basis;
}

inline SpectralBasis eigendecompose(const Network& net) {
    return eigendecompose(standardized_laplacian(net));
}

using BasisPtr = std::shared_ptr<const SpectralBasis>;

inline BasisPtr make_basis(const Network& net) {
    return std::make_shared<const SpectralBasis>(eigendecompose(net));
}

/// Smallest m in [1, n-1] with tau_{n-m} >= 1/sqrt(m). Returns n when no
/// such m exists.
inline std::size_t effective_dimension(const SpectralBasis& basis) {
    if (basis.zero_count != 1) {
        throw ValidationError("effective dimension requires a connected network (found " +
                              std::to_string(basis.zero_count) + " components)");
    }
    const std::size_t n = basis.size();
    for (std::size_t m = 1; m < n; ++m) {
        if (basis.ascending(m) >= 1.0 / std::sqrt(static_cast<double>(m))) return m;
    }
    return n;
}

struct CohesionReport {
    bool cohesive = false;
    double threshold = 0.0;
    /// tau_i^2 beta_i^2 / ||beta||^2 per basis index.
    std::vector<double> ratios;
    /// threshold - max ratio; nonnegative iff cohesive (up to rounding).
    double margin = 0.0;
};

/// Cohesion on the network at rate delta: every tau_i^2 beta_i^2 / ||beta||^2
/// is at most n^{-2(1+delta)/3 - 1}, where beta = U^T v.
inline CohesionReport cohesion_check(const Eigen::VectorXd& v, const SpectralBasis& basis, double delta) {
    detail::require(static_cast<std::size_t>(v.size()) == basis.size(), "vector length must match the network");
    detail::require(delta > 0.0, "cohesion rate must be positive");
    const Eigen::VectorXd beta = basis.U.transpose() * v;
    const double norm2 = beta.squaredNorm();
    if (!(norm2 > 0.0)) throw ValidationError("cohesion undefined for the zero vector");

    const double n = static_cast<double>(basis.size());
    CohesionReport report;
    report.threshold = std::pow(n, -2.0 * (1.0 + delta) / 3.0 - 1.0);
    report.ratios.resize(basis.size());
    double worst = 0.0;
    for (Eigen::Index i = 0; i < beta.size(); ++i) {
        const double r = basis.tau(i) * basis.tau(i) * beta(i) * beta(i) / norm2;
        report.ratios[static_cast<std::size_t>(i)] = r;
        worst = std::max(worst, r);
    }
    report.margin = report.threshold - worst;
    // Relative slack absorbs the rounding of U^T v at the boundary.
    report.cohesive = worst <= report.threshold * (1.0 + 1e-9);
    return report;
}

/// Sample variance over squared mean; +inf when the mean is exactly zero.
inline double trivial_cohesion_ratio(const Eigen::VectorXd& v) {
    detail::require(v.size() >= 2, "need at least two entries");
    if (!(v.squaredNorm() > 0.0)) throw ValidationError("trivial cohesion undefined for the zero vector");
    const double mean = v.mean();
    const double var = (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
    if (mean == 0.0) return std::numeric_limits<double>::infinity();
    return var / (mean * mean);
}

} // namespace gnc
