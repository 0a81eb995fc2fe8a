#pragma once

#include "subdivfit/fem/eigen.hpp"
#include "subdivfit/limit_surface.hpp"

#include <Eigen/Sparse>

#include <cmath>
#include <vector>

namespace subdivfit {

/// Sparse n x n matrix whose row v evaluates a coefficient field at the
/// limit point of control vertex v.
inline SparseMatrix limit_evaluation_matrix(const LimitSurface& surface)
{
    std::vector<Eigen::Triplet<double>> t;
    for (Index v = 0; v < surface.num_vertices(); ++v) {
        for (const auto& e : surface.vertex_limit_basis(v).entries) t.emplace_back(v, e.vertex, e.w[kValue]);
    }
    SparseMatrix L(surface.num_vertices(), surface.num_vertices());
    L.setFromTriplets(t.begin(), t.end());
    return L;
}

/// Wave-kernel signature: rows are points, columns energy levels.
struct WksDescriptor {
    Eigen::MatrixXd values;
    Eigen::VectorXd energies;
    double sigma = 0.0;
};

/// w_x(e) = C_e sum_k phi_k(x)^2 exp(-(e - log lambda_k)^2 / (2 sigma^2)),
/// C_e = 1 / sum_k exp(-(e - log lambda_k)^2 / (2 sigma^2)).
inline WksDescriptor wks_at_energies(
    const Eigen::VectorXd& lambdas,
    const Eigen::MatrixXd& phi,
    const Eigen::VectorXd& energies,
    double sigma)
{
    constexpr const char* mod = "analysis";
    require(lambdas.size() == phi.cols(), mod, "eigenvalue count does not match eigenfunction columns");
    require(sigma > 0.0, mod, "WKS width must be positive");
    require((lambdas.array() > 0.0).all(), mod, "WKS needs positive eigenvalues");
    const Eigen::ArrayXd logl = lambdas.array().log();
    const Eigen::MatrixXd sq = phi.array().square().matrix();
    WksDescriptor d;
    d.energies = energies;
    d.sigma = sigma;
    Eigen::MatrixXd weights(lambdas.size(), energies.size());
    for (Eigen::Index e = 0; e < energies.size(); ++e) {
        const Eigen::ArrayXd g = (-(energies[e] - logl).square() / (2.0 * sigma * sigma)).exp();
        weights.col(e) = (g / g.sum()).matrix();
    }
    d.values = sq * weights;
    return d;
}

/// WKS over the non-constant eigenpairs 2..K: E energies uniformly spaced on
/// [log lambda_2, log lambda_K], sigma = sigma_factor times the spacing.
/// `phi` holds eigenfunction values at the evaluation points (points x K).
inline WksDescriptor wks(
    const SpectralBasis& basis,
    const Eigen::MatrixXd& phi,
    int E = 100,
    double sigma_factor = 2.0)
{
    constexpr const char* mod = "analysis";
    const Eigen::Index K = basis.size();
    require(K >= 2, mod, "WKS needs at least two eigenpairs (the first is the constant mode)");
    require(E >= 1, mod, "WKS needs at least one energy level");
    require(phi.cols() == K, mod, "eigenfunction values must have one column per eigenpair");
    const Eigen::VectorXd lambdas = basis.values.tail(K - 1);
    const double lo = std::log(lambdas[0]), hi = std::log(lambdas[K - 2]);
    Eigen::VectorXd energies(E);
    const double spacing = E > 1 ? (hi - lo) / (E - 1) : 0.0;
    for (int e = 0; e < E; ++e) energies[e] = lo + spacing * e;
    // A single distinct level has no spacing; any positive width gives the
    // same normalized weights there.
    const double sigma = spacing > 0.0 ? sigma_factor * spacing : 1.0;
    return wks_at_energies(lambdas, phi.rightCols(K - 1), energies, sigma);
}

} // namespace subdivfit
