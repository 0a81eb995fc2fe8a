#pragma once

#include "subdivfit/analysis/wks.hpp"
#include "subdivfit/fem/laplace.hpp"
#include "subdivfit/subdivision.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <string>
#include <vector>

namespace subdivfit {

struct GeodesicField {
    Eigen::VectorXd chi; // coefficients in the limit basis, min over evaluation samples = 0
    Index source = 0;
    double t = 0.0;      // diffusion time
    double h = 0.0;      // mean edge length of the once-subdivided mesh
    int sample_level = 1;
    std::size_t flagged_nodes = 0;
};

/// Matrix mapping coefficients to values at the limit points of the
/// vertices of M^level.
inline SparseMatrix refined_limit_evaluation(const QuadMesh& mesh, int level)
{
    const auto refined = refine(mesh, level);
    return limit_evaluation_matrix(LimitSurface(refined.mesh)) * refined.matrix;
}

/// Mean edge length of a quad mesh.
inline double mean_edge_length(const QuadMesh& mesh)
{
    const auto t = build_halfedge(mesh.faces, mesh.num_vertices());
    double sum = 0.0;
    for (Index e = 0; e < t.num_edges(); ++e) {
        const auto [a, b] = t.edge_vertices(e);
        sum += (mesh.vertex(a) - mesh.vertex(b)).norm();
    }
    return sum / t.num_edges();
}

/// Solves D1 x = b on a closed surface: b is projected onto the range
/// (mean zero), x[pin] is fixed to 0, then x is shifted to zero mean.
inline Eigen::VectorXd solve_pinned_laplacian(const SparseMatrix& D1, Eigen::VectorXd b, Index pin)
{
    const Eigen::Index n = D1.rows();
    b.array() -= b.mean();
    std::vector<Eigen::Triplet<double>> t;
    for (Eigen::Index r = 0; r < D1.outerSize(); ++r) {
        if (r == Eigen::Index(pin)) continue;
        for (SparseMatrix::InnerIterator it(D1, r); it; ++it) {
            if (it.col() == Eigen::Index(pin)) continue;
            t.emplace_back(r - (r > Eigen::Index(pin)), it.col() - (it.col() > Eigen::Index(pin)), it.value());
        }
    }
    SparseMatrix R(n - 1, n - 1);
    R.setFromTriplets(t.begin(), t.end());
    Eigen::VectorXd rb(n - 1);
    for (Eigen::Index i = 0, k = 0; i < n; ++i) {
        if (i != Eigen::Index(pin)) rb[k++] = b[i];
    }
    Eigen::SimplicialLDLT<SparseMatrix> solver(R);
    require(solver.info() == Eigen::Success, "analysis", "pinned stiffness factorization failed");
    const Eigen::VectorXd rx = solver.solve(rb);
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0, k = 0; i < n; ++i) x[i] = i == Eigen::Index(pin) ? 0.0 : rx[k++];
    x.array() -= x.mean();
    return x;
}

/// Default heat time factor. The initial datum Phi_source spans about two
/// control rings, so diffusion has to outrun that width before the gradient
/// directions are reliable away from the source.
inline constexpr double kDefaultHeatTimeFactor = 8.0;

/// Heat-method geodesic distance from control vertex `source`:
/// (D0 + t D1) f = D0 e_source (one implicit step from Phi_source) with
/// t = m_factor h^2, X = -grad f / |grad f| at every quadrature node, then
/// D1 chi = b with b_i = int <grad Phi_i, X>.
inline GeodesicField heat_geodesic(
    const QuadMesh& mesh,
    const FemDiscretization& disc,
    const OperatorMatrices& op,
    Index source,
    double m_factor = kDefaultHeatTimeFactor,
    int sample_level = 1)
{
    constexpr const char* mod = "analysis";
    const Index n = mesh.num_vertices();
    require(source < n, mod, "source vertex " + std::to_string(source) + " out of range (n = " + std::to_string(n) + ")");
    require(m_factor > 0.0, mod, "heat time factor must be positive");
    require(sample_level >= 0, mod, "sample level must be non-negative");

    GeodesicField out;
    out.source = source;
    out.sample_level = sample_level;
    const auto level1 = refine(mesh, 1);
    out.h = mean_edge_length(level1.mesh);
    out.t = m_factor * out.h * out.h;

    const SparseMatrix A = op.D0 + out.t * op.D1;
    Eigen::SimplicialLDLT<SparseMatrix> heat(A);
    require(heat.info() == Eigen::Success, mod, "heat operator factorization failed");
    const Eigen::VectorXd f = heat.solve(Eigen::VectorXd(op.D0.row(Eigen::Index(source)).transpose()));

    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    for (const FemNode& node : disc.nodes) {
        const Vec2 g = node.field_gradient(f);
        const double norm = std::sqrt(std::max(0.0, g.dot(node.G_inv * g)));
        if (!(norm >= 1e-12)) {
            ++out.flagged_nodes;
            continue;
        }
        // <grad Phi_i, X> = -grad_i^T G^-1 grad f / |grad f|
        const Vec2 x = -(node.G_inv * g) / norm;
        for (std::size_t i = 0; i < node.support.size(); ++i) {
            b[node.support[i]] += node.weight * node.grad.row(Eigen::Index(i)).dot(x);
        }
    }
    out.chi = solve_pinned_laplacian(op.D1, b, source);
    // Limit points of M^k contain those of M^j for j < k, so the field stays
    // non-negative on every coarser sample set as well.
    out.chi.array() -= (refined_limit_evaluation(mesh, sample_level) * out.chi).minCoeff();
    return out;
}

inline GeodesicField heat_geodesic(
    const QuadMesh& mesh,
    Index source,
    double m_factor = kDefaultHeatTimeFactor,
    int g = 3,
    int sample_level = 1)
{
    const FemDiscretization disc = discretize(LimitSurface(mesh), mesh.vertices, g);
    return heat_geodesic(mesh, disc, assemble(disc), source, m_factor, sample_level);
}

} // namespace subdivfit
