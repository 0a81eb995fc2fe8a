#pragma once

#include "subdivfit/fem/quadrature.hpp"
#include "subdivfit/limit_surface.hpp"
#include "subdivfit/mesh.hpp"
#include "subdivfit/parallel.hpp"
#include "subdivfit/subdivision.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace subdivfit {

/// G = J^T J with J = [d_u Phi, d_v Phi].
inline Mat2 first_fundamental(const SurfaceJet& jet)
{
    Mat2 G;
    G(0, 0) = jet.du.dot(jet.du);
    G(0, 1) = G(1, 0) = jet.du.dot(jet.dv);
    G(1, 1) = jet.dv.dot(jet.dv);
    return G;
}

/// Quadrature node of the pulled-back integrals: basis values and reference
/// gradients on the face support, area element and inverse metric.
struct FemNode {
    Index face = 0;
    double weight = 0.0; // rule weight times sqrt(det G)
    Mat2 G_inv;
    std::vector<Index> support;
    Eigen::VectorXd phi;
    Eigen::Matrix<double, Eigen::Dynamic, 2> grad;

    /// Reference gradient (d_u, d_v) of the field with coefficients g.
    Vec2 field_gradient(const Eigen::VectorXd& g) const
    {
        Vec2 out = Vec2::Zero();
        for (std::size_t i = 0; i < support.size(); ++i) out += g[support[i]] * grad.row(Eigen::Index(i)).transpose();
        return out;
    }
};

/// All quadrature nodes of a surface, face-major then rule order.
struct FemDiscretization {
    QuadratureRule rule;
    std::vector<FemNode> nodes;
    Index num_vertices = 0;
};

inline FemDiscretization discretize(const LimitSurface& surface, const Positions& V, int g = 3)
{
    constexpr const char* mod = "fem-laplace";
    require(
        V.rows() == Eigen::Index(surface.num_vertices()),
        mod,
        "position count does not match the control mesh");
    FemDiscretization d;
    d.rule = tensor_gauss_rule(g);
    d.num_vertices = surface.num_vertices();
    const std::size_t per_face = d.rule.size();
    d.nodes.resize(std::size_t(surface.num_faces()) * per_face);
    const double diag = bounding_box_diagonal(V);
    const double det_floor = 1e-14 * std::pow(diag > 0.0 ? diag : 1.0, 4);

    parallel_for(0, surface.num_faces(), [&](std::size_t f) {
        for (std::size_t k = 0; k < per_face; ++k) {
            const Vec2 uv = d.rule.nodes[k];
            const SurfaceJet jet = surface.evaluate(V, {Index(f), uv[0], uv[1]});
            const Mat2 G = first_fundamental(jet);
            const double det = G.determinant();
            if (!(det > det_floor)) {
                throw Error(
                    mod,
                    "degenerate first fundamental form (det G = " + std::to_string(det) + ") on face " +
                        std::to_string(f));
            }
            FemNode& node = d.nodes[f * per_face + k];
            node.face = Index(f);
            node.weight = d.rule.weights[k] * std::sqrt(det);
            node.G_inv = G.inverse();
            const auto& entries = jet.basis.entries;
            node.support.resize(entries.size());
            node.phi.resize(Eigen::Index(entries.size()));
            node.grad.resize(Eigen::Index(entries.size()), 2);
            for (std::size_t i = 0; i < entries.size(); ++i) {
                node.support[i] = entries[i].vertex;
                node.phi[Eigen::Index(i)] = entries[i].w[kValue];
                node.grad(Eigen::Index(i), 0) = entries[i].w[kDu];
                node.grad(Eigen::Index(i), 1) = entries[i].w[kDv];
            }
        }
    });
    return d;
}

/// Mass D0 and stiffness D1 of the Laplace-Beltrami operator in the limit basis.
struct OperatorMatrices {
    SparseMatrix D0;
    SparseMatrix D1;
};

inline OperatorMatrices assemble(const FemDiscretization& d)
{
    const std::size_t per_face = d.rule.size();
    const std::size_t num_faces = per_face ? d.nodes.size() / per_face : 0;
    using Triplet = Eigen::Triplet<double>;
    std::vector<std::vector<Triplet>> mass(num_faces), stiff(num_faces);

    parallel_for(0, num_faces, [&](std::size_t f) {
        // Union of the supports of this face's nodes.
        std::vector<Index> local;
        for (std::size_t k = 0; k < per_face; ++k) {
            const auto& s = d.nodes[f * per_face + k].support;
            local.insert(local.end(), s.begin(), s.end());
        }
        std::sort(local.begin(), local.end());
        local.erase(std::unique(local.begin(), local.end()), local.end());
        const Eigen::Index m = Eigen::Index(local.size());
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m, m), K = Eigen::MatrixXd::Zero(m, m);
        for (std::size_t k = 0; k < per_face; ++k) {
            const FemNode& node = d.nodes[f * per_face + k];
            Eigen::VectorXd phi = Eigen::VectorXd::Zero(m);
            Eigen::Matrix<double, Eigen::Dynamic, 2> grad = Eigen::Matrix<double, Eigen::Dynamic, 2>::Zero(m, 2);
            for (std::size_t i = 0; i < node.support.size(); ++i) {
                const auto pos = Eigen::Index(
                    std::lower_bound(local.begin(), local.end(), node.support[i]) - local.begin());
                phi[pos] += node.phi[Eigen::Index(i)];
                grad.row(pos) += node.grad.row(Eigen::Index(i));
            }
            M.noalias() += node.weight * phi * phi.transpose();
            K.noalias() += node.weight * grad * node.G_inv * grad.transpose();
        }
        // Exact symmetry regardless of rounding in the products above.
        M = 0.5 * (M + M.transpose()).eval();
        K = 0.5 * (K + K.transpose()).eval();
        for (Eigen::Index j = 0; j < m; ++j) {
            for (Eigen::Index i = 0; i < m; ++i) {
                mass[f].emplace_back(local[std::size_t(i)], local[std::size_t(j)], M(i, j));
                stiff[f].emplace_back(local[std::size_t(i)], local[std::size_t(j)], K(i, j));
            }
        }
    });

    // Contributions are summed in face order, independent of thread count.
    auto build = [&](std::vector<std::vector<Triplet>>& parts) {
        std::vector<Triplet> all;
        for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
        SparseMatrix A(d.num_vertices, d.num_vertices);
        A.setFromTriplets(all.begin(), all.end());
        return A;
    };
    OperatorMatrices out;
    out.D0 = build(mass);
    out.D1 = build(stiff);
    return out;
}

/// Assembles D0 and D1 with a g x g Gauss rule per face.
inline OperatorMatrices assemble(const LimitSurface& surface, const Positions& V, int g = 3)
{
    return assemble(discretize(surface, V, g));
}

inline OperatorMatrices assemble(const QuadMesh& mesh, int g = 3)
{
    return assemble(LimitSurface(mesh), mesh.vertices, g);
}

} // namespace subdivfit
