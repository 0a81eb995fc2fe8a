#pragma once

#include "subdivfit/core.hpp"
#include "subdivfit/halfedge.hpp"
#include "subdivfit/mesh.hpp"

#include <Eigen/SparseCore>

#include <vector>

namespace subdivfit {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// One Catmull-Clark step expressed on topology only.
///
/// New vertices are ordered [vertex points | edge points | face points], so
/// vertex i of the coarse mesh keeps index i. Child q of face f has index
/// 4f+q and covers the quadrant of f's reference square with origin
/// (q==1||q==2, q>=2) / 2; its own (u,v) frame is the parent frame scaled by 2.
struct SubdivisionStep {
    std::vector<QuadMesh::Face> faces;
    SparseMatrix matrix; // (n + e + m) x n
};

/// Quadrant origin (in halves) of child q.
inline std::array<int, 2> quadrant_offset(int q)
{
    return {(q == 1 || q == 2) ? 1 : 0, q >= 2 ? 1 : 0};
}

inline int quadrant_of(double u, double v)
{
    const bool right = u >= 0.5;
    const bool top = v >= 0.5;
    if (!top) return right ? 1 : 0;
    return right ? 2 : 3;
}

/// Child face of corner q from [vertex point, next edge point, face point,
/// previous edge point], rotated so the child's corner 0 sits at the
/// quadrant's parametric origin.
inline QuadMesh::Face child_face(int q, Index vertex_pt, Index next_edge_pt, Index face_pt, Index prev_edge_pt)
{
    const std::array<Index, 4> base{vertex_pt, next_edge_pt, face_pt, prev_edge_pt};
    QuadMesh::Face out;
    for (int k = 0; k < 4; ++k) out[k] = base[(k - q + 4) % 4];
    return out;
}

/// Builds the subdivision matrix and child faces for a closed quad topology.
/// Vertex rule: (F + 2R + (N-3)P) / N.
inline SubdivisionStep subdivision_step(const HalfedgeTopology& t)
{
    require(t.degree() == 4, "subdiv-eval", "Catmull-Clark subdivision needs a quad topology");
    const Index n = t.num_vertices();
    const Index e = t.num_edges();
    const Index m = t.num_faces();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(std::size_t(n) * 20 + std::size_t(e) * 8 + std::size_t(m) * 4);

    for (Index v = 0; v < n; ++v) {
        const double N = t.valence(v);
        trips.emplace_back(v, v, (N - 3.0) / N);
        for (Index h : t.outgoing(v)) {
            const Index f = t.face(h);
            for (Index c = 0; c < 4; ++c) {
                trips.emplace_back(v, t.origin(t.face_halfedge(f, c)), 0.25 / (N * N));
            }
            trips.emplace_back(v, v, 1.0 / (N * N));
            trips.emplace_back(v, t.target(h), 1.0 / (N * N));
        }
    }
    for (Index ei = 0; ei < e; ++ei) {
        const Index row = n + ei;
        const auto [a, b] = t.edge_vertices(ei);
        trips.emplace_back(row, a, 0.25);
        trips.emplace_back(row, b, 0.25);
        for (Index f : t.edge_faces(ei)) {
            for (Index c = 0; c < 4; ++c) trips.emplace_back(row, t.origin(t.face_halfedge(f, c)), 1.0 / 16.0);
        }
    }
    for (Index f = 0; f < m; ++f) {
        for (Index c = 0; c < 4; ++c) trips.emplace_back(n + e + f, t.origin(t.face_halfedge(f, c)), 0.25);
    }

    SubdivisionStep step;
    step.matrix.resize(n + e + m, n);
    step.matrix.setFromTriplets(trips.begin(), trips.end());
    step.faces.reserve(std::size_t(m) * 4);
    for (Index f = 0; f < m; ++f) {
        for (int q = 0; q < 4; ++q) {
            const Index h = t.face_halfedge(f, Index(q));
            step.faces.push_back(child_face(q, t.origin(h), n + t.edge(h), n + e + f, n + t.edge(t.prev(h))));
        }
    }
    return step;
}

inline SparseMatrix subdivision_matrix(const HalfedgeTopology& t)
{
    return subdivision_step(t).matrix;
}

/// One Catmull-Clark step of a closed quad mesh.
inline QuadMesh cc_subdivide(const QuadMesh& mesh)
{
    const auto topo = HalfedgeTopology::build<4>(mesh.faces, mesh.num_vertices());
    auto step = subdivision_step(topo);
    QuadMesh out;
    out.faces = std::move(step.faces);
    out.vertices = step.matrix * mesh.vertices;
    return out;
}

/// Refined topology M^k together with the composite matrix A_k = Â_k ... Â_1.
struct RefinedLevel {
    QuadMesh mesh;
    SparseMatrix matrix;
};

inline RefinedLevel refine(const QuadMesh& mesh, int k)
{
    require(k >= 0, "subdiv-eval", "refinement level must be non-negative");
    RefinedLevel level;
    level.mesh = mesh;
    level.matrix.resize(mesh.num_vertices(), mesh.num_vertices());
    level.matrix.setIdentity();
    for (int i = 0; i < k; ++i) {
        const auto topo = HalfedgeTopology::build<4>(level.mesh.faces, level.mesh.num_vertices());
        auto step = subdivision_step(topo);
        level.mesh.faces = std::move(step.faces);
        level.mesh.vertices = step.matrix * level.mesh.vertices;
        level.matrix = SparseMatrix(step.matrix * level.matrix);
    }
    return level;
}

/// Projects per-vertex coefficients onto M^k with the same weights that
/// refine the control vertices.
inline std::pair<QuadMesh, Eigen::MatrixXd> refine_for_visualization(
    const QuadMesh& mesh,
    const Eigen::MatrixXd& coefficients,
    int k)
{
    require(
        coefficients.rows() == Eigen::Index(mesh.num_vertices()),
        "subdiv-eval",
        "field has " + std::to_string(coefficients.rows()) + " rows for " + std::to_string(mesh.num_vertices()) +
            " control vertices");
    auto level = refine(mesh, k);
    Eigen::MatrixXd refined = level.matrix * coefficients;
    return {std::move(level.mesh), std::move(refined)};
}

} // namespace subdivfit
