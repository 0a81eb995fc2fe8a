#include "subdivfit/init/init.hpp"
#include "support/shapes.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

using namespace subdivfit;
namespace ts = testing_shapes;

TEST(Qem, TargetEqualToVertexCountLeavesMeshUnchanged)
{
    const TriMesh m = ts::icosphere(1);
    const QemResult r = qem_collapse(m, m.num_vertices());
    EXPECT_EQ(r.collapses, 0u);
    EXPECT_EQ(r.mesh.faces, m.faces);
    EXPECT_EQ(r.mesh.vertices, m.vertices);
    EXPECT_EQ(r.total_error, 0.0);
}

TEST(Qem, DensePlanarCubeCollapsesToCornersWithZeroError)
{
    const TriMesh m = ts::triangulate(ts::cube_grid(4));
    ASSERT_EQ(m.num_vertices(), 98u);
    const QemResult r = qem_collapse(m, 8);
    ASSERT_EQ(r.mesh.num_vertices(), 8u);
    EXPECT_LE(r.total_error, 1e-10);
    for (Index v = 0; v < 8; ++v) {
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(std::abs(r.mesh.vertices(v, k)), 1.0, 1e-8);
    }
    EXPECT_EQ(r.warnings, 0u);
}

TEST(Qem, IcosphereStaysOnSphere)
{
    const TriMesh m = ts::icosphere(3);
    ASSERT_EQ(m.num_vertices(), 642u);
    const QemResult r = qem_collapse(m, 162);
    EXPECT_LE(r.mesh.num_vertices(), 162u);
    double worst = 0.0;
    for (Index v = 0; v < r.mesh.num_vertices(); ++v) {
        worst = std::max(worst, std::abs(r.mesh.vertex(v).norm() - 1.0));
    }
    EXPECT_LE(worst, 0.01);
    EXPECT_NO_THROW(validate(r.mesh));
}

TEST(Qem, ErrorIsMonotoneInCollapses)
{
    TriMesh m = ts::icosphere(2);
    ts::perturb(m.vertices, 0.02, 5);
    const QemResult r = qem_collapse(m, 30);
    ASSERT_EQ(r.error_history.size(), r.collapses);
    for (std::size_t i = 1; i < r.error_history.size(); ++i) {
        EXPECT_GE(r.error_history[i], r.error_history[i - 1]);
    }
    EXPECT_DOUBLE_EQ(r.error_history.back(), r.total_error);
}

TEST(Qem, UnreachableTargetReturnsValidMeshWithWarnings)
{
    const TriMesh m = ts::icosahedron();
    const QemResult r = qem_collapse(m, 4);
    EXPECT_NO_THROW(validate(r.mesh));
    EXPECT_GE(r.mesh.num_vertices(), 4u);
    EXPECT_EQ(r.warnings > 0, r.mesh.num_vertices() > 4u);
}

TEST(Qem, RejectsTargetBelowFour)
{
    EXPECT_THROW(qem_collapse(ts::icosphere(1), 3), Error);
}

TEST(PairingCost, SquareDiagonalIsFree)
{
    const TriMesh m = ts::triangulated_cube();
    const auto t = build_halfedge(m.faces, m.num_vertices());
    int zero = 0, infinite = 0;
    for (Index e = 0; e < t.num_edges(); ++e) {
        const EdgePairingCost c = pairing_cost(m, t, e);
        if (c.finite()) {
            EXPECT_NEAR(c.cost, 0.0, 1e-20);
            for (double a : c.alpha) EXPECT_NEAR(a, std::numbers::pi / 2, 1e-12);
            EXPECT_NEAR(c.eta, 0.0, 1e-12);
            ++zero;
        } else {
            EXPECT_NEAR(c.eta, std::numbers::pi / 2, 1e-12);
            ++infinite;
        }
    }
    EXPECT_EQ(zero, 6);
    EXPECT_EQ(infinite, 12);
}

TEST(PairingCost, TetrahedronEdgesAreInfinite)
{
    const TriMesh m = ts::tetrahedron();
    const auto t = build_halfedge(m.faces, m.num_vertices());
    for (Index e = 0; e < t.num_edges(); ++e) {
        const EdgePairingCost c = pairing_cost(m, t, e);
        EXPECT_TRUE(std::isinf(c.cost));
        EXPECT_NEAR(c.eta, std::numbers::pi - std::acos(1.0 / 3.0), 1e-12);
        EXPECT_NEAR(c.eta, 1.9106, 1e-4);
    }
}

TEST(PairingCost, SkewedRhombus)
{
    const double h = std::sqrt(3.0) / 2.0;
    const Vec3 p0(0, 0, 0), p1(1, 0, 0), p2(1.5, h, 0), p3(0.5, h, 0);
    const EdgePairingCost c = quad_pairing_cost(p0, p2, p3, p1);
    const double pi = std::numbers::pi;
    EXPECT_NEAR(c.alpha[0], pi / 3, 1e-12);
    EXPECT_NEAR(c.alpha[1], 2 * pi / 3, 1e-12);
    EXPECT_NEAR(c.alpha[2], pi / 3, 1e-12);
    EXPECT_NEAR(c.alpha[3], 2 * pi / 3, 1e-12);
    EXPECT_NEAR(c.eta, 0.0, 1e-12);
    EXPECT_NEAR(c.cost, (pi / 6) * (pi / 6), 1e-12);
    EXPECT_NEAR(c.cost, 0.2742, 1e-4);
}

TEST(PairingCost, ReflexQuadIsInfinite)
{
    // Arrowhead: the merged corner at a spans 3pi/2.
    const Vec3 a(0, 0, 0), b(1, 0, 0), c(-1, 1, 0), d(-1, -1, 0);
    EXPECT_TRUE(std::isinf(quad_pairing_cost(a, b, c, d).cost));
}

TEST(TriToQuad, TriangulatedCubeRecoversCube)
{
    const QuadConversion q = tri_to_quad(ts::triangulated_cube());
    EXPECT_EQ(q.mesh.num_faces(), 6u);
    EXPECT_EQ(q.mesh.num_vertices(), 8u);
    EXPECT_NEAR(q.total_cost, 0.0, 1e-20);
    EXPECT_FALSE(q.split_fallback);
    EXPECT_EQ(q.matched_pairs, 6u);
    EXPECT_EQ(q.unmatched_triangles, 0u);
}

TEST(TriToQuad, TetrahedronFallsBackToSplit)
{
    const QuadConversion q = tri_to_quad(ts::tetrahedron());
    EXPECT_TRUE(q.split_fallback);
    EXPECT_EQ(q.mesh.num_faces(), 12u);
    EXPECT_EQ(q.mesh.num_vertices(), 14u);
    EXPECT_EQ(q.matched_pairs, 0u);
    EXPECT_EQ(q.unmatched_triangles, 4u);
    EXPECT_EQ(q.mesh.num_faces(), q.matched_pairs + 3 * q.unmatched_triangles);
    EXPECT_NO_THROW(validate(q.mesh));
}

TEST(TriToQuad, TriangulatedTorusRecoversItsQuads)
{
    const QuadMesh grid = ts::torus(12, 8);
    const QuadConversion q = tri_to_quad(ts::triangulate(grid));
    ASSERT_FALSE(q.split_fallback);
    ASSERT_EQ(q.mesh.num_faces(), grid.num_faces());
    std::set<std::set<Index>> expected;
    for (const auto& f : grid.faces) expected.insert({f.begin(), f.end()});
    for (const auto& f : q.mesh.faces) EXPECT_TRUE(expected.count({f.begin(), f.end()}));
}

TEST(TriToQuad, PerfectMatchingUsesOnlyFiniteEdges)
{
    TriMesh m = ts::icosphere(2);
    ts::perturb(m.vertices, 0.01, 9);
    const QuadConversion q = tri_to_quad(m);
    const auto t = build_halfedge(m.faces, m.num_vertices());
    for (Index e : q.merged_edges) EXPECT_TRUE(pairing_cost(m, t, e).finite());
    EXPECT_TRUE(std::isfinite(q.total_cost));
    if (!q.split_fallback) {
        EXPECT_EQ(q.mesh.num_faces(), q.matched_pairs);
        EXPECT_EQ(q.mesh.num_vertices(), m.num_vertices());
    }
    EXPECT_NO_THROW(validate(q.mesh));
}

TEST(TriToQuad, IcosahedronPairsCompletely)
{
    const QuadConversion q = tri_to_quad(ts::icosahedron());
    EXPECT_FALSE(q.split_fallback);
    EXPECT_EQ(q.mesh.num_faces(), 10u);
}

TEST(TriToQuad, AugmentingPathsCompleteAGreedyDeadEnd)
{
    // On a triangulated sphere the greedy pass alone typically strands some
    // triangles; the conversion must still pair every one.
    const QuadConversion q = tri_to_quad(ts::icosphere(3));
    EXPECT_FALSE(q.split_fallback);
    EXPECT_EQ(q.unmatched_triangles, 0u);
    EXPECT_EQ(q.mesh.num_faces() * 2, ts::icosphere(3).num_faces());
}

TEST(InitPipeline, DenseCubeBecomesCube)
{
    const InitResult r = initialize_control_mesh(ts::triangulate(ts::cube_grid(5)), 8);
    EXPECT_EQ(r.mesh.num_vertices(), 8u);
    EXPECT_EQ(r.mesh.num_faces(), 6u);
    EXPECT_NEAR(r.conversion.total_cost, 0.0, 1e-12);
}
