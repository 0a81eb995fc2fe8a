#include "subdivfit/limit_surface.hpp"
#include "support/shapes.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace subdivfit;

namespace {

// Power-basis form of the uniform cubic B-spline, used as an independent oracle.
Eigen::Matrix4d power_basis()
{
    Eigen::Matrix4d m;
    m << 1, 4, 1, 0, -3, 0, 3, 0, 3, -6, 3, 0, -1, 3, -3, 1;
    return m / 6.0;
}

Eigen::RowVector4d monomials(double t, int d)
{
    if (d == 0) return {1, t, t * t, t * t * t};
    if (d == 1) return {0, 1, 2 * t, 3 * t * t};
    return {0, 0, 2, 6 * t};
}

constexpr double corner_u[4] = {0, 1, 1, 0};
constexpr double corner_v[4] = {0, 0, 1, 1};

SurfaceParam random_param(std::mt19937& rng, Index faces, double margin = 0.0)
{
    std::uniform_int_distribution<Index> f(0, faces - 1);
    std::uniform_real_distribution<double> t(margin, 1.0 - margin);
    return {f(rng), t(rng), t(rng)};
}

double rel(const Vec3& a, const Vec3& b)
{
    return (a - b).norm() / std::max(b.norm(), 1e-300);
}

} // namespace

TEST(LimitSurface, RegularGridMatchesClosedForm)
{
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> h(-1, 1);
    std::vector<double> z(144);
    for (auto& x : z) x = h(rng);
    const auto grid = testing_shapes::periodic_grid(12, 12, [&](int i, int j) { return z[i + 12 * j]; });
    const LimitSurface surf(grid);
    const auto M = power_basis();
    std::uniform_int_distribution<int> cell(1, 9);
    std::uniform_real_distribution<double> t(0, 1);
    for (int trial = 0; trial < 1000; ++trial) {
        const int i = cell(rng), j = cell(rng);
        const double u = t(rng), v = t(rng);
        const Index f = Index(i + 12 * j);
        ASSERT_TRUE(surf.is_regular(f));
        const auto jet = surf.evaluate(grid.vertices, {f, u, v});
        EXPECT_LE(jet.basis.entries.size(), 16u);
        const std::array<Vec3, 6> got{jet.position, jet.du, jet.dv, jet.duu, jet.duv, jet.dvv};
        const std::array<std::array<int, 2>, 6> orders{{{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}}};
        for (int k = 0; k < 6; ++k) {
            Vec3 expect;
            for (int c = 0; c < 3; ++c) {
                Eigen::Matrix4d G;
                for (int a = 0; a < 4; ++a) {
                    for (int b = 0; b < 4; ++b) G(a, b) = grid.vertices((i - 1 + a) + 12 * (j - 1 + b), c);
                }
                expect[c] = monomials(u, orders[k][0]) * M * G * M.transpose() * monomials(v, orders[k][1]).transpose();
            }
            EXPECT_LT((got[k] - expect).norm(), 1e-10) << "partial " << k;
        }
    }
}

TEST(LimitSurface, FlatGridFirstFundamentalIsIdentity)
{
    const auto grid = testing_shapes::periodic_grid(8, 8);
    const LimitSurface surf(grid);
    const auto jet = surf.evaluate(grid.vertices, {Index(3 + 8 * 3), 0.5, 0.5});
    EXPECT_LT((jet.position - Vec3(3.5, 3.5, 0)).norm(), 1e-14);
    EXPECT_LT((jet.du - Vec3(1, 0, 0)).norm(), 1e-14);
    EXPECT_LT((jet.dv - Vec3(0, 1, 0)).norm(), 1e-14);
}

TEST(LimitSurface, PartitionOfUnityOnRandomMeshes)
{
    std::mt19937 rng(7);
    for (const auto& mesh : testing_shapes::random_closed_meshes(2)) {
        const LimitSurface surf(mesh);
        for (int trial = 0; trial < 1000; ++trial) {
            const auto row = surf.basis(random_param(rng, mesh.num_faces()));
            EXPECT_NEAR(row.sum(kValue), 1.0, 1e-10);
            for (int p = 1; p < 6; ++p) EXPECT_NEAR(row.sum(Partial(p)), 0.0, 1e-10);
        }
    }
}

TEST(LimitSurface, TranslationInvariance)
{
    std::mt19937 rng(3);
    const auto mesh = testing_shapes::random_closed_meshes(9)[2];
    const LimitSurface surf(mesh);
    Positions moved = mesh.vertices;
    const Eigen::RowVector3d c(1.5, -4.0, 0.25);
    moved.rowwise() += c;
    for (int trial = 0; trial < 100; ++trial) {
        const auto p = random_param(rng, mesh.num_faces());
        const auto a = surf.evaluate(mesh.vertices, p);
        const auto b = surf.evaluate(moved, p);
        EXPECT_LT((b.position - a.position - c.transpose()).norm(), 1e-12);
        EXPECT_LT((b.du - a.du).norm(), 1e-10);
        EXPECT_LT((b.dvv - a.dvv).norm(), 1e-8);
    }
}

TEST(LimitSurface, FiniteDifferences)
{
    std::mt19937 rng(5);
    const double h = 1e-5;
    int checked = 0;
    for (const auto& mesh : testing_shapes::random_closed_meshes(4)) {
        const LimitSurface surf(mesh);
        const auto& V = mesh.vertices;
        for (int trial = 0; trial < 20; ++trial) {
            const auto p = random_param(rng, mesh.num_faces(), 0.05);
            const auto jet = surf.evaluate(V, p);
            auto at = [&](double du, double dv) { return surf.evaluate(V, {p.face, p.u + du, p.v + dv}); };
            const auto up = at(h, 0), um = at(-h, 0), vp = at(0, h), vm = at(0, -h);
            EXPECT_LE(rel(jet.du, (up.position - um.position) / (2 * h)), 1e-5);
            EXPECT_LE(rel(jet.dv, (vp.position - vm.position) / (2 * h)), 1e-5);
            EXPECT_LE(rel(jet.duu, (up.du - um.du) / (2 * h)), 1e-3);
            EXPECT_LE(rel(jet.duv, (vp.du - vm.du) / (2 * h)), 1e-3);
            EXPECT_LE(rel(jet.dvv, (vp.dv - vm.dv) / (2 * h)), 1e-3);
            ++checked;
        }
    }
    EXPECT_EQ(checked, 100);
}

TEST(LimitSurface, ContinuousAcrossFaceEdges)
{
    for (const auto& mesh : testing_shapes::random_closed_meshes(8)) {
        const LimitSurface surf(mesh);
        const auto& t = surf.topology();
        for (Index hf = 0; hf < t.num_halfedges(); ++hf) {
            const Index hg = t.twin(hf);
            const int i = int(hf % 4), j = int(hg % 4);
            for (double s : {0.1, 0.37, 0.5, 0.9}) {
                const SurfaceParam a{t.face(hf), corner_u[i] + s * (corner_u[(i + 1) % 4] - corner_u[i]),
                                     corner_v[i] + s * (corner_v[(i + 1) % 4] - corner_v[i])};
                const double r = 1.0 - s;
                const SurfaceParam b{t.face(hg), corner_u[j] + r * (corner_u[(j + 1) % 4] - corner_u[j]),
                                     corner_v[j] + r * (corner_v[(j + 1) % 4] - corner_v[j])};
                EXPECT_LT((surf.evaluate(mesh.vertices, a).position - surf.evaluate(mesh.vertices, b).position).norm(),
                          1e-12);
            }
        }
    }
}

TEST(LimitSurface, ExtraordinaryCornerUsesLimitStencil)
{
    for (const auto& mesh : testing_shapes::random_closed_meshes(6)) {
        const LimitSurface surf(mesh);
        const auto& t = surf.topology();
        for (Index v = 0; v < mesh.num_vertices(); ++v) {
            const Vec3 limit = surf.vertex_limit_basis(v).apply(mesh.vertices, kValue);
            for (Index h : t.outgoing(v)) {
                const int c = int(h % 4);
                const auto jet = surf.evaluate(mesh.vertices, {t.face(h), corner_u[c], corner_v[c]});
                EXPECT_LT((jet.position - limit).norm(), 1e-12);
                if (t.valence(v) != 4) EXPECT_TRUE(jet.at_extraordinary());
            }
            const auto jet = surf.evaluate(mesh.vertices, surf.vertex_param(v));
            EXPECT_LT((jet.position - limit).norm(), 1e-12);
        }
    }
}

TEST(LimitSurface, CappedJetHasFiniteTangents)
{
    const auto mesh = testing_shapes::sphere_quads(1);
    const LimitSurface surf(mesh);
    const auto jet = surf.evaluate(mesh.vertices, surf.vertex_param(0));
    EXPECT_TRUE(jet.at_extraordinary());
    EXPECT_GT(jet.du.cross(jet.dv).norm(), 0.0);
    EXPECT_GT(jet.normal().dot(jet.position), 0.0);
}

TEST(LimitSurface, AgreesWithSubdividedMesh)
{
    std::mt19937 rng(13);
    for (const auto& mesh : testing_shapes::random_closed_meshes(10)) {
        const LimitSurface coarse(mesh);
        const auto fine_mesh = testing_shapes::subdivided(mesh, 3);
        const LimitSurface fine(fine_mesh);
        for (int trial = 0; trial < 50; ++trial) {
            const auto p = random_param(rng, mesh.num_faces());
            SurfaceParam q = p;
            for (int level = 0; level < 3; ++level) {
                const int quad = quadrant_of(q.u, q.v);
                const auto off = quadrant_offset(quad);
                q = {4 * q.face + Index(quad), 2 * q.u - off[0], 2 * q.v - off[1]};
            }
            const auto a = coarse.evaluate(mesh.vertices, p);
            const auto b = fine.evaluate(fine_mesh.vertices, q);
            EXPECT_LT((a.position - b.position).norm(), 1e-8);
            if (!a.at_extraordinary()) EXPECT_LT((a.du - 8.0 * b.du).norm(), 1e-7 * (1 + a.du.norm()));
        }
    }
}

TEST(LimitSurface, Locality)
{
    std::mt19937 rng(17);
    // Every face touches exactly one extraordinary vertex of valence 3 or 5.
    const auto mesh = testing_shapes::subdivided(testing_shapes::tri_split_quads(testing_shapes::icosahedron()), 1);
    const LimitSurface surf(mesh);
    const auto& t = surf.topology();
    for (Index f = 0; f < mesh.num_faces(); ++f) {
        Index evs = 0, valence = 4;
        for (Index c = 0; c < 4; ++c) {
            const Index v = t.origin(t.face_halfedge(f, c));
            if (t.valence(v) != 4) {
                ++evs;
                valence = t.valence(v);
            }
        }
        for (int trial = 0; trial < 5; ++trial) {
            std::uniform_real_distribution<double> s(0, 1);
            const auto row = surf.basis({f, s(rng), s(rng)});
            if (evs == 0) {
                EXPECT_LE(row.entries.size(), 16u);
            } else if (evs == 1) {
                EXPECT_LE(row.entries.size(), 2 * valence + 8);
            }
        }
    }
}

TEST(LimitSurface, InvalidParams)
{
    const LimitSurface surf(testing_shapes::cube());
    EXPECT_THROW(surf.basis({6, 0.5, 0.5}), Error);
    EXPECT_THROW(surf.basis({0, 1.5, 0.5}), Error);
    EXPECT_THROW(surf.basis({0, 0.5, -0.1}), Error);
}

TEST(SampleSurface, CountsAndReevaluation)
{
    const auto cube = testing_shapes::cube();
    const LimitSurface surf(cube);
    const auto s = sample_surface(surf, cube.vertices, 2);
    EXPECT_EQ(s.params.size(), 24u);
    EXPECT_EQ(s.params[1].u, 0.75);
    EXPECT_EQ(s.params[1].v, 0.25);
    for (std::size_t i = 0; i < s.params.size(); ++i) {
        const Vec3 again = surf.evaluate(cube.vertices, s.params[i]).position;
        EXPECT_EQ(again, Vec3(s.positions.row(Eigen::Index(i)).transpose()));
    }
    EXPECT_EQ(sample_surface(surf, cube.vertices, 2).params, s.params);
    EXPECT_THROW(sample_surface(surf, cube.vertices, 1), Error);
}
