#pragma once

#include "subdivfit/mesh.hpp"
#include "subdivfit/subdivision.hpp"

#include <cmath>
#include <functional>
#include <array>
#include <map>
#include <numbers>
#include <random>

namespace testing_shapes {

using namespace subdivfit;

inline Positions rows(std::initializer_list<Vec3> pts)
{
    Positions p(Eigen::Index(pts.size()), 3);
    Eigen::Index i = 0;
    for (const auto& x : pts) p.row(i++) = x.transpose();
    return p;
}

/// Cube [-h,h]^3, faces counter-clockwise seen from outside.
inline QuadMesh cube(double h = 1.0)
{
    QuadMesh m;
    m.vertices = rows({{-h, -h, -h}, {h, -h, -h}, {h, h, -h}, {-h, h, -h},
                       {-h, -h, h}, {h, -h, h}, {h, h, h}, {-h, h, h}});
    m.faces = {{0, 3, 2, 1}, {4, 5, 6, 7}, {0, 1, 5, 4}, {2, 3, 7, 6}, {1, 2, 6, 5}, {0, 4, 7, 3}};
    return m;
}

inline TriMesh triangulated_cube()
{
    const QuadMesh q = cube();
    TriMesh t;
    t.vertices = q.vertices;
    for (const auto& f : q.faces) {
        t.faces.push_back({f[0], f[1], f[2]});
        t.faces.push_back({f[0], f[2], f[3]});
    }
    return t;
}

/// Cube [-1,1]^3 with every face cut into an n x n grid of planar quads.
inline QuadMesh cube_grid(int n)
{
    const QuadMesh c = cube();
    QuadMesh m;
    std::map<std::array<long, 3>, Index> ids;
    std::vector<Vec3> pts;
    auto vertex = [&](const Vec3& p) {
        std::array<long, 3> key;
        for (int k = 0; k < 3; ++k) key[std::size_t(k)] = std::lround((p[k] + 1.0) * n / 2.0);
        auto [it, fresh] = ids.emplace(key, Index(pts.size()));
        if (fresh) pts.push_back(p);
        return it->second;
    };
    for (const auto& f : c.faces) {
        const Vec3 o = c.vertex(f[0]), du = c.vertex(f[1]) - o, dv = c.vertex(f[3]) - o;
        auto at = [&](int i, int j) { return vertex(o + du * (double(i) / n) + dv * (double(j) / n)); };
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) m.faces.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)});
        }
    }
    m.vertices.resize(Eigen::Index(pts.size()), 3);
    for (std::size_t i = 0; i < pts.size(); ++i) m.vertices.row(Eigen::Index(i)) = pts[i].transpose();
    return m;
}

/// Splits each quad along its 0-2 diagonal.
inline TriMesh triangulate(const QuadMesh& q)
{
    TriMesh t;
    t.vertices = q.vertices;
    for (const auto& f : q.faces) {
        t.faces.push_back({f[0], f[1], f[2]});
        t.faces.push_back({f[0], f[2], f[3]});
    }
    return t;
}

inline TriMesh tetrahedron()
{
    TriMesh t;
    t.vertices = rows({{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}});
    t.faces = {{0, 1, 2}, {0, 2, 3}, {0, 3, 1}, {1, 3, 2}};
    return t;
}

inline TriMesh octahedron()
{
    TriMesh t;
    t.vertices = rows({{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}});
    t.faces = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4}, {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
    return t;
}

inline TriMesh icosahedron()
{
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    TriMesh t;
    t.vertices = rows({{-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0},
                       {0, -1, p}, {0, 1, p}, {0, -1, -p}, {0, 1, -p},
                       {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}});
    t.faces = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
               {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
               {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
    return t;
}

/// Loop-style midpoint split, optionally projected to the unit sphere.
inline TriMesh midpoint_split(const TriMesh& in, bool project)
{
    TriMesh out;
    std::vector<Vec3> pts;
    for (Index i = 0; i < in.num_vertices(); ++i) pts.push_back(in.vertex(i));
    std::map<std::pair<Index, Index>, Index> mid;
    auto midpoint = [&](Index a, Index b) {
        auto key = std::make_pair(std::min(a, b), std::max(a, b));
        auto it = mid.find(key);
        if (it != mid.end()) return it->second;
        pts.push_back(0.5 * (pts[a] + pts[b]));
        return mid[key] = Index(pts.size() - 1);
    };
    for (const auto& f : in.faces) {
        const Index a = midpoint(f[0], f[1]);
        const Index b = midpoint(f[1], f[2]);
        const Index c = midpoint(f[2], f[0]);
        out.faces.push_back({f[0], a, c});
        out.faces.push_back({f[1], b, a});
        out.faces.push_back({f[2], c, b});
        out.faces.push_back({a, b, c});
    }
    out.vertices.resize(Eigen::Index(pts.size()), 3);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        out.vertices.row(Eigen::Index(i)) = (project ? pts[i].normalized() : pts[i]).transpose();
    }
    return out;
}

inline TriMesh icosphere(int levels)
{
    TriMesh t = icosahedron();
    t.vertices.rowwise().normalize();
    for (int i = 0; i < levels; ++i) t = midpoint_split(t, true);
    return t;
}

/// Each triangle becomes three quads through its centroid and edge midpoints.
inline QuadMesh tri_split_quads(const TriMesh& in)
{
    QuadMesh out;
    std::vector<Vec3> pts;
    for (Index i = 0; i < in.num_vertices(); ++i) pts.push_back(in.vertex(i));
    std::map<std::pair<Index, Index>, Index> mid;
    auto midpoint = [&](Index a, Index b) {
        auto key = std::make_pair(std::min(a, b), std::max(a, b));
        auto it = mid.find(key);
        if (it != mid.end()) return it->second;
        pts.push_back(0.5 * (pts[a] + pts[b]));
        return mid[key] = Index(pts.size() - 1);
    };
    for (const auto& f : in.faces) {
        pts.push_back((pts[f[0]] + pts[f[1]] + pts[f[2]]) / 3.0);
        const Index c = Index(pts.size() - 1);
        for (int i = 0; i < 3; ++i) {
            out.faces.push_back({f[i], midpoint(f[i], f[(i + 1) % 3]), c, midpoint(f[(i + 2) % 3], f[i])});
        }
    }
    out.vertices.resize(Eigen::Index(pts.size()), 3);
    for (std::size_t i = 0; i < pts.size(); ++i) out.vertices.row(Eigen::Index(i)) = pts[i].transpose();
    return out;
}

inline QuadMesh subdivided(QuadMesh m, int levels)
{
    for (int i = 0; i < levels; ++i) m = cc_subdivide(m);
    return m;
}

/// Cube subdivided `levels` times with vertices projected to the unit sphere.
inline QuadMesh sphere_quads(int levels)
{
    QuadMesh m = subdivided(cube(), levels);
    m.vertices.rowwise().normalize();
    return m;
}

/// Doubly periodic nu x nv grid (torus topology). Vertex (i,j) has index
/// i + nu*j and position (i, j, z(i,j)).
inline QuadMesh periodic_grid(int nu, int nv, const std::function<double(int, int)>& z = {})
{
    QuadMesh m;
    m.vertices.resize(nu * nv, 3);
    for (int j = 0; j < nv; ++j) {
        for (int i = 0; i < nu; ++i) m.vertices.row(i + nu * j) << i, j, z ? z(i, j) : 0.0;
    }
    auto id = [&](int i, int j) { return Index(((i + nu) % nu) + nu * ((j + nv) % nv)); };
    for (int j = 0; j < nv; ++j) {
        for (int i = 0; i < nu; ++i) m.faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
    }
    return m;
}

/// Embedded torus with a regular nu x nv grid.
inline QuadMesh torus(int nu, int nv, double R = 2.0, double r = 0.7)
{
    QuadMesh m = periodic_grid(nu, nv);
    for (int j = 0; j < nv; ++j) {
        for (int i = 0; i < nu; ++i) {
            const double a = 2 * std::numbers::pi * i / nu;
            const double b = 2 * std::numbers::pi * j / nv;
            m.vertices.row(i + nu * j) << (R + r * std::cos(b)) * std::cos(a), (R + r * std::cos(b)) * std::sin(a),
                r * std::sin(b);
        }
    }
    return m;
}

inline void perturb(Positions& v, double amplitude, unsigned seed)
{
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> d(-amplitude, amplitude);
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        for (int c = 0; c < 3; ++c) v(i, c) += d(rng);
    }
}

/// Closed quad meshes with extraordinary vertices of valence 3 and 5, plus
/// faces carrying several extraordinary corners.
inline std::vector<QuadMesh> random_closed_meshes(unsigned seed)
{
    std::vector<QuadMesh> out;
    out.push_back(cube());
    out.push_back(subdivided(cube(), 1));
    out.push_back(tri_split_quads(icosahedron()));
    out.push_back(tri_split_quads(octahedron()));
    out.push_back(tri_split_quads(tetrahedron()));
    for (std::size_t i = 0; i < out.size(); ++i) perturb(out[i].vertices, 0.1, seed + unsigned(i));
    return out;
}

/// Fibonacci points on the unit sphere.
inline Positions fibonacci_sphere(int n)
{
    Positions p(n, 3);
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / n;
        const double r = std::sqrt(1.0 - z * z);
        p.row(i) << r * std::cos(golden * i), r * std::sin(golden * i), z;
    }
    return p;
}

} // namespace testing_shapes
