#pragma once

#include "subdivfit/mesh.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <queue>
#include <tuple>
#include <vector>

namespace subdivfit {

using Quadric = Eigen::Matrix4d;

struct QemResult {
    TriMesh mesh;
    double total_error = 0.0;          // sum of accepted collapse costs
    std::vector<double> error_history; // cumulative error after each collapse
    std::size_t collapses = 0;
    std::size_t warnings = 0;          // collapses skipped while the target was still unmet
};

/// Plane quadric K_p = p p^T of a triangle, p = (n, -n.x0) with unit normal n.
inline Quadric plane_quadric(const Vec3& a, const Vec3& b, const Vec3& c)
{
    const Vec3 n = (b - a).cross(c - a);
    const double len = n.norm();
    if (len == 0.0) return Quadric::Zero();
    Eigen::Vector4d p;
    p << n / len, -(n / len).dot(a);
    return p * p.transpose();
}

inline double quadric_error(const Quadric& Q, const Vec3& x)
{
    Eigen::Vector4d h;
    h << x, 1.0;
    return std::max(0.0, h.dot(Q * h));
}

/// Minimizer of the quadric, or the edge midpoint when its 3x3 block is
/// singular relative to its scale.
inline Vec3 quadric_placement(const Quadric& Q, const Vec3& a, const Vec3& b)
{
    const Mat3 A = Q.topLeftCorner<3, 3>();
    const double scale = A.norm();
    if (scale > 0.0 && std::abs(A.determinant()) >= 1e-12 * scale * scale * scale) {
        const Vec3 x = A.fullPivLu().solve(-Q.topRightCorner<3, 1>());
        if (x.allFinite()) return x;
    }
    return 0.5 * (a + b);
}

namespace qem_detail {

struct State {
    std::vector<Vec3> pos;
    std::vector<Quadric> Q;
    std::vector<std::array<Index, 3>> faces;
    std::vector<char> face_alive;
    std::vector<char> vertex_alive;
    std::vector<std::vector<Index>> incident;
    std::vector<std::uint64_t> version;
    double scale = 1.0;

    std::vector<Index> neighbors(Index v) const
    {
        std::vector<Index> out;
        for (Index f : incident[v]) {
            for (Index w : faces[f]) {
                if (w != v) out.push_back(w);
            }
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    static bool contains(const std::array<Index, 3>& f, Index v)
    {
        return f[0] == v || f[1] == v || f[2] == v;
    }

    Vec3 normal(const std::array<Index, 3>& f, Index moved, const Vec3& p) const
    {
        auto at = [&](Index w) { return w == moved ? p : pos[w]; };
        return (at(f[1]) - at(f[0])).cross(at(f[2]) - at(f[0]));
    }

    // Manifoldness (link condition) and normal-flip test for collapsing b into a at p.
    bool collapse_allowed(Index a, Index b, const Vec3& p) const
    {
        const auto na = neighbors(a);
        const auto nb = neighbors(b);
        if (!std::binary_search(na.begin(), na.end(), b)) return false;
        std::vector<Index> common;
        std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(), std::back_inserter(common));
        if (common.size() != 2) return false;
        for (Index v : {a, b}) {
            for (Index f : incident[v]) {
                const auto& face = faces[f];
                if (contains(face, a) && contains(face, b)) continue;
                const Vec3 before = normal(face, v, pos[v]);
                const Vec3 after = normal(face, v, p);
                if (after.norm() <= 1e-14 * scale * scale) return false;
                if (before.dot(after) <= 0.0) return false;
            }
        }
        return true;
    }

    void collapse(Index a, Index b, const Vec3& p)
    {
        for (Index f : incident[b]) {
            auto& face = faces[f];
            if (contains(face, a)) {
                face_alive[f] = 0;
                for (Index w : face) {
                    if (w == b) continue;
                    auto& inc = incident[w];
                    inc.erase(std::remove(inc.begin(), inc.end(), f), inc.end());
                }
            } else {
                for (Index& w : face) {
                    if (w == b) w = a;
                }
                incident[a].push_back(f);
            }
        }
        incident[b].clear();
        vertex_alive[b] = 0;
        Q[a] += Q[b];
        pos[a] = p;
        ++version[a];
        ++version[b];
    }
};

struct Candidate {
    double cost;
    Index a, b;
    std::uint64_t va, vb;

    bool operator>(const Candidate& o) const
    {
        return std::tie(cost, a, b) > std::tie(o.cost, o.a, o.b);
    }
};

} // namespace qem_detail

/// Quadric-error edge collapse down to at most `target_vertices` vertices.
/// Collapses that break manifoldness or flip a face normal by more than
/// pi/2 are skipped; if the target cannot be met the smallest reachable mesh
/// is returned and `warnings` counts the blocked collapses.
inline QemResult qem_collapse(const TriMesh& mesh, Index target_vertices)
{
    constexpr const char* mod = "init-pipeline";
    require(target_vertices >= 4, mod, "target vertex count must be at least 4");
    validate(mesh);

    qem_detail::State s;
    const Index n = mesh.num_vertices();
    s.pos.resize(n);
    for (Index v = 0; v < n; ++v) s.pos[v] = mesh.vertex(v);
    s.Q.assign(n, Quadric::Zero());
    s.faces = mesh.faces;
    s.face_alive.assign(mesh.faces.size(), 1);
    s.vertex_alive.assign(n, 1);
    s.incident.resize(n);
    s.version.assign(n, 0);
    s.scale = std::max(bounding_box_diagonal(mesh.vertices), 1e-300);
    for (Index f = 0; f < mesh.num_faces(); ++f) {
        const auto& face = mesh.faces[f];
        const Quadric K = plane_quadric(s.pos[face[0]], s.pos[face[1]], s.pos[face[2]]);
        for (Index v : face) {
            s.Q[v] += K;
            s.incident[v].push_back(f);
        }
    }

    QemResult result;
    Index alive = n;
    using Queue = std::priority_queue<
        qem_detail::Candidate,
        std::vector<qem_detail::Candidate>,
        std::greater<qem_detail::Candidate>>;

    auto push = [&](Queue& q, Index a, Index b) {
        if (a > b) std::swap(a, b);
        const Quadric Q = s.Q[a] + s.Q[b];
        const Vec3 p = quadric_placement(Q, s.pos[a], s.pos[b]);
        q.push({quadric_error(Q, p), a, b, s.version[a], s.version[b]});
    };

    // Blocked collapses may become legal after their neighbourhood changes,
    // so sweeps repeat until one makes no progress.
    std::size_t blocked = 0;
    bool progress = true;
    while (alive > target_vertices && alive > 4 && progress) {
        progress = false;
        blocked = 0;
        Queue queue;
        for (Index v = 0; v < n; ++v) {
            if (!s.vertex_alive[v]) continue;
            for (Index w : s.neighbors(v)) {
                if (v < w) push(queue, v, w);
            }
        }
        while (!queue.empty() && alive > target_vertices && alive > 4) {
            const auto c = queue.top();
            queue.pop();
            if (!s.vertex_alive[c.a] || !s.vertex_alive[c.b]) continue;
            if (s.version[c.a] != c.va || s.version[c.b] != c.vb) continue;
            const Quadric Q = s.Q[c.a] + s.Q[c.b];
            const Vec3 p = quadric_placement(Q, s.pos[c.a], s.pos[c.b]);
            if (!s.collapse_allowed(c.a, c.b, p)) {
                ++blocked;
                continue;
            }
            s.collapse(c.a, c.b, p);
            --alive;
            progress = true;
            ++result.collapses;
            result.total_error += c.cost;
            result.error_history.push_back(result.total_error);
            for (Index w : s.neighbors(c.a)) push(queue, c.a, w);
        }
    }
    if (alive > target_vertices) result.warnings = std::max<std::size_t>(blocked, 1);

    std::vector<Index> remap(n, HalfedgeTopology::invalid);
    Index next = 0;
    for (Index v = 0; v < n; ++v) {
        if (s.vertex_alive[v]) remap[v] = next++;
    }
    result.mesh.vertices.resize(next, 3);
    for (Index v = 0; v < n; ++v) {
        if (s.vertex_alive[v]) result.mesh.vertices.row(remap[v]) = s.pos[v].transpose();
    }
    for (std::size_t f = 0; f < s.faces.size(); ++f) {
        if (!s.face_alive[f]) continue;
        const auto& face = s.faces[f];
        result.mesh.faces.push_back({remap[face[0]], remap[face[1]], remap[face[2]]});
    }
    validate(result.mesh);
    return result;
}

} // namespace subdivfit
