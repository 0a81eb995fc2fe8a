#pragma once

#include "subdivfit/mesh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace subdivfit {

struct EdgePairingCost {
    Index edge = 0;
    std::array<double, 4> alpha{}; // quad corner angles, in quad order
    double eta = 0.0;              // angle between the two triangle normals
    double cost = 0.0;             // +inf when the pair must not be merged

    bool finite() const { return std::isfinite(cost); }
};

namespace quad_detail {

inline double corner_angle(const Vec3& at, const Vec3& a, const Vec3& b)
{
    const Vec3 u = a - at, v = b - at;
    return std::atan2(u.cross(v).norm(), u.dot(v));
}

/// Corners of the quad left after removing edge e, counter-clockwise:
/// (origin, opposite in twin face, target, opposite in face).
inline std::array<Index, 4> merged_quad(const HalfedgeTopology& t, Index e)
{
    const Index h = t.edge_halfedge(e);
    const Index g = t.twin(h);
    return {t.origin(h), t.target(t.next(g)), t.target(h), t.target(t.next(h))};
}

} // namespace quad_detail

/// Cost of merging triangles (a, b, c) and (b, a, d) into the quad
/// (a, d, b, c): 1/4 sum (alpha_i - pi/2)^2 + tan^2(eta), infinite for
/// strongly bent pairs (eta >= pi/2) and for quads with straight or reflex
/// corners.
inline EdgePairingCost quad_pairing_cost(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d)
{
    using quad_detail::corner_angle;
    EdgePairingCost out;
    out.alpha[0] = corner_angle(a, d, b) + corner_angle(a, b, c);
    out.alpha[1] = corner_angle(d, b, a);
    out.alpha[2] = corner_angle(b, c, a) + corner_angle(b, a, d);
    out.alpha[3] = corner_angle(c, a, b);

    const Vec3 n1 = (b - a).cross(c - a);
    const Vec3 n2 = (a - b).cross(d - b);
    const double s = n1.cross(n2).norm();
    const double cdot = n1.dot(n2);
    out.eta = std::atan2(s, cdot);

    constexpr double half_pi = std::numbers::pi / 2;
    bool reflex = false;
    double sum = 0.0;
    for (double alpha : out.alpha) {
        reflex = reflex || alpha >= std::numbers::pi - 1e-12;
        sum += (alpha - half_pi) * (alpha - half_pi);
    }
    const bool degenerate = !(n1.norm() > 0.0 && n2.norm() > 0.0);
    if (degenerate || reflex || cdot <= 1e-12 * n1.norm() * n2.norm()) {
        out.cost = std::numeric_limits<double>::infinity();
    } else {
        const double tan_eta = s / cdot;
        out.cost = 0.25 * sum + tan_eta * tan_eta;
    }
    return out;
}

/// Pairing cost of the two triangles sharing `edge`.
inline EdgePairingCost pairing_cost(const TriMesh& mesh, const HalfedgeTopology& t, Index edge)
{
    require(edge < t.num_edges(), "init-pipeline", "edge index out of range");
    const auto q = quad_detail::merged_quad(t, edge);
    EdgePairingCost out =
        quad_pairing_cost(mesh.vertex(q[0]), mesh.vertex(q[2]), mesh.vertex(q[3]), mesh.vertex(q[1]));
    out.edge = edge;
    return out;
}

struct QuadConversion {
    QuadMesh mesh;
    double total_cost = 0.0;        // sum of pairing costs of the merged edges
    std::size_t matched_pairs = 0;
    std::size_t unmatched_triangles = 0;
    bool split_fallback = false;    // true when every face was split around its centre
    std::vector<Index> merged_edges;
};

namespace quad_detail {

/// Grows `match` to a maximum-cardinality matching of the graph with
/// augmenting paths through blossoms (Edmonds).
inline void augment_matching(const std::vector<std::vector<Index>>& adj, std::vector<Index>& match)
{
    constexpr Index none = HalfedgeTopology::invalid;
    const Index n = Index(adj.size());
    std::vector<Index> parent(n), base(n), queue;
    std::vector<char> used(n), blossom(n);

    auto lca = [&](Index a, Index b) {
        std::vector<char> seen(n, 0);
        for (;;) {
            a = base[a];
            seen[a] = 1;
            if (match[a] == none) break;
            a = parent[match[a]];
        }
        for (;;) {
            b = base[b];
            if (seen[b]) return b;
            b = parent[match[b]];
        }
    };
    auto mark_path = [&](Index v, Index b, Index child) {
        while (base[v] != b) {
            blossom[base[v]] = blossom[base[match[v]]] = 1;
            parent[v] = child;
            child = match[v];
            v = parent[match[v]];
        }
    };
    auto find_path = [&](Index root) -> Index {
        std::fill(used.begin(), used.end(), 0);
        std::fill(parent.begin(), parent.end(), none);
        for (Index i = 0; i < n; ++i) base[i] = i;
        used[root] = 1;
        queue.assign(1, root);
        for (std::size_t qh = 0; qh < queue.size(); ++qh) {
            const Index v = queue[qh];
            for (Index to : adj[v]) {
                if (base[v] == base[to] || match[v] == to) continue;
                if (to == root || (match[to] != none && parent[match[to]] != none)) {
                    const Index cur = lca(v, to);
                    std::fill(blossom.begin(), blossom.end(), 0);
                    mark_path(v, cur, to);
                    mark_path(to, cur, v);
                    for (Index i = 0; i < n; ++i) {
                        if (blossom[base[i]]) {
                            base[i] = cur;
                            if (!used[i]) {
                                used[i] = 1;
                                queue.push_back(i);
                            }
                        }
                    }
                } else if (parent[to] == none) {
                    parent[to] = v;
                    if (match[to] == none) return to;
                    used[match[to]] = 1;
                    queue.push_back(match[to]);
                }
            }
        }
        return none;
    };

    for (Index v = 0; v < n; ++v) {
        if (match[v] != none || adj[v].empty()) continue;
        Index u = find_path(v);
        while (u != none) {
            const Index pv = parent[u];
            const Index ppv = match[pv];
            match[u] = pv;
            match[pv] = u;
            u = ppv;
        }
    }
}

} // namespace quad_detail

/// Pairs adjacent triangles into quads. Pairs are chosen greedily by
/// ascending finite cost, then completed by augmenting paths over
/// finite-cost edges. If some triangles still have no partner, every quad is
/// split into four and every leftover triangle into three quads through face
/// centres and shared edge midpoints, which keeps the mesh conforming.
inline QuadConversion tri_to_quad(const TriMesh& mesh)
{
    constexpr Index none = HalfedgeTopology::invalid;
    const ValidationReport report = validate(mesh);
    const HalfedgeTopology& t = report.topology;
    const Index nf = mesh.num_faces();

    std::vector<EdgePairingCost> costs(t.num_edges());
    for (Index e = 0; e < t.num_edges(); ++e) costs[e] = pairing_cost(mesh, t, e);

    std::vector<Index> order;
    for (Index e = 0; e < t.num_edges(); ++e) {
        if (costs[e].finite()) order.push_back(e);
    }
    std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) {
        return costs[x].cost < costs[y].cost;
    });

    std::vector<Index> match(nf, none);
    for (Index e : order) {
        const auto [f, g] = t.edge_faces(e);
        if (match[f] == none && match[g] == none) {
            match[f] = g;
            match[g] = f;
        }
    }

    // Dual graph restricted to finite edges, neighbours by ascending cost.
    std::vector<std::vector<Index>> adj(nf);
    for (Index e : order) {
        const auto [f, g] = t.edge_faces(e);
        adj[f].push_back(g);
        adj[g].push_back(f);
    }
    if (std::count(match.begin(), match.end(), none) > 0) quad_detail::augment_matching(adj, match);

    auto shared_edge = [&](Index f, Index g) {
        for (Index i = 0; i < 3; ++i) {
            const Index h = t.face_halfedge(f, i);
            if (t.face(t.twin(h)) == g) return t.edge(h);
        }
        return none;
    };

    QuadConversion out;
    std::vector<std::array<Index, 4>> quads;
    std::vector<Index> single;
    for (Index f = 0; f < nf; ++f) {
        if (match[f] == none) {
            single.push_back(f);
            continue;
        }
        if (match[f] < f) continue;
        // Several finite edges may join the same pair only in degenerate meshes;
        // the cheapest one is merged.
        Index best = none;
        for (Index i = 0; i < 3; ++i) {
            const Index h = t.face_halfedge(f, i);
            if (t.face(t.twin(h)) != match[f]) continue;
            const Index e = t.edge(h);
            if (costs[e].finite() && (best == none || costs[e].cost < costs[best].cost)) best = e;
        }
        if (best == none) best = shared_edge(f, match[f]);
        out.merged_edges.push_back(best);
        out.total_cost += costs[best].cost;
        quads.push_back(quad_detail::merged_quad(t, best));
    }
    out.matched_pairs = quads.size();
    out.unmatched_triangles = single.size();

    if (single.empty()) {
        out.mesh.vertices = mesh.vertices;
        out.mesh.faces = std::move(quads);
        validate(out.mesh);
        return out;
    }

    out.split_fallback = true;
    std::vector<Vec3> extra;
    std::unordered_map<Index, Index> midpoint; // edge -> new vertex
    const Index n = mesh.num_vertices();
    auto mid = [&](Index a, Index b) {
        // Edge lookup through the outgoing ring of a.
        Index e = none;
        for (Index h : t.outgoing(a)) {
            if (t.target(h) == b) {
                e = t.edge(h);
                break;
            }
        }
        auto it = midpoint.find(e);
        if (it != midpoint.end()) return it->second;
        const Index id = n + Index(extra.size());
        extra.push_back(0.5 * (mesh.vertex(a) + mesh.vertex(b)));
        midpoint.emplace(e, id);
        return id;
    };
    auto fan = [&](auto corners) {
        constexpr std::size_t k = std::tuple_size_v<decltype(corners)>;
        Vec3 c = Vec3::Zero();
        for (Index v : corners) c += mesh.vertex(v);
        const Index centre = n + Index(extra.size());
        extra.push_back(c / double(k));
        std::array<Index, k> mids;
        for (std::size_t i = 0; i < k; ++i) mids[i] = mid(corners[i], corners[(i + 1) % k]);
        for (std::size_t i = 0; i < k; ++i) {
            out.mesh.faces.push_back({corners[i], mids[i], centre, mids[(i + k - 1) % k]});
        }
    };
    std::size_t qi = 0;
    for (Index f = 0; f < nf; ++f) {
        if (match[f] == none) {
            fan(mesh.faces[f]);
        } else if (match[f] > f) {
            fan(quads[qi++]);
        }
    }
    out.mesh.vertices.resize(n + Index(extra.size()), 3);
    out.mesh.vertices.topRows(n) = mesh.vertices;
    for (std::size_t i = 0; i < extra.size(); ++i) out.mesh.vertices.row(n + Eigen::Index(i)) = extra[i].transpose();
    validate(out.mesh);
    return out;
}

} // namespace subdivfit
