#pragma once

#include "subdivfit/core.hpp"

#include <algorithm>
#include <array>
#include <span>
#include <unordered_map>
#include <vector>

namespace subdivfit {

/// Halfedge connectivity of a closed, oriented, manifold polygon mesh whose
/// faces all have the same degree. Halfedge `f * degree + i` runs from corner
/// i to corner i+1 of face f, so `face`, `next` and `prev` are arithmetic.
class HalfedgeTopology {
public:
    static constexpr Index invalid = ~Index(0);

    template <std::size_t K>
    static HalfedgeTopology build(std::span<const std::array<Index, K>> faces, Index num_vertices);

    Index degree() const { return m_degree; }
    Index num_vertices() const { return static_cast<Index>(m_vertex_halfedge.size()); }
    Index num_faces() const { return static_cast<Index>(m_origin.size()) / m_degree; }
    Index num_halfedges() const { return static_cast<Index>(m_origin.size()); }
    Index num_edges() const { return static_cast<Index>(m_edge_halfedge.size()); }

    Index origin(Index h) const { return m_origin[h]; }
    Index target(Index h) const { return m_origin[next(h)]; }
    Index twin(Index h) const { return m_twin[h]; }
    Index face(Index h) const { return h / m_degree; }
    Index next(Index h) const { return face(h) * m_degree + (h % m_degree + 1) % m_degree; }
    Index prev(Index h) const
    {
        return face(h) * m_degree + (h % m_degree + m_degree - 1) % m_degree;
    }
    Index edge(Index h) const { return m_edge[h]; }
    Index edge_halfedge(Index e) const { return m_edge_halfedge[e]; }
    Index vertex_halfedge(Index v) const { return m_vertex_halfedge[v]; }
    Index valence(Index v) const { return m_valence[v]; }
    Index face_halfedge(Index f, Index corner) const { return f * m_degree + corner; }

    /// The two faces meeting at an edge (left of its canonical halfedge first).
    std::array<Index, 2> edge_faces(Index e) const
    {
        const Index h = m_edge_halfedge[e];
        return {face(h), face(m_twin[h])};
    }

    std::array<Index, 2> edge_vertices(Index e) const
    {
        const Index h = m_edge_halfedge[e];
        return {origin(h), target(h)};
    }

    /// Next outgoing halfedge counter-clockwise around origin(h).
    Index rotate(Index h) const { return m_twin[prev(h)]; }

    /// Outgoing halfedges of v in counter-clockwise order.
    std::vector<Index> outgoing(Index v) const
    {
        std::vector<Index> ring;
        const Index start = m_vertex_halfedge[v];
        Index h = start;
        do {
            ring.push_back(h);
            h = rotate(h);
        } while (h != start);
        return ring;
    }

    /// Face lists recovered from the halfedges.
    template <std::size_t K>
    std::vector<std::array<Index, K>> faces() const
    {
        std::vector<std::array<Index, K>> out(num_faces());
        for (Index f = 0; f < num_faces(); ++f) {
            for (Index i = 0; i < K; ++i) out[f][i] = m_origin[f * m_degree + i];
        }
        return out;
    }

private:
    Index m_degree = 0;
    std::vector<Index> m_origin;
    std::vector<Index> m_twin;
    std::vector<Index> m_edge;
    std::vector<Index> m_edge_halfedge;
    std::vector<Index> m_vertex_halfedge;
    std::vector<Index> m_valence;
};

template <std::size_t K>
HalfedgeTopology HalfedgeTopology::build(
    std::span<const std::array<Index, K>> faces,
    Index num_vertices)
{
    constexpr const char* mod = "mesh-core";
    HalfedgeTopology t;
    t.m_degree = static_cast<Index>(K);
    const std::size_t nh = faces.size() * K;
    t.m_origin.resize(nh);
    t.m_twin.assign(nh, invalid);
    t.m_edge.assign(nh, invalid);

    auto key = [](Index a, Index b) { return (std::uint64_t(a) << 32) | b; };
    std::unordered_map<std::uint64_t, Index> directed;
    std::unordered_map<std::uint64_t, int> undirected;
    directed.reserve(nh);
    undirected.reserve(nh);

    for (std::size_t f = 0; f < faces.size(); ++f) {
        const auto& face = faces[f];
        for (std::size_t i = 0; i < K; ++i) {
            require(
                face[i] < num_vertices,
                mod,
                "face " + std::to_string(f) + " references vertex " + std::to_string(face[i]) +
                    " but the mesh has " + std::to_string(num_vertices) + " vertices");
            for (std::size_t j = i + 1; j < K; ++j) {
                require(
                    face[i] != face[j],
                    mod,
                    "face " + std::to_string(f) + " repeats vertex " + std::to_string(face[i]));
            }
        }
        for (std::size_t i = 0; i < K; ++i) {
            const Index a = face[i];
            const Index b = face[(i + 1) % K];
            const Index h = static_cast<Index>(f * K + i);
            t.m_origin[h] = a;
            const int count = ++undirected[key(std::min(a, b), std::max(a, b))];
            require(
                count <= 2,
                mod,
                "non-manifold edge (" + std::to_string(a) + "," + std::to_string(b) +
                    ") has 3 or more incident faces");
            const bool inserted = directed.emplace(key(a, b), h).second;
            require(
                inserted,
                mod,
                "inconsistent orientation: edge (" + std::to_string(a) + "," + std::to_string(b) +
                    ") is traversed twice in the same direction");
        }
    }

    for (Index h = 0; h < nh; ++h) {
        const Index a = t.m_origin[h];
        const Index b = t.m_origin[t.next(h)];
        auto it = directed.find(key(b, a));
        require(
            it != directed.end(),
            mod,
            "open boundary: edge (" + std::to_string(a) + "," + std::to_string(b) +
                ") has a single incident face");
        t.m_twin[h] = it->second;
    }

    for (Index h = 0; h < nh; ++h) {
        if (h < t.m_twin[h]) {
            const Index e = static_cast<Index>(t.m_edge_halfedge.size());
            t.m_edge_halfedge.push_back(h);
            t.m_edge[h] = e;
            t.m_edge[t.m_twin[h]] = e;
        }
    }

    t.m_vertex_halfedge.assign(num_vertices, invalid);
    t.m_valence.assign(num_vertices, 0);
    for (Index h = 0; h < nh; ++h) {
        const Index v = t.m_origin[h];
        if (t.m_vertex_halfedge[v] == invalid) t.m_vertex_halfedge[v] = h;
        ++t.m_valence[v];
    }
    for (Index v = 0; v < num_vertices; ++v) {
        require(
            t.m_vertex_halfedge[v] != invalid,
            mod,
            "vertex " + std::to_string(v) + " is not referenced by any face");
        Index fan = 0;
        Index h = t.m_vertex_halfedge[v];
        do {
            ++fan;
            h = t.rotate(h);
        } while (h != t.m_vertex_halfedge[v] && fan <= t.m_valence[v]);
        require(
            fan == t.m_valence[v],
            mod,
            "non-manifold vertex " + std::to_string(v) + " (faces form more than one fan)");
        require(
            t.m_valence[v] >= 3,
            mod,
            "vertex " + std::to_string(v) + " has valence " + std::to_string(t.m_valence[v]) +
                " (< 3)");
    }
    return t;
}

template <std::size_t K>
HalfedgeTopology build_halfedge(const std::vector<std::array<Index, K>>& faces, Index num_vertices)
{
    return HalfedgeTopology::build<K>(std::span<const std::array<Index, K>>(faces), num_vertices);
}

} // namespace subdivfit
