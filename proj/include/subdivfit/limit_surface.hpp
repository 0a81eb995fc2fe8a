#pragma once

#include "subdivfit/core.hpp"
#include "subdivfit/halfedge.hpp"
#include "subdivfit/mesh.hpp"
#include "subdivfit/subdivision.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <vector>

namespace subdivfit {

/// A point of the topology space: face index and reference-square coordinates.
struct SurfaceParam {
    Index face = 0;
    double u = 0.0;
    double v = 0.0;

    friend bool operator==(const SurfaceParam&, const SurfaceParam&) = default;
};

/// Slots of a basis entry: value and the five partial derivatives.
enum Partial : int { kValue = 0, kDu = 1, kDv = 2, kDuu = 3, kDuv = 4, kDvv = 5 };

struct BasisEntry {
    Index vertex;
    std::array<double, 6> w;
};

/// Sparse row of limit basis functions Φ_i and their partials at one param.
struct BasisRow {
    std::vector<BasisEntry> entries;
    bool at_extraordinary = false; // depth cap hit next to an extraordinary vertex

    double sum(Partial p) const
    {
        double s = 0.0;
        for (const auto& e : entries) s += e.w[p];
        return s;
    }

    Vec3 apply(const Positions& V, Partial p) const
    {
        Vec3 x = Vec3::Zero();
        for (const auto& e : entries) x += e.w[p] * V.row(e.vertex).transpose();
        return x;
    }

    double apply(const Eigen::VectorXd& g, Partial p) const
    {
        double x = 0.0;
        for (const auto& e : entries) x += e.w[p] * g[e.vertex];
        return x;
    }
};

/// Limit-surface position with first and second partials.
struct SurfaceJet {
    Vec3 position;
    Vec3 du, dv;
    Vec3 duu, duv, dvv;
    BasisRow basis;

    bool at_extraordinary() const { return basis.at_extraordinary; }
    Vec3 normal() const { return du.cross(dv).normalized(); }
};

inline SurfaceJet make_jet(const Positions& V, BasisRow row)
{
    SurfaceJet j;
    j.position = row.apply(V, kValue);
    j.du = row.apply(V, kDu);
    j.dv = row.apply(V, kDv);
    j.duu = row.apply(V, kDuu);
    j.duv = row.apply(V, kDuv);
    j.dvv = row.apply(V, kDvv);
    j.basis = std::move(row);
    return j;
}

/// Uniform cubic B-spline weights for the 4x4 stencil `i + 4 j` (i along u),
/// one column per Partial.
inline Eigen::Matrix<double, 16, 6> bspline_weights(double u, double v)
{
    auto basis = [](double t) {
        const double s = 1.0 - t;
        const double t2 = t * t;
        const double t3 = t2 * t;
        Eigen::Matrix<double, 4, 3> b;
        b.col(0) << s * s * s / 6.0, (3 * t3 - 6 * t2 + 4) / 6.0, (-3 * t3 + 3 * t2 + 3 * t + 1) / 6.0, t3 / 6.0;
        b.col(1) << -0.5 * s * s, 1.5 * t2 - 2 * t, -1.5 * t2 + t + 0.5, 0.5 * t2;
        b.col(2) << s, 3 * t - 2, -3 * t + 1, t;
        return b;
    };
    const auto bu = basis(u);
    const auto bv = basis(v);
    Eigen::Matrix<double, 16, 6> w;
    for (int j = 0; j < 4; ++j) {
        for (int i = 0; i < 4; ++i) {
            const int k = i + 4 * j;
            w(k, kValue) = bu(i, 0) * bv(j, 0);
            w(k, kDu) = bu(i, 1) * bv(j, 0);
            w(k, kDv) = bu(i, 0) * bv(j, 1);
            w(k, kDuu) = bu(i, 2) * bv(j, 0);
            w(k, kDuv) = bu(i, 1) * bv(j, 1);
            w(k, kDvv) = bu(i, 0) * bv(j, 2);
        }
    }
    return w;
}

namespace limit_detail {

using LocalFace = std::array<int, 4>;

/// Small quad complex around one face. Rows of `weights` express every local
/// vertex in terms of the root control slots. The corners of `faces[center]`
/// always have complete vertex fans.
struct LocalPatch {
    std::vector<LocalFace> faces;
    int center = 0;
    Eigen::MatrixXd weights;
};

inline int local_valence(const LocalPatch& p, int v)
{
    int n = 0;
    for (const auto& f : p.faces) n += int(std::count(f.begin(), f.end(), v));
    return n;
}

/// Fills the 4x4 B-spline grid around the center face. Returns nothing when
/// the center is not a regular patch.
inline std::optional<std::array<int, 16>> regular_stencil(const LocalPatch& p)
{
    const auto& c = p.faces[p.center];
    for (int v : c) {
        if (local_valence(p, v) != 4) return std::nullopt;
    }
    std::map<std::pair<int, int>, std::pair<int, int>> directed;
    for (int f = 0; f < int(p.faces.size()); ++f) {
        for (int i = 0; i < 4; ++i) directed[{p.faces[f][i], p.faces[f][(i + 1) % 4]}] = {f, i};
    }
    std::array<int, 16> grid;
    grid.fill(-1);
    struct Placed {
        std::array<int, 4> v;
        std::array<std::array<int, 2>, 4> pos;
    };
    auto put = [&](int vertex, std::array<int, 2> at) {
        if (at[0] >= 0 && at[0] < 4 && at[1] >= 0 && at[1] < 4) grid[at[0] + 4 * at[1]] = vertex;
    };
    auto across = [&](const Placed& face, int k) -> std::optional<Placed> {
        const int a = face.v[k];
        const int b = face.v[(k + 1) % 4];
        auto it = directed.find({b, a});
        if (it == directed.end()) return std::nullopt;
        const auto& nf = p.faces[it->second.first];
        const int s = it->second.second; // nf[s] == b, nf[s+1] == a
        const auto pa = face.pos[k];
        const auto pb = face.pos[(k + 1) % 4];
        const std::array<int, 2> out{pb[1] - pa[1], -(pb[0] - pa[0])};
        Placed r;
        for (int i = 0; i < 4; ++i) r.v[i] = nf[(s + i) % 4];
        r.pos[0] = pb;
        r.pos[1] = pa;
        r.pos[2] = {pa[0] + out[0], pa[1] + out[1]};
        r.pos[3] = {pb[0] + out[0], pb[1] + out[1]};
        return r;
    };

    Placed center{c, {{{1, 1}, {2, 1}, {2, 2}, {1, 2}}}};
    for (int i = 0; i < 4; ++i) put(center.v[i], center.pos[i]);
    for (int k = 0; k < 4; ++k) {
        auto side = across(center, k);
        if (!side) return std::nullopt;
        for (int i = 0; i < 4; ++i) put(side->v[i], side->pos[i]);
        for (int kk = 0; kk < 4; ++kk) {
            auto diag = across(*side, kk);
            if (!diag) continue;
            for (int i = 0; i < 4; ++i) put(diag->v[i], diag->pos[i]);
        }
    }
    for (int g : grid) {
        if (g < 0) return std::nullopt;
    }
    return grid;
}

/// Limit position weights of a patch vertex with a complete fan.
inline Eigen::RowVectorXd limit_stencil(const LocalPatch& p, int v)
{
    const double n = local_valence(p, v);
    Eigen::RowVectorXd row = (n / (n + 5.0)) * p.weights.row(v);
    for (const auto& f : p.faces) {
        for (int i = 0; i < 4; ++i) {
            if (f[i] != v) continue;
            row += (4.0 / (n * (n + 5.0))) * p.weights.row(f[(i + 1) % 4]);
            row += (1.0 / (n * (n + 5.0))) * p.weights.row(f[(i + 2) % 4]);
        }
    }
    return row;
}

/// One local Catmull-Clark step followed by extraction of the four child
/// patches of the center face.
inline std::array<LocalPatch, 4> subdivide(const LocalPatch& p)
{
    const int nv = int(p.weights.rows());
    const int nf = int(p.faces.size());
    std::vector<Eigen::RowVectorXd> rows;
    auto add_row = [&](Eigen::RowVectorXd r) {
        rows.push_back(std::move(r));
        return int(rows.size()) - 1;
    };

    std::vector<int> face_pt(nf);
    for (int f = 0; f < nf; ++f) {
        Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(p.weights.cols());
        for (int v : p.faces[f]) r += 0.25 * p.weights.row(v);
        face_pt[f] = add_row(std::move(r));
    }

    std::map<std::pair<int, int>, std::vector<int>> edge_faces;
    for (int f = 0; f < nf; ++f) {
        for (int i = 0; i < 4; ++i) {
            const int a = p.faces[f][i];
            const int b = p.faces[f][(i + 1) % 4];
            edge_faces[{std::min(a, b), std::max(a, b)}].push_back(f);
        }
    }
    std::map<std::pair<int, int>, int> edge_pt;
    for (const auto& [key, faces] : edge_faces) {
        if (faces.size() != 2) continue;
        Eigen::RowVectorXd r = 0.25 * (p.weights.row(key.first) + p.weights.row(key.second));
        for (int f : faces) r += 0.25 * rows[face_pt[f]];
        edge_pt[key] = add_row(std::move(r));
    }
    auto find_edge = [&](int a, int b) {
        auto it = edge_pt.find({std::min(a, b), std::max(a, b)});
        return it == edge_pt.end() ? -1 : it->second;
    };

    std::map<int, int> vertex_pt;
    for (int v : p.faces[p.center]) {
        const double n = local_valence(p, v);
        Eigen::RowVectorXd r = ((n - 3.0) / n) * p.weights.row(v);
        for (int f = 0; f < nf; ++f) {
            for (int i = 0; i < 4; ++i) {
                if (p.faces[f][i] != v) continue;
                r += (1.0 / (n * n)) * rows[face_pt[f]];
                r += (1.0 / (n * n)) * (p.weights.row(v) + p.weights.row(p.faces[f][(i + 1) % 4]));
            }
        }
        vertex_pt[v] = add_row(std::move(r));
    }

    // All child faces whose four points were computed, keyed by (parent, corner).
    std::map<std::pair<int, int>, LocalFace> children;
    for (int f = 0; f < nf; ++f) {
        const auto& face = p.faces[f];
        for (int q = 0; q < 4; ++q) {
            auto vp = vertex_pt.find(face[q]);
            const int en = find_edge(face[q], face[(q + 1) % 4]);
            const int ep = find_edge(face[(q + 3) % 4], face[q]);
            if (vp == vertex_pt.end() || en < 0 || ep < 0) continue;
            const auto cf = child_face(q, Index(vp->second), Index(en), Index(face_pt[f]), Index(ep));
            children[{f, q}] = {int(cf[0]), int(cf[1]), int(cf[2]), int(cf[3])};
        }
    }

    std::array<LocalPatch, 4> out;
    for (int q = 0; q < 4; ++q) {
        const LocalFace& c = children.at({p.center, q});
        LocalPatch& child = out[q];
        std::map<int, int> renumber;
        std::vector<int> order;
        auto local = [&](int g) {
            auto [it, inserted] = renumber.emplace(g, int(order.size()));
            if (inserted) order.push_back(g);
            return it->second;
        };
        auto push = [&](const LocalFace& f) {
            child.faces.push_back({local(f[0]), local(f[1]), local(f[2]), local(f[3])});
        };
        push(c);
        for (const auto& [key, f] : children) {
            if (f == c) continue;
            const bool touches = std::any_of(f.begin(), f.end(), [&](int v) {
                return std::find(c.begin(), c.end(), v) != c.end();
            });
            if (touches) push(f);
        }
        child.center = 0;
        child.weights.resize(Eigen::Index(order.size()), p.weights.cols());
        for (std::size_t i = 0; i < order.size(); ++i) child.weights.row(Eigen::Index(i)) = rows[order[i]];
    }
    (void)nv;
    return out;
}

} // namespace limit_detail

/// Exact evaluation of the Catmull-Clark limit surface of a closed quad
/// control mesh.
///
/// Regular faces (all four corners of valence 4) evaluate the bicubic
/// B-spline patch of their 16-point stencil. Other faces are subdivided
/// locally, on the fly, toward the quadrant containing (u,v) until that
/// quadrant is regular; the subdivision chains are precomputed per face up to
/// `depth_cap` levels. Basis rows depend only on topology, so one evaluator
/// serves every vertex configuration with the same connectivity.
class LimitSurface {
public:
    static constexpr int default_depth_cap = 10;

    explicit LimitSurface(const QuadMesh& control, int depth_cap = default_depth_cap)
        : LimitSurface(control.faces, control.num_vertices(), depth_cap)
    {}

    LimitSurface(const std::vector<QuadMesh::Face>& faces, Index num_vertices, int depth_cap = default_depth_cap)
        : m_topology(HalfedgeTopology::build<4>(faces, num_vertices))
        , m_depth_cap(depth_cap)
    {
        require(depth_cap >= 1, "subdiv-eval", "depth cap must be at least 1");
        m_faces.resize(faces.size());
        for (Index f = 0; f < Index(faces.size()); ++f) build_face(f);
    }

    const HalfedgeTopology& topology() const { return m_topology; }
    Index num_vertices() const { return m_topology.num_vertices(); }
    Index num_faces() const { return m_topology.num_faces(); }
    int depth_cap() const { return m_depth_cap; }
    bool is_regular(Index f) const { return m_faces[f].tree < 0; }

    BasisRow basis(const SurfaceParam& param) const
    {
        require(param.face < num_faces(), "subdiv-eval", "face index " + std::to_string(param.face) + " out of range");
        require(
            param.u >= 0.0 && param.u <= 1.0 && param.v >= 0.0 && param.v <= 1.0,
            "subdiv-eval",
            "parameter outside the reference square");
        const FaceEntry& fe = m_faces[param.face];
        if (fe.tree < 0) return regular_basis(fe.stencil, param.u, param.v);
        return irregular_basis(m_trees[fe.tree], param.u, param.v);
    }

    SurfaceJet evaluate(const Positions& V, const SurfaceParam& param) const
    {
        return make_jet(V, basis(param));
    }

    /// Limit position weights at control vertex v: the vertex itself, its edge
    /// neighbours and its face-diagonal neighbours.
    BasisRow vertex_limit_basis(Index v) const
    {
        const double n = m_topology.valence(v);
        BasisRow row;
        auto add = [&](Index i, double w) {
            for (auto& e : row.entries) {
                if (e.vertex == i) {
                    e.w[kValue] += w;
                    return;
                }
            }
            row.entries.push_back({i, {w, 0, 0, 0, 0, 0}});
        };
        add(v, n / (n + 5.0));
        for (Index h : m_topology.outgoing(v)) {
            add(m_topology.target(h), 4.0 / (n * (n + 5.0)));
            add(m_topology.target(m_topology.next(h)), 1.0 / (n * (n + 5.0)));
        }
        return row;
    }

    /// A param whose limit point is control vertex v's limit point.
    SurfaceParam vertex_param(Index v) const
    {
        const Index h = m_topology.vertex_halfedge(v);
        const int corner = int(h % 4);
        constexpr double cu[4] = {0, 1, 1, 0};
        constexpr double cv[4] = {0, 0, 1, 1};
        return {m_topology.face(h), cu[corner], cv[corner]};
    }

private:
    struct Child {
        enum class Kind { regular, node, capped } kind;
        int index;
    };
    struct Node {
        std::array<Child, 4> children;
    };
    struct Capped {
        Eigen::RowVectorXd position;
        int sibling_leaf; // regular quadrant opposite the extraordinary corner, or -1
        int sibling_quadrant;
    };
    struct Tree {
        std::vector<Index> slots;
        std::vector<Node> nodes;
        std::vector<Eigen::Matrix<double, 16, Eigen::Dynamic>> leaves;
        std::vector<Capped> capped;
    };
    struct FaceEntry {
        int tree = -1;
        std::array<Index, 16> stencil{};
    };

    void build_face(Index f)
    {
        using namespace limit_detail;
        const auto& t = m_topology;
        std::vector<Index> faces{f};
        for (Index c = 0; c < 4; ++c) {
            for (Index h : t.outgoing(t.origin(t.face_halfedge(f, c)))) {
                if (std::find(faces.begin(), faces.end(), t.face(h)) == faces.end()) faces.push_back(t.face(h));
            }
        }
        std::vector<Index> slots;
        std::map<Index, int> local;
        LocalPatch patch;
        for (Index g : faces) {
            LocalFace lf;
            for (Index c = 0; c < 4; ++c) {
                const Index v = t.origin(t.face_halfedge(g, c));
                auto [it, inserted] = local.emplace(v, int(slots.size()));
                if (inserted) slots.push_back(v);
                lf[c] = it->second;
            }
            patch.faces.push_back(lf);
        }
        patch.center = 0;
        patch.weights = Eigen::MatrixXd::Identity(Eigen::Index(slots.size()), Eigen::Index(slots.size()));

        if (auto grid = regular_stencil(patch)) {
            for (int k = 0; k < 16; ++k) m_faces[f].stencil[k] = slots[(*grid)[k]];
            return;
        }
        Tree tree;
        tree.slots = std::move(slots);
        build_node(tree, patch, 0);
        m_faces[f].tree = int(m_trees.size());
        m_trees.push_back(std::move(tree));
    }

    int build_node(Tree& tree, const limit_detail::LocalPatch& patch, int depth)
    {
        using namespace limit_detail;
        const int id = int(tree.nodes.size());
        tree.nodes.emplace_back();
        auto children = subdivide(patch);
        std::array<Child, 4> out;
        std::array<bool, 4> pending{};
        for (int q = 0; q < 4; ++q) {
            if (auto grid = regular_stencil(children[q])) {
                Eigen::Matrix<double, 16, Eigen::Dynamic> leaf(16, children[q].weights.cols());
                for (int k = 0; k < 16; ++k) leaf.row(k) = children[q].weights.row((*grid)[k]);
                out[q] = {Child::Kind::regular, int(tree.leaves.size())};
                tree.leaves.push_back(std::move(leaf));
            } else if (depth + 1 >= m_depth_cap) {
                pending[q] = true;
            } else {
                out[q] = {Child::Kind::node, build_node(tree, children[q], depth + 1)};
            }
        }
        for (int q = 0; q < 4; ++q) {
            if (!pending[q]) continue;
            const auto& child = children[q];
            // Corner q of child q is the vertex point of the parent's corner q.
            Capped cap{limit_stencil(child, child.faces[0][q]), -1, (q + 2) % 4};
            if (out[cap.sibling_quadrant].kind == Child::Kind::regular && !pending[cap.sibling_quadrant]) {
                cap.sibling_leaf = out[cap.sibling_quadrant].index;
            }
            out[q] = {Child::Kind::capped, int(tree.capped.size())};
            tree.capped.push_back(std::move(cap));
        }
        tree.nodes[id].children = out;
        return id;
    }

    static BasisRow regular_basis(const std::array<Index, 16>& stencil, double u, double v)
    {
        const auto w = bspline_weights(u, v);
        BasisRow row;
        row.entries.reserve(16);
        for (int k = 0; k < 16; ++k) {
            auto it = std::find_if(row.entries.begin(), row.entries.end(), [&](const BasisEntry& e) {
                return e.vertex == stencil[k];
            });
            if (it == row.entries.end()) {
                row.entries.push_back({stencil[k], {}});
                it = row.entries.end() - 1;
            }
            for (int p = 0; p < 6; ++p) it->w[p] += w(k, p);
        }
        return row;
    }

    BasisRow irregular_basis(const Tree& tree, double u, double v) const
    {
        int node = 0;
        double scale = 1.0;
        while (true) {
            const int q = quadrant_of(u, v);
            const auto off = quadrant_offset(q);
            u = std::clamp(2.0 * u - off[0], 0.0, 1.0);
            v = std::clamp(2.0 * v - off[1], 0.0, 1.0);
            scale *= 2.0;
            const Child& child = tree.nodes[node].children[q];
            if (child.kind == Child::Kind::node) {
                node = child.index;
                continue;
            }
            if (child.kind == Child::Kind::regular) {
                const Eigen::MatrixXd w = tree.leaves[child.index].transpose() * bspline_weights(u, v);
                return to_row(tree, w, scale, false);
            }
            // Depth cap: limit position of the extraordinary vertex, derivatives
            // from the opposite regular quadrant at the shared face point.
            const Capped& cap = tree.capped[child.index];
            Eigen::MatrixXd w = Eigen::MatrixXd::Zero(tree.slots.size(), 6);
            w.col(kValue) = cap.position.transpose();
            if (cap.sibling_leaf >= 0) {
                const int s = cap.sibling_quadrant;
                const int fp_corner = (2 + s) % 4;
                constexpr double cu[4] = {0, 1, 1, 0};
                constexpr double cv[4] = {0, 0, 1, 1};
                const Eigen::MatrixXd ws =
                    tree.leaves[cap.sibling_leaf].transpose() * bspline_weights(cu[fp_corner], cv[fp_corner]);
                w.rightCols(5) = ws.rightCols(5);
            }
            return to_row(tree, w, scale, true);
        }
    }

    static BasisRow to_row(const Tree& tree, const Eigen::MatrixXd& w, double scale, bool flagged)
    {
        BasisRow row;
        row.at_extraordinary = flagged;
        const double s1 = scale;
        const double s2 = scale * scale;
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            if (w.row(i).cwiseAbs().maxCoeff() == 0.0) continue;
            row.entries.push_back(
                {tree.slots[i],
                 {w(i, kValue), s1 * w(i, kDu), s1 * w(i, kDv), s2 * w(i, kDuu), s2 * w(i, kDuv), s2 * w(i, kDvv)}});
        }
        return row;
    }

    HalfedgeTopology m_topology;
    int m_depth_cap;
    std::vector<FaceEntry> m_faces;
    std::vector<Tree> m_trees;
};

/// Params on an s x s grid per face at ((a + 1/2)/s, (b + 1/2)/s), face-major.
inline std::vector<SurfaceParam> sample_params(Index num_faces, int samples_per_face)
{
    require(samples_per_face >= 2, "subdiv-eval", "samples per face must be at least 2");
    std::vector<SurfaceParam> params;
    params.reserve(std::size_t(num_faces) * samples_per_face * samples_per_face);
    const double s = samples_per_face;
    for (Index f = 0; f < num_faces; ++f) {
        for (int b = 0; b < samples_per_face; ++b) {
            for (int a = 0; a < samples_per_face; ++a) params.push_back({f, (a + 0.5) / s, (b + 0.5) / s});
        }
    }
    return params;
}

struct SurfaceSamples {
    std::vector<SurfaceParam> params;
    Positions positions;
};

inline SurfaceSamples sample_surface(const LimitSurface& surface, const Positions& V, int samples_per_face)
{
    SurfaceSamples out;
    out.params = sample_params(surface.num_faces(), samples_per_face);
    out.positions.resize(Eigen::Index(out.params.size()), 3);
    for (std::size_t i = 0; i < out.params.size(); ++i) {
        out.positions.row(Eigen::Index(i)) = surface.basis(out.params[i]).apply(V, kValue).transpose();
    }
    return out;
}

} // namespace subdivfit
