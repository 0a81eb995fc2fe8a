#pragma once

#include "subdivfit/core.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

namespace subdivfit {

/// Static 3-D kd-tree for exact nearest-neighbour queries. Among points at
/// the same distance the smallest index wins.
class KdTree {
public:
    struct Hit {
        Index index;
        double squared_distance;
    };

    explicit KdTree(Positions points, Index leaf_size = 8)
        : m_points(std::move(points))
        , m_leaf_size(std::max<Index>(leaf_size, 1))
    {
        require(m_points.rows() > 0, "fitting", "kd-tree needs at least one point");
        m_order.resize(std::size_t(m_points.rows()));
        std::iota(m_order.begin(), m_order.end(), Index(0));
        m_nodes.reserve(2 * m_order.size() / m_leaf_size + 1);
        build(0, Index(m_order.size()));
    }

    Index size() const { return Index(m_points.rows()); }
    const Positions& points() const { return m_points; }

    Hit nearest(const Vec3& q) const
    {
        Hit best{Index(0), std::numeric_limits<double>::infinity()};
        search(0, q, best);
        return best;
    }

private:
    struct Node {
        Index begin, end;
        int axis; // -1 for leaves
        double split;
        Index left, right;
    };

    Index build(Index begin, Index end)
    {
        const Index id = Index(m_nodes.size());
        m_nodes.push_back({begin, end, -1, 0.0, 0, 0});
        if (end - begin <= m_leaf_size) return id;

        Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
        Vec3 hi = -lo;
        for (Index i = begin; i < end; ++i) {
            const Vec3 p = m_points.row(m_order[i]).transpose();
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        int axis = 0;
        (hi - lo).maxCoeff(&axis);
        if (hi[axis] == lo[axis]) return id;

        const Index mid = begin + (end - begin) / 2;
        std::nth_element(m_order.begin() + begin, m_order.begin() + mid, m_order.begin() + end, [&](Index a, Index b) {
            return m_points(a, axis) < m_points(b, axis);
        });
        const double split = m_points(m_order[mid], axis);
        const Index left = build(begin, mid);
        const Index right = build(mid, end);
        m_nodes[id].axis = axis;
        m_nodes[id].split = split;
        m_nodes[id].left = left;
        m_nodes[id].right = right;
        return id;
    }

    void search(Index id, const Vec3& q, Hit& best) const
    {
        const Node& n = m_nodes[id];
        if (n.axis < 0) {
            for (Index i = n.begin; i < n.end; ++i) {
                const Index j = m_order[i];
                const double d = (m_points.row(j).transpose() - q).squaredNorm();
                if (d < best.squared_distance || (d == best.squared_distance && j < best.index)) best = {j, d};
            }
            return;
        }
        // Left holds coordinates <= split, right holds coordinates >= split.
        const double delta = q[n.axis] - n.split;
        const Index near = delta < 0 ? n.left : n.right;
        const Index far = delta < 0 ? n.right : n.left;
        search(near, q, best);
        if (delta * delta <= best.squared_distance) search(far, q, best);
    }

    Positions m_points;
    Index m_leaf_size;
    std::vector<Index> m_order;
    std::vector<Node> m_nodes;
};

} // namespace subdivfit
