#pragma once

#include "subdivfit/kdtree.hpp"
#include "subdivfit/limit_surface.hpp"
#include "subdivfit/mesh.hpp"
#include "subdivfit/parallel.hpp"

#include <vector>

namespace subdivfit {

/// Fixed s x s sample grid per face with cached basis rows. The rows depend
/// only on topology, so sample positions for any V are a sparse product.
class SurfaceSampler {
public:
    SurfaceSampler(const LimitSurface& surface, int samples_per_face)
        : m_surface(&surface)
        , m_params(sample_params(surface.num_faces(), samples_per_face))
        , m_rows(m_params.size())
    {
        parallel_for(0, m_params.size(), [&](std::size_t i) { m_rows[i] = surface.basis(m_params[i]); });
    }

    const LimitSurface& surface() const { return *m_surface; }
    std::size_t size() const { return m_params.size(); }
    const SurfaceParam& param(std::size_t i) const { return m_params[i]; }
    const BasisRow& row(std::size_t i) const { return m_rows[i]; }

    Positions positions(const Positions& V) const
    {
        Positions out(Eigen::Index(m_rows.size()), 3);
        for (std::size_t i = 0; i < m_rows.size(); ++i) {
            out.row(Eigen::Index(i)) = m_rows[i].apply(V, kValue).transpose();
        }
        return out;
    }

private:
    const LimitSurface* m_surface;
    std::vector<SurfaceParam> m_params;
    std::vector<BasisRow> m_rows;
};

struct Correspondences {
    std::vector<Index> sample;       // nearest sample per point
    std::vector<SurfaceParam> params;
    Positions footpoints;
    Eigen::VectorXd distances;

    std::size_t size() const { return sample.size(); }
};

/// Nearest surface sample for every point, found through a kd-tree over the
/// current sample positions.
inline Correspondences update_correspondences(const SurfaceSampler& sampler, const Positions& V, const Positions& points)
{
    const KdTree tree(sampler.positions(V));
    Correspondences c;
    const std::size_t n = std::size_t(points.rows());
    c.sample.resize(n);
    c.params.resize(n);
    c.footpoints.resize(points.rows(), 3);
    c.distances.resize(points.rows());
    parallel_for(0, n, [&](std::size_t j) {
        const Vec3 p = points.row(Eigen::Index(j)).transpose();
        const auto hit = tree.nearest(p);
        c.sample[j] = hit.index;
        c.params[j] = sampler.param(hit.index);
        c.footpoints.row(Eigen::Index(j)) = tree.points().row(hit.index);
        c.distances[j] = std::sqrt(hit.squared_distance);
    });
    return c;
}

} // namespace subdivfit
