#pragma once

#include "subdivfit/core.hpp"
#include "subdivfit/halfedge.hpp"

#include <Eigen/Geometry>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace subdivfit {

/// Polygon mesh with faces of uniform degree K.
template <std::size_t K>
struct PolygonMesh {
    static constexpr std::size_t face_degree = K;
    using Face = std::array<Index, K>;

    Positions vertices;
    std::vector<Face> faces;

    Index num_vertices() const { return static_cast<Index>(vertices.rows()); }
    Index num_faces() const { return static_cast<Index>(faces.size()); }
    Vec3 vertex(Index i) const { return vertices.row(i).transpose(); }
};

using TriMesh = PolygonMesh<3>;
using QuadMesh = PolygonMesh<4>;

/// Oriented point cloud; `normals` has the same row count as `points` when set.
struct PointCloud {
    Positions points;
    std::optional<Positions> normals;

    Index size() const { return static_cast<Index>(points.rows()); }
    bool has_normals() const { return normals.has_value(); }
};

struct ValidationReport {
    HalfedgeTopology topology;
    std::vector<Index> degenerate_faces;
    std::vector<std::string> warnings;
};

/// Vector area of a polygon (twice the area for triangles, summed fan for quads).
template <std::size_t K>
Vec3 face_vector_area(const PolygonMesh<K>& mesh, Index f)
{
    Vec3 a = Vec3::Zero();
    const auto& face = mesh.faces[f];
    const Vec3 p0 = mesh.vertex(face[0]);
    for (std::size_t i = 1; i + 1 < K; ++i) {
        a += (mesh.vertex(face[i]) - p0).cross(mesh.vertex(face[i + 1]) - p0);
    }
    return 0.5 * a;
}

/// Checks every container invariant: index range, closedness, manifoldness,
/// orientation, valence and Euler parity. Zero-area faces are accepted and
/// reported as warnings.
template <std::size_t K>
ValidationReport validate(const PolygonMesh<K>& mesh)
{
    require(mesh.num_faces() > 0, "mesh-core", "mesh has no faces");
    ValidationReport report{HalfedgeTopology::build<K>(mesh.faces, mesh.num_vertices()), {}, {}};
    const auto& t = report.topology;
    const long euler =
        long(t.num_vertices()) - long(t.num_edges()) + long(t.num_faces());
    require(
        euler % 2 == 0,
        "mesh-core",
        "Euler characteristic " + std::to_string(euler) + " is odd (not a closed orientable surface)");

    double scale = 0.0;
    if (mesh.num_vertices() > 0) {
        scale = (mesh.vertices.colwise().maxCoeff() - mesh.vertices.colwise().minCoeff()).norm();
    }
    for (Index f = 0; f < mesh.num_faces(); ++f) {
        if (face_vector_area(mesh, f).norm() <= 1e-14 * scale * scale) {
            report.degenerate_faces.push_back(f);
            report.warnings.push_back("face " + std::to_string(f) + " has zero area");
        }
    }
    return report;
}

inline double bounding_box_diagonal(const Positions& p)
{
    if (p.rows() == 0) return 0.0;
    return (p.colwise().maxCoeff() - p.colwise().minCoeff()).norm();
}

inline void validate(const PointCloud& cloud)
{
    require(cloud.size() >= 1, "mesh-core", "point cloud is empty");
    if (cloud.normals) {
        require(
            cloud.normals->rows() == cloud.points.rows(),
            "mesh-core",
            "normal count does not match point count");
        for (Eigen::Index j = 0; j < cloud.normals->rows(); ++j) {
            require(
                std::abs(cloud.normals->row(j).norm() - 1.0) <= 1e-6,
                "mesh-core",
                "normal " + std::to_string(j) + " is not unit length");
        }
    }
}

} // namespace subdivfit
