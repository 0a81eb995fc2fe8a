#pragma once

#include "subdivfit/core.hpp"
#include "subdivfit/halfedge.hpp"
#include "subdivfit/limit_surface.hpp"
#include "subdivfit/subdivision.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace subdivfit {

struct FitConfig {
    double q = 1.3;
    double alpha = 0.0;
    double beta = 0.0;
    std::optional<double> eps_residual; // unset: 1e-6 x bounding-box diagonal
    double eps_tangent = 1e-6;
    int samples_per_face = 4;
    double cg_tol = 1e-8;
    int cg_max_iter = 2000;
    int outer_max_iter = 50;
    double energy_decrease_tol = 1e-4;

    void validate() const
    {
        constexpr const char* mod = "fitting";
        require(q > 1.0 && q <= 2.0, mod, "q must lie in (1, 2], got " + std::to_string(q));
        require(alpha >= 0.0, mod, "alpha must be non-negative");
        require(beta >= 0.0, mod, "beta must be non-negative");
        require(!eps_residual || *eps_residual > 0.0, mod, "eps_residual must be positive");
        require(eps_tangent > 0.0, mod, "eps_tangent must be positive");
        require(samples_per_face >= 2, mod, "samples per face must be at least 2");
        require(cg_tol > 0.0, mod, "cg_tol must be positive");
        require(cg_max_iter >= 1, mod, "cg_max_iter must be at least 1");
        require(outer_max_iter >= 1, mod, "outer_max_iter must be at least 1");
        require(energy_decrease_tol >= 0.0, mod, "energy_decrease_tol must be non-negative");
    }
};

/// One row per undirected edge with +1 at the first endpoint and -1 at the
/// second, so ||R V||^2 is the sum of squared edge lengths.
inline SparseMatrix regularizer_matrix(const HalfedgeTopology& t)
{
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(2 * std::size_t(t.num_edges()));
    for (Index e = 0; e < t.num_edges(); ++e) {
        const auto [a, b] = t.edge_vertices(e);
        trips.emplace_back(e, a, 1.0);
        trips.emplace_back(e, b, -1.0);
    }
    SparseMatrix R(t.num_edges(), t.num_vertices());
    R.setFromTriplets(trips.begin(), trips.end());
    return R;
}

/// Local second-order model of the squared distance to the surface around a
/// footpoint: (y - x)^T D (y - x).
struct QuadDistanceModel {
    Vec3 tau1, tau2, normal;
    double rho1 = std::numeric_limits<double>::infinity();
    double rho2 = std::numeric_limits<double>::infinity();
    double distance = 0.0;
    Mat3 D;

    double value(const Vec3& footpoint, const Vec3& y) const
    {
        const Vec3 r = y - footpoint;
        return r.dot(D * r);
    }
};

struct CurvatureClamp {
    double min_radius = 0.0;
    double max_radius = std::numeric_limits<double>::infinity();

    static CurvatureClamp from_diagonal(double diag) { return {1e-3 * diag, 1e6 * diag}; }
};

/// Principal frame of a jet: unit principal directions, unit normal and
/// signed principal curvatures.
struct PrincipalFrame {
    Vec3 tau1, tau2, normal;
    double kappa1, kappa2;
};

inline PrincipalFrame principal_frame(const SurfaceJet& jet, std::optional<Index> face = {})
{
    Mat2 G;
    G << jet.du.dot(jet.du), jet.du.dot(jet.dv), jet.du.dot(jet.dv), jet.dv.dot(jet.dv);
    const double det = G.determinant();
    require(
        det > 1e-14 * G(0, 0) * G(1, 1) && G(0, 0) > 0.0 && G(1, 1) > 0.0,
        "fitting",
        "singular first fundamental form" + (face ? " on face " + std::to_string(*face) : std::string()) +
            " (increase beta to repair degenerate quads)");
    const Vec3 n = jet.du.cross(jet.dv).normalized();
    Mat2 II;
    II << jet.duu.dot(n), jet.duv.dot(n), jet.duv.dot(n), jet.dvv.dot(n);
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat2> es(II, G);
    const Mat2 X = es.eigenvectors();
    PrincipalFrame f;
    f.normal = n;
    f.kappa1 = es.eigenvalues()[0];
    f.kappa2 = es.eigenvalues()[1];
    f.tau1 = (X(0, 0) * jet.du + X(1, 0) * jet.dv).normalized();
    f.tau2 = (X(0, 1) * jet.du + X(1, 1) * jet.dv).normalized();
    return f;
}

/// Squared-distance model at footpoint x with principal frame f for the point
/// p, using magnitudes of d and of the curvature radii.
inline QuadDistanceModel quad_distance_model(
    const PrincipalFrame& f,
    const Vec3& x,
    const Vec3& p,
    const CurvatureClamp& clamp = {})
{
    QuadDistanceModel m;
    m.tau1 = f.tau1;
    m.tau2 = f.tau2;
    m.normal = f.normal;
    auto radius = [&](double kappa) {
        const double r = kappa == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / std::abs(kappa);
        return std::clamp(r, clamp.min_radius, clamp.max_radius);
    };
    m.rho1 = radius(f.kappa1);
    m.rho2 = radius(f.kappa2);
    m.distance = (p - x).norm();
    const double d = m.distance;
    const double c1 = std::isinf(m.rho1) ? 0.0 : d / (d + m.rho1);
    const double c2 = std::isinf(m.rho2) ? 0.0 : d / (d + m.rho2);
    m.D = c1 * m.tau1 * m.tau1.transpose() + c2 * m.tau2 * m.tau2.transpose() + m.normal * m.normal.transpose();
    return m;
}

inline QuadDistanceModel quad_distance_model(
    const SurfaceJet& jet,
    const Vec3& p,
    const CurvatureClamp& clamp = {},
    std::optional<Index> face = {})
{
    return quad_distance_model(principal_frame(jet, face), jet.position, p, clamp);
}

struct MMWeights {
    Eigen::VectorXd point;   // w_j
    Eigen::MatrixXd tangent; // N x 2, alpha_ij (empty without normals)
};

/// Majorizer weights for the q-power terms at the current iterate.
inline double point_weight(double d, double q, double eps_d)
{
    return 0.5 * q * std::pow(std::max(d, eps_d), q - 2.0);
}

inline double tangent_weight(double residual, double alpha, double q, double eps)
{
    return 0.5 * alpha * q * std::pow(std::max(std::abs(residual), eps), q - 2.0);
}

/// `tangent_residuals` holds <t_j, d_i Phi(u_j)> as an N x 2 matrix (may be empty).
inline MMWeights mm_weights(
    const Eigen::VectorXd& distances,
    const Eigen::MatrixXd& tangent_residuals,
    const FitConfig& config,
    double eps_d)
{
    require(config.q > 1.0 && config.q <= 2.0, "fitting", "q must lie in (1, 2]");
    MMWeights w;
    w.point.resize(distances.size());
    for (Eigen::Index j = 0; j < distances.size(); ++j) w.point[j] = point_weight(distances[j], config.q, eps_d);
    w.tangent.resize(tangent_residuals.rows(), tangent_residuals.cols());
    for (Eigen::Index j = 0; j < tangent_residuals.rows(); ++j) {
        for (Eigen::Index i = 0; i < tangent_residuals.cols(); ++i) {
            w.tangent(j, i) = tangent_weight(tangent_residuals(j, i), config.alpha, config.q, config.eps_tangent);
        }
    }
    return w;
}

} // namespace subdivfit
