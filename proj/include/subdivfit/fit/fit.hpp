#pragma once

#include "subdivfit/fit/correspondence.hpp"
#include "subdivfit/fit/model.hpp"
#include "subdivfit/fit/system.hpp"
#include "subdivfit/mesh.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace subdivfit {

struct EnergyTerms {
    double point = 0.0;
    double tangent = 0.0;
    double reg = 0.0;

    double total() const { return point + tangent + reg; }
};

/// Robust fitting energy of V for fixed correspondences:
/// sum ||Phi(u_j) - p_j||^q + alpha sum |<t_j, d_i Phi(u_j)>|^q + beta ||R V||^2.
inline EnergyTerms energy(
    const Positions& V,
    const SurfaceSampler& sampler,
    const PointCloud& cloud,
    const Correspondences& corr,
    const FitConfig& config,
    const SparseMatrix& R)
{
    EnergyTerms e;
    const bool tangent = cloud.normals && config.alpha > 0.0;
    for (Eigen::Index j = 0; j < cloud.points.rows(); ++j) {
        const BasisRow& row = sampler.row(corr.sample[std::size_t(j)]);
        const Vec3 p = cloud.points.row(j).transpose();
        e.point += std::pow((row.apply(V, kValue) - p).norm(), config.q);
        if (tangent) {
            const Vec3 t = cloud.normals->row(j).transpose();
            e.tangent += std::pow(std::abs(t.dot(row.apply(V, kDu))), config.q);
            e.tangent += std::pow(std::abs(t.dot(row.apply(V, kDv))), config.q);
        }
    }
    e.tangent *= config.alpha;
    if (config.beta > 0.0) e.reg = config.beta * Positions(R * V).squaredNorm();
    return e;
}

struct FitIteration {
    int iter;
    EnergyTerms energy;
    int cg_iterations;
    double cg_residual;
};

struct FitResult {
    QuadMesh mesh;
    std::vector<FitIteration> history; // every evaluated iterate, iteration 0 = init
    int best_iteration = 0;
    std::string stop_reason;
    Correspondences correspondences;

    double best_energy() const { return history[std::size_t(best_iteration)].energy.total(); }
};

/// Per-iteration state of the MM scheme, exposed for inspection and tests.
struct FitModelState {
    std::vector<Mat3> D;
    MMWeights weights;
    Eigen::MatrixXd tangent_residuals;
};

inline FitModelState build_model_state(
    const Positions& V,
    const SurfaceSampler& sampler,
    const PointCloud& cloud,
    const Correspondences& corr,
    const FitConfig& config,
    double eps_d,
    const CurvatureClamp& clamp)
{
    const std::size_t n = corr.size();
    // Principal frames are shared by all points attached to the same sample.
    std::vector<char> used(sampler.size(), 0);
    for (Index k : corr.sample) used[k] = 1;
    std::vector<PrincipalFrame> frames(sampler.size());
    parallel_for(0, sampler.size(), [&](std::size_t k) {
        if (!used[k]) return;
        frames[k] = principal_frame(make_jet(V, sampler.row(k)), sampler.param(k).face);
    });

    FitModelState s;
    s.D.resize(n);
    const bool tangent = cloud.normals && config.alpha > 0.0;
    if (tangent) s.tangent_residuals.resize(Eigen::Index(n), 2);
    parallel_for(0, n, [&](std::size_t j) {
        const Index k = corr.sample[j];
        const Vec3 p = cloud.points.row(Eigen::Index(j)).transpose();
        const Vec3 x = corr.footpoints.row(Eigen::Index(j)).transpose();
        s.D[j] = quad_distance_model(frames[k], x, p, clamp).D;
        if (tangent) {
            const Vec3 t = cloud.normals->row(Eigen::Index(j)).transpose();
            s.tangent_residuals(Eigen::Index(j), 0) = t.dot(sampler.row(k).apply(V, kDu));
            s.tangent_residuals(Eigen::Index(j), 1) = t.dot(sampler.row(k).apply(V, kDv));
        }
    });
    s.weights = mm_weights(corr.distances, s.tangent_residuals, config, eps_d);
    return s;
}

/// Fits the control vertices of `init` to the cloud by majorize-minimize
/// iterations. Returns the iterate with the lowest true energy.
inline FitResult fit(
    const PointCloud& cloud,
    const QuadMesh& init,
    const FitConfig& config,
    const std::function<void(const FitIteration&)>& on_iteration = {})
{
    config.validate();
    validate(cloud);
    const LimitSurface surface(init);
    const SurfaceSampler sampler(surface, config.samples_per_face);
    const QuadraticAssembler assembler(sampler, surface.topology());
    const SparseMatrix R = regularizer_matrix(surface.topology());
    const double diag = bounding_box_diagonal(cloud.points);
    const double eps_d = config.eps_residual.value_or(1e-6 * (diag > 0.0 ? diag : 1.0));
    const CurvatureClamp clamp = CurvatureClamp::from_diagonal(diag > 0.0 ? diag : 1.0);
    FitConfig cfg = config;
    if (!cloud.normals) cfg.alpha = 0.0;

    FitResult result;
    Positions V = init.vertices;
    Correspondences corr = update_correspondences(sampler, V, cloud.points);
    EnergyTerms E = energy(V, sampler, cloud, corr, cfg, R);
    result.history.push_back({0, E, 0, 0.0});
    if (on_iteration) on_iteration(result.history.back());
    result.stop_reason = "max_iter";

    for (int it = 1; it <= cfg.outer_max_iter; ++it) {
        const FitModelState state = build_model_state(V, sampler, cloud, corr, cfg, eps_d, clamp);
        QuadraticTerms terms;
        terms.points = &cloud.points;
        terms.normals = cfg.alpha > 0.0 ? &*cloud.normals : nullptr;
        terms.corr = &corr;
        terms.weights = &state.weights;
        terms.D = &state.D;
        terms.beta = cfg.beta;
        const QuadraticSystem sys = assembler.assemble(terms);
        CgReport rep;
        const Positions Vnext = cg_solve(sys, V, cfg.cg_tol, cfg.cg_max_iter, &rep);
        Correspondences next = update_correspondences(sampler, Vnext, cloud.points);
        const EnergyTerms Enext = energy(Vnext, sampler, cloud, next, cfg, R);
        result.history.push_back({it, Enext, rep.iterations, rep.relative_residual});
        if (on_iteration) on_iteration(result.history.back());

        if (!std::isfinite(Enext.total()) || Enext.total() > E.total()) {
            result.stop_reason = "energy_increase";
            break;
        }
        const double decrease = E.total() - Enext.total();
        V = Vnext;
        corr = std::move(next);
        result.best_iteration = it;
        E = Enext;
        if (decrease < cfg.energy_decrease_tol * (E.total() + decrease)) {
            result.stop_reason = "converged";
            break;
        }
    }
    result.mesh.faces = init.faces;
    result.mesh.vertices = V;
    result.correspondences = std::move(corr);
    return result;
}

struct Projection {
    std::vector<SurfaceParam> params;
    Eigen::VectorXd distances;
};

/// Closest points on the limit surface: nearest of a dense sample grid, then
/// Newton iterations on (u, v) that may walk across face edges.
inline Projection project_to_surface(
    const LimitSurface& surface,
    const Positions& V,
    const Positions& points,
    int samples_per_face = 8)
{
    const SurfaceSampler sampler(surface, samples_per_face);
    const Correspondences start = update_correspondences(sampler, V, points);
    const auto& t = surface.topology();
    constexpr double cu[4] = {0, 1, 1, 0};
    constexpr double cv[4] = {0, 0, 1, 1};

    Projection out;
    out.params.resize(std::size_t(points.rows()));
    out.distances.resize(points.rows());
    parallel_for(0, std::size_t(points.rows()), [&](std::size_t j) {
        const Vec3 p = points.row(Eigen::Index(j)).transpose();
        SurfaceParam u = start.params[j];
        double best = start.distances[Eigen::Index(j)];
        SurfaceParam best_u = u;
        int hops = 0;
        for (int iter = 0; iter < 40; ++iter) {
            const SurfaceJet jet = surface.evaluate(V, u);
            const Vec3 r = jet.position - p;
            const double d = r.norm();
            if (d < best) {
                best = d;
                best_u = u;
            }
            const Vec2 g(r.dot(jet.du), r.dot(jet.dv));
            Mat2 H;
            H << jet.du.dot(jet.du), jet.du.dot(jet.dv), jet.du.dot(jet.dv), jet.dv.dot(jet.dv);
            Mat2 Hfull = H;
            Hfull(0, 0) += r.dot(jet.duu);
            Hfull(0, 1) += r.dot(jet.duv);
            Hfull(1, 0) += r.dot(jet.duv);
            Hfull(1, 1) += r.dot(jet.dvv);
            const bool pd = Hfull.determinant() > 0.0 && Hfull(0, 0) > 0.0;
            Vec2 step = -(pd ? Hfull : H).ldlt().solve(g);
            if (!step.allFinite()) break;
            double nu = u.u + step[0];
            double nv = u.v + step[1];
            const bool outside = nu < 0.0 || nu > 1.0 || nv < 0.0 || nv > 1.0;
            if (outside && hops < 6) {
                // Leave through the edge crossed first and continue in the neighbour.
                double s_exit = 1.0;
                int corner = -1;
                auto test = [&](double from, double delta, double bound, int c) {
                    if (delta == 0.0) return;
                    const double s = (bound - from) / delta;
                    if (s >= 0.0 && s < s_exit) {
                        s_exit = s;
                        corner = c;
                    }
                };
                test(u.v, step[1], 0.0, 0); // edge corner0 -> corner1 (v = 0)
                test(u.u, step[0], 1.0, 1); // corner1 -> corner2 (u = 1)
                test(u.v, step[1], 1.0, 2); // corner2 -> corner3 (v = 1)
                test(u.u, step[0], 0.0, 3); // corner3 -> corner0 (u = 0)
                if (corner >= 0) {
                    const double eu = std::clamp(u.u + s_exit * step[0], 0.0, 1.0);
                    const double ev = std::clamp(u.v + s_exit * step[1], 0.0, 1.0);
                    const Vec2 a(cu[corner], cv[corner]);
                    const Vec2 b(cu[(corner + 1) % 4], cv[(corner + 1) % 4]);
                    const double frac = std::clamp((Vec2(eu, ev) - a).dot(b - a), 0.0, 1.0);
                    const Index h = t.twin(t.face_halfedge(u.face, Index(corner)));
                    const int c2 = int(h % 4);
                    const Vec2 a2(cu[c2], cv[c2]);
                    const Vec2 b2(cu[(c2 + 1) % 4], cv[(c2 + 1) % 4]);
                    const Vec2 q = a2 + (1.0 - frac) * (b2 - a2);
                    u = {t.face(h), q[0], q[1]};
                    ++hops;
                    continue;
                }
            }
            nu = std::clamp(nu, 0.0, 1.0);
            nv = std::clamp(nv, 0.0, 1.0);
            if (std::abs(nu - u.u) + std::abs(nv - u.v) < 1e-13) break;
            u = {u.face, nu, nv};
        }
        const double final_d = (surface.evaluate(V, u).position - p).norm();
        if (final_d < best) {
            best = final_d;
            best_u = u;
        }
        out.params[j] = best_u;
        out.distances[Eigen::Index(j)] = best;
    });
    return out;
}

inline double rms(const Eigen::VectorXd& d)
{
    return d.size() ? std::sqrt(d.squaredNorm() / double(d.size())) : 0.0;
}

} // namespace subdivfit
