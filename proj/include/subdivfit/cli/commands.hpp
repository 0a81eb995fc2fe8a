#pragma once

#include "subdivfit/analysis/functional_map.hpp"
#include "subdivfit/analysis/geodesic.hpp"
#include "subdivfit/analysis/wks.hpp"
#include "subdivfit/cli/config.hpp"
#include "subdivfit/fem/eigen.hpp"
#include "subdivfit/fem/laplace.hpp"
#include "subdivfit/fit/fit.hpp"
#include "subdivfit/init/init.hpp"
#include "subdivfit/io.hpp"
#include "subdivfit/subdivision.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <string>

namespace subdivfit::cli {

namespace detail {

constexpr const char* mod = "cli";

inline QuadMesh load_quad(const std::string& path)
{
    LoadedMesh m = load_mesh(path);
    require(m.is_quad(), mod, path + " is a triangle mesh; a quad control mesh is required (see `init`)");
    return m.quad();
}

inline std::ofstream open_text(const std::string& path)
{
    std::ofstream out(path);
    require(bool(out), mod, "cannot write " + path);
    out << std::setprecision(17);
    return out;
}

inline EigenMethod parse_method(const std::string& s)
{
    if (s == "auto") return EigenMethod::automatic;
    if (s == "iterative") return EigenMethod::iterative;
    if (s == "dense") return EigenMethod::dense;
    throw Error(mod, "unknown eigensolver method '" + s + "' (auto, iterative, dense)");
}

inline EigenOptions eigen_options(double tol, int max_iter, const std::string& method, unsigned seed)
{
    EigenOptions opt;
    opt.tol = tol;
    opt.max_iter = max_iter;
    opt.method = parse_method(method);
    opt.seed = seed;
    return opt;
}

inline void write_eigenvalues(const SpectralBasis& b, const std::string& path)
{
    auto out = open_text(path);
    out << "index,eigenvalue,residual\n";
    for (Eigen::Index k = 0; k < b.size(); ++k) out << k << ',' << b.values[k] << ',' << b.residuals[k] << '\n';
    require(bool(out), mod, "failed writing " + path);
}

inline Eigen::VectorXd read_eigenvalues(const std::string& path)
{
    std::ifstream in(path);
    require(bool(in), mod, "cannot open " + path);
    std::string line;
    std::getline(in, line);
    std::vector<double> v;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto a = line.find(','), b = line.find(',', a + 1);
        require(a != std::string::npos, mod, "malformed eigenvalue row in " + path);
        v.push_back(std::stod(line.substr(a + 1, b - a - 1)));
    }
    return Eigen::Map<Eigen::VectorXd>(v.data(), Eigen::Index(v.size()));
}

inline void write_wks(const WksDescriptor& d, const std::string& path)
{
    auto out = open_text(path);
    out << "vertex_index";
    for (Eigen::Index e = 0; e < d.energies.size(); ++e) out << ",e_" << e;
    out << '\n';
    for (Eigen::Index v = 0; v < d.values.rows(); ++v) {
        out << v;
        for (Eigen::Index e = 0; e < d.values.cols(); ++e) out << ',' << d.values(v, e);
        out << '\n';
    }
    require(bool(out), mod, "failed writing " + path);
}

/// Geodesic field sampled at the limit points of M^levels, written on that
/// mesh with limit positions.
inline void export_geodesic(const QuadMesh& mesh, const GeodesicField& g, double levelline, const std::string& path)
{
    const auto refined = refine(mesh, g.sample_level);
    const SparseMatrix L = limit_evaluation_matrix(LimitSurface(refined.mesh));
    QuadMesh out = refined.mesh;
    out.vertices = L * refined.mesh.vertices;
    VertexFields fields{{"geodesic", L * (refined.matrix * g.chi)}};
    if (levelline != 0.0) add_levelline_field(fields, "geodesic", levelline);
    save_mesh_with_fields(out, fields, path);
}

inline void check_keys(const json& params, const json& known, const std::string& command)
{
    require(params.is_object(), mod, command + ": params must be a JSON object");
    for (const auto& [key, value] : params.items()) {
        require(known.contains(key), mod, command + ": unknown parameter '" + key + "'");
    }
}

} // namespace detail

inline void run_init(const InitParams& p, std::ostream& out, std::ostream& err)
{
    LoadedMesh in = load_mesh(p.input);
    require(!in.is_quad(), detail::mod, p.input + " is already a quad mesh; init expects a triangle mesh");
    const InitResult r = initialize_control_mesh(in.tri(), p.target_vertices);
    if (r.collapse.warnings > 0) {
        err << "warning: init-pipeline: " << r.collapse.warnings << " collapses blocked; stopped at "
            << r.collapse.mesh.num_vertices() << " vertices\n";
    }
    if (r.conversion.split_fallback) err << "warning: init-pipeline: unmatched triangles, split fallback applied\n";
    save_mesh_with_fields(r.mesh, {}, p.output);
    if (p.report_cost) {
        const json report = {
            {"vertices", r.mesh.num_vertices()},
            {"faces", r.mesh.num_faces()},
            {"collapsed_vertices", r.collapse.mesh.num_vertices()},
            {"collapses", r.collapse.collapses},
            {"blocked_collapses", r.collapse.warnings},
            {"quadric_error", r.collapse.total_error},
            {"pairing_cost", r.conversion.total_cost},
            {"matched_pairs", r.conversion.matched_pairs},
            {"unmatched_triangles", r.conversion.unmatched_triangles},
            {"split_fallback", r.conversion.split_fallback}};
        out << report.dump(2) << '\n';
    }
}

inline FitResult run_fit(const FitParams& p, std::ostream& out)
{
    const PointCloud cloud = load_point_cloud(p.cloud);
    const QuadMesh init = detail::load_quad(p.init);
    FitConfig cfg;
    cfg.q = p.q;
    cfg.alpha = p.alpha;
    cfg.beta = p.beta;
    cfg.samples_per_face = p.samples_per_face;
    cfg.outer_max_iter = p.max_iter;
    cfg.cg_tol = p.cg_tol;
    cfg.energy_decrease_tol = p.energy_decrease_tol;
    FitResult r = fit(cloud, init, cfg);
    save_mesh_with_fields(r.mesh, {}, p.out);
    if (!p.energy_log.empty()) {
        // Accepted iterates only, so the log is the best-energy sequence.
        auto log = detail::open_text(p.energy_log);
        log << "iter,E_point,E_tangent,E_reg,E_total\n";
        for (int i = 0; i <= r.best_iteration; ++i) {
            const auto& h = r.history[std::size_t(i)];
            log << h.iter << ',' << h.energy.point << ',' << h.energy.tangent << ',' << h.energy.reg << ','
                << h.energy.total() << '\n';
        }
        require(bool(log), detail::mod, "failed writing " + p.energy_log);
    }
    out << "fit: " << r.stop_reason << " after " << r.history.size() - 1 << " iterations, best energy "
        << std::setprecision(10) << r.best_energy() << " at iteration " << r.best_iteration << '\n';
    return r;
}

inline void run_subdivide(const SubdivideParams& p)
{
    const QuadMesh mesh = detail::load_quad(p.input);
    auto level = refine(mesh, p.levels);
    if (p.limit) {
        const SparseMatrix L = limit_evaluation_matrix(LimitSurface(level.mesh));
        level.matrix = SparseMatrix(L * level.matrix);
        level.mesh.vertices = level.matrix * mesh.vertices;
    }
    save_mesh_with_fields(level.mesh, {}, p.output);
    if (!p.out_matrix.empty()) save_matrix_market(Eigen::SparseMatrix<double>(level.matrix), p.out_matrix);
}

inline OperatorMatrices run_laplace(const LaplaceParams& p, std::ostream& out)
{
    const QuadMesh mesh = detail::load_quad(p.input);
    OperatorMatrices op = assemble(mesh, p.quadrature);
    if (!p.out_d0.empty()) save_matrix_market(Eigen::SparseMatrix<double>(op.D0), p.out_d0);
    if (!p.out_d1.empty()) save_matrix_market(Eigen::SparseMatrix<double>(op.D1), p.out_d1);
    out << "laplace: n = " << op.D0.rows() << ", area = " << std::setprecision(10) << op.D0.sum() << '\n';
    return op;
}

inline SpectralBasis run_eigen(const EigenParams& p, unsigned seed, std::ostream& out)
{
    const QuadMesh mesh = detail::load_quad(p.input);
    const SpectralBasis b =
        eigensolve(assemble(mesh, p.quadrature), p.k, detail::eigen_options(p.tol, p.max_iter, p.method, seed));
    if (!p.out_values.empty()) detail::write_eigenvalues(b, p.out_values);
    if (!p.out_vectors.empty()) save_dense_array(b.vectors, p.out_vectors);
    out << "eigen: " << b.size() << " pairs via " << b.method << ", max residual " << std::setprecision(3)
        << b.residuals.maxCoeff() << '\n';
    return b;
}

inline void run_wks(const WksParams& p, unsigned seed)
{
    const QuadMesh mesh = detail::load_quad(p.input);
    const OperatorMatrices op = assemble(mesh, p.quadrature);
    const SpectralBasis b = eigensolve(op, p.k, detail::eigen_options(EigenOptions{}.tol, EigenOptions{}.max_iter, "auto", seed));
    const Eigen::MatrixXd phi = limit_evaluation_matrix(LimitSurface(mesh)) * b.vectors;
    detail::write_wks(wks(b, phi, p.energies, p.sigma_factor), p.out);
}

inline GeodesicField run_geodesic(const GeodesicParams& p)
{
    const QuadMesh mesh = detail::load_quad(p.input);
    const FemDiscretization disc = discretize(LimitSurface(mesh), mesh.vertices, p.quadrature);
    const GeodesicField g = heat_geodesic(mesh, disc, assemble(disc), p.source, p.m_factor, p.levels);
    if (!p.out.empty()) detail::export_geodesic(mesh, g, p.levelline, p.out);
    return g;
}

inline FunctionalMap run_match(const MatchParams& p, unsigned seed, std::ostream& out)
{
    struct Shape {
        OperatorMatrices op;
        SpectralBasis basis;
        Eigen::MatrixXd phi, coeffs;
    };
    const EigenOptions opt = detail::eigen_options(EigenOptions{}.tol, EigenOptions{}.max_iter, "auto", seed);
    auto load = [&](const std::string& path) {
        const QuadMesh mesh = detail::load_quad(path);
        Shape s;
        s.op = assemble(mesh, p.quadrature);
        s.basis = eigensolve(s.op, p.k, opt);
        s.phi = limit_evaluation_matrix(LimitSurface(mesh)) * s.basis.vectors;
        s.coeffs = spectral_coefficients(s.basis, s.op.D0, wks(s.basis, s.phi, p.energies).values, p.k);
        return s;
    };
    const Shape a = load(p.shape_a), b = load(p.shape_b);
    const FunctionalMap C = functional_map(a.basis, b.basis, a.coeffs, b.coeffs, p.k, p.mu);
    if (!p.out_map.empty()) save_matrix_market(C.C, p.out_map);
    if (!p.out_corr.empty()) {
        const std::vector<Index> map = point_map(C.C, a.phi, b.phi);
        auto csv = detail::open_text(p.out_corr);
        csv << "a_index,b_index\n";
        for (std::size_t i = 0; i < map.size(); ++i) csv << i << ',' << map[i] << '\n';
        require(bool(csv), detail::mod, "failed writing " + p.out_corr);
    }
    out << "match: residual " << std::setprecision(6) << C.residual << '\n';
    return C;
}

inline void run_export(const ExportParams& p)
{
    LoadedMesh in = load_mesh(p.input);
    if (!in.is_quad()) {
        require(p.levels == 0 && !p.limit, detail::mod, "refinement and limit export need a quad control mesh");
        save_mesh_with_fields(in.tri(), in.fields, p.output);
        return;
    }
    auto level = refine(in.quad(), p.levels);
    if (p.limit) level.matrix = SparseMatrix(limit_evaluation_matrix(LimitSurface(level.mesh)) * level.matrix);
    level.mesh.vertices = level.matrix * in.quad().vertices;
    VertexFields fields;
    for (const auto& f : in.fields) fields.push_back({f.name, level.matrix * f.values});
    save_mesh_with_fields(level.mesh, fields, p.output);
}

/// Executes a resolved configuration of a single-stage subcommand.
inline void run_command(const RunConfig& c, std::ostream& out, std::ostream& err)
{
    auto parse = [&](auto prototype) {
        detail::check_keys(c.params, json(prototype), c.command);
        return c.params.get<decltype(prototype)>();
    };
    if (c.command == "init") return run_init(parse(InitParams{}), out, err);
    if (c.command == "fit") return void(run_fit(parse(FitParams{}), out));
    if (c.command == "subdivide") return run_subdivide(parse(SubdivideParams{}));
    if (c.command == "laplace") return void(run_laplace(parse(LaplaceParams{}), out));
    if (c.command == "eigen") return void(run_eigen(parse(EigenParams{}), c.seed, out));
    if (c.command == "wks") return run_wks(parse(WksParams{}), c.seed);
    if (c.command == "geodesic") return void(run_geodesic(parse(GeodesicParams{})));
    if (c.command == "match") return void(run_match(parse(MatchParams{}), c.seed, out));
    if (c.command == "export") return run_export(parse(ExportParams{}));
    throw Error(detail::mod, "unknown command '" + c.command + "'");
}

} // namespace subdivfit::cli
