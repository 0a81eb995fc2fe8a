#pragma once

#include "subdivfit/cli/commands.hpp"
#include "subdivfit/cli/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace subdivfit::cli {

/// Command-line entry point. Exit codes: 0 success, 1 module error,
/// 2 usage error (unknown flag, missing argument).
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Catmull-Clark surface fitting and spectral shape analysis", "subdivfit"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    std::string config_out;
    bool dry_run = false;
    unsigned seed = EigenOptions{}.seed;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_out, "Write the resolved run configuration (JSON) to this path");
        sub->add_flag("--dry-run", dry_run, "Resolve and dump the configuration without running");
        sub->add_option("--seed", seed, "Seed of the eigensolver's random start block")->capture_default_str();
    };

    InitParams ip;
    auto* init = app.add_subcommand("init", "Quad control mesh from a dense triangle mesh (edge collapse + pairing)");
    init->add_option("input", ip.input, "Closed triangle mesh (.obj/.ply)")->required();
    init->add_option("output", ip.output, "Quad control mesh to write")->required();
    init->add_option("--target-vertices", ip.target_vertices, "Vertex count after edge collapse (>= 4)")->required();
    init->add_flag("--report-cost", ip.report_cost, "Print collapse error and matching cost as JSON");
    common(init);

    FitParams fp;
    auto* fitc = app.add_subcommand("fit", "Fit a control mesh to a point cloud");
    fitc->add_option("--init", fp.init, "Initial quad control mesh")->required();
    fitc->add_option("--cloud", fp.cloud, "Point cloud (.ply with optional nx,ny,nz, or .obj)")->required();
    fitc->add_option("--out", fp.out, "Fitted control mesh")->required();
    fitc->add_option("--energy-log", fp.energy_log, "CSV of the best-energy sequence");
    fitc->add_option("--q", fp.q, "Robust exponent in (1, 2]")->capture_default_str();
    fitc->add_option("--alpha", fp.alpha, "Tangent term weight")->required();
    fitc->add_option("--beta", fp.beta, "Edge-length regularizer weight")->required();
    fitc->add_option("--samples-per-face", fp.samples_per_face, "Surface samples per face and axis")->capture_default_str();
    fitc->add_option("--max-iter", fp.max_iter, "Outer iteration cap")->capture_default_str();
    fitc->add_option("--cg-tol", fp.cg_tol, "Relative CG residual tolerance")->capture_default_str();
    fitc->add_option("--energy-decrease-tol", fp.energy_decrease_tol, "Relative energy decrease to continue")
        ->capture_default_str();
    common(fitc);

    SubdivideParams sp;
    auto* sub = app.add_subcommand("subdivide", "Catmull-Clark refinement");
    sub->add_option("input", sp.input, "Quad control mesh")->required();
    sub->add_option("output", sp.output, "Refined mesh")->required();
    sub->add_option("--levels", sp.levels, "Refinement steps")->capture_default_str();
    sub->add_flag("--limit", sp.limit, "Move refined vertices to their limit positions");
    sub->add_option("--out-matrix", sp.out_matrix, "Refinement matrix (Matrix Market)");
    common(sub);

    LaplaceParams lp;
    auto* lap = app.add_subcommand("laplace", "Mass and stiffness matrices of the limit surface");
    lap->add_option("input", lp.input, "Quad control mesh")->required();
    lap->add_option("--quadrature", lp.quadrature, "Gauss points per axis")->capture_default_str();
    lap->add_option("--out-d0", lp.out_d0, "Mass matrix (Matrix Market)");
    lap->add_option("--out-d1", lp.out_d1, "Stiffness matrix (Matrix Market)");
    common(lap);

    EigenParams ep;
    auto* eig = app.add_subcommand("eigen", "Smallest Laplace-Beltrami eigenpairs");
    eig->add_option("input", ep.input, "Quad control mesh")->required();
    eig->add_option("--k", ep.k, "Number of eigenpairs")->capture_default_str();
    eig->add_option("--tol", ep.tol, "Backward-error tolerance")->capture_default_str();
    eig->add_option("--max-iter", ep.max_iter, "Iteration cap of the iterative solver")->capture_default_str();
    eig->add_option("--quadrature", ep.quadrature, "Gauss points per axis")->capture_default_str();
    eig->add_option("--method", ep.method, "auto | iterative | dense")->capture_default_str();
    eig->add_option("--out-values", ep.out_values, "Eigenvalue CSV");
    eig->add_option("--out-vectors", ep.out_vectors, "Eigenvector coefficients (binary, JSON header)");
    common(eig);

    WksParams wp;
    auto* wk = app.add_subcommand("wks", "Wave-kernel signature per control vertex");
    wk->add_option("input", wp.input, "Quad control mesh")->required();
    wk->add_option("--out", wp.out, "CSV, one row per vertex, one column per energy")->required();
    wk->add_option("--k", wp.k, "Eigenpairs (including the constant mode)")->capture_default_str();
    wk->add_option("--energies", wp.energies, "Energy levels")->capture_default_str();
    wk->add_option("--sigma-factor", wp.sigma_factor, "Gaussian width in energy-grid spacings")->capture_default_str();
    wk->add_option("--quadrature", wp.quadrature, "Gauss points per axis")->capture_default_str();
    common(wk);

    GeodesicParams gp;
    auto* geo = app.add_subcommand("geodesic", "Heat-method geodesic distance from a control vertex");
    geo->add_option("input", gp.input, "Quad control mesh")->required();
    geo->add_option("--source", gp.source, "Source control vertex")->capture_default_str();
    geo->add_option("--out", gp.out, "Refined mesh with the field (.ply, or .obj + CSV sidecar)")->required();
    geo->add_option("--m-factor", gp.m_factor, "Heat time t = m h^2")->capture_default_str();
    geo->add_option("--levelline", gp.levelline, "Also export cos(varpi g) for this varpi (0: off)")->capture_default_str();
    geo->add_option("--levels", gp.levels, "Refinement level of the exported samples")->capture_default_str();
    geo->add_option("--quadrature", gp.quadrature, "Gauss points per axis")->capture_default_str();
    common(geo);

    MatchParams mp;
    auto* mat = app.add_subcommand("match", "Functional map and point correspondence between two shapes");
    mat->add_option("--shape-a", mp.shape_a, "Source quad control mesh")->required();
    mat->add_option("--shape-b", mp.shape_b, "Target quad control mesh")->required();
    mat->add_option("--k", mp.k, "Eigenpairs per shape")->capture_default_str();
    mat->add_option("--mu", mp.mu, "Eigenvalue-commutativity regularization")->capture_default_str();
    mat->add_option("--energies", mp.energies, "WKS descriptor levels")->capture_default_str();
    mat->add_option("--quadrature", mp.quadrature, "Gauss points per axis")->capture_default_str();
    mat->add_option("--out-map", mp.out_map, "C as Matrix Market");
    mat->add_option("--out-corr", mp.out_corr, "Correspondence CSV a_index,b_index");
    common(mat);

    ExportParams xp;
    auto* exp = app.add_subcommand("export", "Convert a mesh, optionally refined or at the limit, with its fields");
    exp->add_option("input", xp.input, "Mesh (.obj/.ply)")->required();
    exp->add_option("output", xp.output, "Output mesh (.obj/.ply)")->required();
    exp->add_option("--levels", xp.levels, "Refinement steps")->capture_default_str();
    exp->add_flag("--limit", xp.limit, "Evaluate positions and fields at limit points");
    common(exp);

    std::string pipeline_config;
    auto* pipe = app.add_subcommand("pipeline", "Run init, fit, laplace, eigen and analysis from a JSON config");
    pipe->add_option("config_file", pipeline_config, "Pipeline configuration (JSON)")->required();
    bool force = false;
    pipe->add_flag("--force", force, "Execute every stage even when an earlier run has matching outputs");
    common(pipe);

    std::string rerun_config;
    auto* rerun = app.add_subcommand("rerun", "Execute a configuration written by --config");
    rerun->add_option("config_file", rerun_config, "Run configuration (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 2;
    }

    try {
        RunConfig rc;
        rc.seed = seed;
        if (rerun->parsed()) {
            rc = run_config_from_json(read_json(rerun_config));
            if (rc.command == "pipeline") {
                run_pipeline(parse_pipeline_config(rc.params), out);
            } else {
                run_command(rc, out, err);
            }
            return 0;
        }
        if (pipe->parsed()) {
            const fs::path file = pipeline_config;
            json j = read_json(file);
            if (pipe->count("--seed")) j["seed"] = seed;
            const PipelineConfig pc = parse_pipeline_config(j, file.parent_path());
            rc = {"pipeline", pc.seed, to_json(pc)};
            if (!config_out.empty()) write_json(to_json(rc), config_out);
            if (!dry_run) run_pipeline(pc, out, force);
            return 0;
        }
        const CLI::App* chosen = app.get_subcommands().front();
        rc.command = chosen->get_name();
        if (chosen == init) rc.params = ip;
        else if (chosen == fitc) rc.params = fp;
        else if (chosen == sub) rc.params = sp;
        else if (chosen == lap) rc.params = lp;
        else if (chosen == eig) rc.params = ep;
        else if (chosen == wk) rc.params = wp;
        else if (chosen == geo) rc.params = gp;
        else if (chosen == mat) rc.params = mp;
        else if (chosen == exp) rc.params = xp;
        if (!config_out.empty()) write_json(to_json(rc), config_out);
        if (!dry_run) run_command(rc, out, err);
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: cli: " << e.what() << '\n';
        return 1;
    }
}

} // namespace subdivfit::cli
