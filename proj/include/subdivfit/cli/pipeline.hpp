#pragma once

#include "subdivfit/cli/commands.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace subdivfit::cli {

namespace fs = std::filesystem;

/// Resolved pipeline configuration. Stages: init -> fit -> laplace -> eigen
/// -> analysis (WKS + heat geodesic).
struct PipelineConfig {
    std::string mesh;  // dense closed triangle mesh
    std::string cloud; // optional fitting target; the mesh vertices when empty
    std::string runs_dir = "runs";
    unsigned seed = EigenOptions{}.seed;
    Index target_vertices = 0;
    FitParams fit;
    int quadrature = 3;
    int k = 16;
    double tol = EigenOptions{}.tol;
    int wks_energies = 100;
    double sigma_factor = 2.0;
    Index geodesic_source = 0;
    double m_factor = kDefaultHeatTimeFactor;
    double levelline = 0.0;
    int levels = 2;
};

inline json to_json(const PipelineConfig& c)
{
    return json{
        {"inputs", {{"mesh", c.mesh}, {"cloud", c.cloud}}},
        {"runs_dir", c.runs_dir},
        {"seed", c.seed},
        {"init", {{"target_vertices", c.target_vertices}}},
        {"fit",
         {{"q", c.fit.q},
          {"alpha", c.fit.alpha},
          {"beta", c.fit.beta},
          {"samples_per_face", c.fit.samples_per_face},
          {"max_iter", c.fit.max_iter},
          {"cg_tol", c.fit.cg_tol},
          {"energy_decrease_tol", c.fit.energy_decrease_tol}}},
        {"laplace", {{"quadrature", c.quadrature}}},
        {"eigen", {{"k", c.k}, {"tol", c.tol}}},
        {"analysis",
         {{"wks_energies", c.wks_energies},
          {"sigma_factor", c.sigma_factor},
          {"geodesic_source", c.geodesic_source},
          {"m_factor", c.m_factor},
          {"levelline", c.levelline},
          {"levels", c.levels}}}};
}

namespace pipeline_detail {

constexpr const char* mod = "pipeline";

/// Typed field lookup by dotted path; errors name the field.
class Reader {
public:
    explicit Reader(const json& root) : m_root(root) {}

    const json* find(const std::string& path) const
    {
        const json* node = &m_root;
        std::size_t start = 0;
        while (true) {
            const auto dot = path.find('.', start);
            const std::string key = path.substr(start, dot - start);
            require(node->is_object(), mod, "config field '" + path.substr(0, start ? start - 1 : 0) + "' must be an object");
            const auto it = node->find(key);
            if (it == node->end() || it->is_null()) return nullptr;
            node = &*it;
            if (dot == std::string::npos) return node;
            start = dot + 1;
        }
    }

    template <typename T>
    void get(const std::string& path, T& out, bool required = false) const
    {
        const json* node = find(path);
        if (!node) {
            require(!required, mod, "config is missing required field '" + path + "'");
            return;
        }
        try {
            out = node->get<T>();
        } catch (const json::exception&) {
            throw Error(mod, "config field '" + path + "' has the wrong type (" + std::string(node->type_name()) + ")");
        }
    }

private:
    const json& m_root;
};

inline void check_known(const json& j, const json& known, const std::string& prefix)
{
    if (!j.is_object()) return;
    for (const auto& [key, value] : j.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        require(known.contains(key), mod, "config has unknown field '" + path + "'");
        if (known[key].is_object()) check_known(value, known[key], path);
    }
}

inline std::string utc_stamp()
{
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

inline fs::path fresh_run_dir(const fs::path& runs)
{
    fs::create_directories(runs);
    const std::string stamp = utc_stamp();
    fs::path dir = runs / stamp;
    for (int i = 1; fs::exists(dir); ++i) dir = runs / (stamp + "-" + std::to_string(i));
    fs::create_directory(dir);
    return dir;
}

struct Stage {
    std::string name;
    json params;
    std::map<std::string, fs::path> inputs;  // role -> file
    std::map<std::string, std::string> outputs; // role -> file name inside the run dir
    std::function<void(const std::map<std::string, fs::path>&)> run; // receives output paths
};

/// Finds an earlier run whose stage with the same key still has intact
/// outputs; returns that run directory.
inline std::optional<fs::path> find_cached(const fs::path& runs, const fs::path& current, const std::string& name, const std::string& key)
{
    if (!fs::exists(runs)) return std::nullopt;
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(runs)) {
        if (e.is_directory() && e.path() != current && fs::exists(e.path() / "manifest.json")) dirs.push_back(e.path());
    }
    std::sort(dirs.rbegin(), dirs.rend()); // newest first
    for (const auto& dir : dirs) {
        json manifest;
        try {
            manifest = read_json(dir / "manifest.json");
        } catch (const Error&) {
            continue;
        }
        for (const auto& s : manifest.value("stages", json::array())) {
            if (s.value("name", "") != name || s.value("key", "") != key) continue;
            const std::string status = s.value("status", "");
            if (status != "executed" && status != "cached") continue;
            bool intact = true;
            for (const auto& [role, o] : s.at("outputs").items()) {
                const fs::path p = dir / o.at("file").get<std::string>();
                if (!fs::exists(p) || hash_file(p) != o.at("hash").get<std::string>()) intact = false;
            }
            if (intact) return dir;
        }
    }
    return std::nullopt;
}

} // namespace pipeline_detail

/// Parses and validates a pipeline configuration. Relative paths resolve
/// against `base` (the configuration file's directory).
inline PipelineConfig parse_pipeline_config(const json& j, const fs::path& base = {})
{
    using pipeline_detail::mod;
    require(j.is_object(), mod, "config must be a JSON object");
    PipelineConfig c;
    pipeline_detail::check_known(j, to_json(c), "");
    const pipeline_detail::Reader r(j);
    r.get("inputs.mesh", c.mesh, true);
    r.get("inputs.cloud", c.cloud);
    r.get("runs_dir", c.runs_dir);
    r.get("seed", c.seed);
    r.get("init.target_vertices", c.target_vertices, true);
    r.get("fit.q", c.fit.q);
    r.get("fit.alpha", c.fit.alpha, true);
    r.get("fit.beta", c.fit.beta, true);
    r.get("fit.samples_per_face", c.fit.samples_per_face);
    r.get("fit.max_iter", c.fit.max_iter);
    r.get("fit.cg_tol", c.fit.cg_tol);
    r.get("fit.energy_decrease_tol", c.fit.energy_decrease_tol);
    r.get("laplace.quadrature", c.quadrature);
    r.get("eigen.k", c.k);
    r.get("eigen.tol", c.tol);
    r.get("analysis.wks_energies", c.wks_energies);
    r.get("analysis.sigma_factor", c.sigma_factor);
    r.get("analysis.geodesic_source", c.geodesic_source);
    r.get("analysis.m_factor", c.m_factor);
    r.get("analysis.levelline", c.levelline);
    r.get("analysis.levels", c.levels);

    auto resolve = [&](std::string& p) {
        if (!p.empty() && fs::path(p).is_relative() && !base.empty()) p = (base / p).lexically_normal().string();
    };
    resolve(c.mesh);
    resolve(c.cloud);
    resolve(c.runs_dir);
    require(fs::exists(c.mesh), mod, "config field 'inputs.mesh': file not found: " + c.mesh);
    require(c.cloud.empty() || fs::exists(c.cloud), mod, "config field 'inputs.cloud': file not found: " + c.cloud);
    require(c.target_vertices >= 4, mod, "config field 'init.target_vertices' must be at least 4");
    require(c.k >= 2, mod, "config field 'eigen.k' must be at least 2");
    return c;
}

struct PipelineResult {
    fs::path run_dir;
    json manifest;
};

/// Runs every stage in order inside a fresh `runs/<timestamp>` directory. A
/// stage whose key (name, parameters, input hashes) matches a completed stage
/// of an earlier run reuses that run's outputs instead of executing, unless
/// `force` is set.
inline PipelineResult run_pipeline(const PipelineConfig& c, std::ostream& out, bool force = false)
{
    using namespace pipeline_detail;
    const fs::path runs = c.runs_dir;
    const fs::path dir = fresh_run_dir(runs);
    const json config = to_json(c);

    std::vector<Stage> stages;
    stages.push_back({"init", config["init"], {{"mesh", c.mesh}}, {{"control", "control.obj"}}, [&](const auto& o) {
                          InitParams p{c.mesh, o.at("control").string(), c.target_vertices, false};
                          std::ostringstream sink;
                          run_init(p, sink, sink);
                      }});
    stages.push_back(
        {"fit",
         config["fit"],
         {{"control", dir / "control.obj"}, {"cloud", c.cloud.empty() ? fs::path(c.mesh) : fs::path(c.cloud)}},
         {{"fitted", "fitted.obj"}, {"energy_log", "energy.csv"}},
         [&](const auto& o) {
             FitParams p = c.fit;
             p.init = (dir / "control.obj").string();
             p.cloud = c.cloud.empty() ? c.mesh : c.cloud;
             p.out = o.at("fitted").string();
             p.energy_log = o.at("energy_log").string();
             std::ostringstream sink;
             run_fit(p, sink);
         }});
    stages.push_back(
        {"laplace",
         config["laplace"],
         {{"fitted", dir / "fitted.obj"}},
         {{"D0", "D0.mtx"}, {"D1", "D1.mtx"}},
         [&](const auto& o) {
             std::ostringstream sink;
             run_laplace({(dir / "fitted.obj").string(), o.at("D0").string(), o.at("D1").string(), c.quadrature}, sink);
         }});
    stages.push_back(
        {"eigen",
         json{{"k", c.k}, {"tol", c.tol}, {"seed", c.seed}},
         {{"D0", dir / "D0.mtx"}, {"D1", dir / "D1.mtx"}},
         {{"values", "eigenvalues.csv"}, {"vectors", "eigenvectors.bin"}},
         [&](const auto& o) {
             OperatorMatrices op{SparseMatrix(load_matrix_market(dir / "D0.mtx")), SparseMatrix(load_matrix_market(dir / "D1.mtx"))};
             const SpectralBasis b = eigensolve(op, c.k, detail::eigen_options(c.tol, EigenOptions{}.max_iter, "auto", c.seed));
             detail::write_eigenvalues(b, o.at("values").string());
             save_dense_array(b.vectors, o.at("vectors"));
         }});
    json analysis = config["analysis"];
    analysis["quadrature"] = c.quadrature;
    stages.push_back(
        {"analysis",
         analysis,
         {{"fitted", dir / "fitted.obj"},
          {"D0", dir / "D0.mtx"},
          {"D1", dir / "D1.mtx"},
          {"values", dir / "eigenvalues.csv"},
          {"vectors", dir / "eigenvectors.bin"}},
         {{"wks", "wks.csv"}, {"geodesic", "geodesic.ply"}},
         [&](const auto& o) {
             const QuadMesh mesh = detail::load_quad((dir / "fitted.obj").string());
             SpectralBasis b;
             b.values = detail::read_eigenvalues((dir / "eigenvalues.csv").string());
             b.vectors = load_dense_array(dir / "eigenvectors.bin");
             b.residuals = Eigen::VectorXd::Zero(b.values.size());
             const Eigen::MatrixXd phi = limit_evaluation_matrix(LimitSurface(mesh)) * b.vectors;
             detail::write_wks(wks(b, phi, c.wks_energies, c.sigma_factor), o.at("wks").string());
             const OperatorMatrices op{SparseMatrix(load_matrix_market(dir / "D0.mtx")), SparseMatrix(load_matrix_market(dir / "D1.mtx"))};
             const FemDiscretization disc = discretize(LimitSurface(mesh), mesh.vertices, c.quadrature);
             const GeodesicField g = heat_geodesic(mesh, disc, op, c.geodesic_source, c.m_factor, c.levels);
             detail::export_geodesic(mesh, g, c.levelline, o.at("geodesic").string());
         }});

    json manifest = {
        {"config", config},
        {"config_hash", hash_string(config.dump())},
        {"run_dir", dir.string()},
        {"status", "running"},
        {"stages", json::array()}};
    auto save_manifest = [&] { write_json(manifest, dir / "manifest.json"); };
    save_manifest();

    for (const Stage& s : stages) {
        const auto t0 = std::chrono::steady_clock::now();
        json entry = {{"name", s.name}, {"params", s.params}, {"inputs", json::object()}, {"outputs", json::object()}};
        try {
            json key_src = {{"name", s.name}, {"params", s.params}, {"inputs", json::object()}};
            for (const auto& [role, path] : s.inputs) {
                const std::string h = hash_file(path);
                entry["inputs"][role] = {{"path", path.string()}, {"hash", h}};
                key_src["inputs"][role] = h;
            }
            const std::string key = hash_string(key_src.dump());
            entry["key"] = key;

            std::map<std::string, fs::path> outputs;
            for (const auto& [role, file] : s.outputs) outputs[role] = dir / file;
            const auto cached = force ? std::nullopt : find_cached(runs, dir, s.name, key);
            if (cached) {
                for (const auto& [role, file] : s.outputs) fs::copy_file(*cached / file, dir / file, fs::copy_options::overwrite_existing);
                entry["status"] = "cached";
                entry["reused_from"] = cached->filename().string();
            } else {
                s.run(outputs);
                entry["status"] = "executed";
            }
            for (const auto& [role, file] : s.outputs) entry["outputs"][role] = {{"file", file}, {"hash", hash_file(dir / file)}};
        } catch (const std::exception& e) {
            entry["status"] = "failed";
            entry["error"] = e.what();
            entry["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            manifest["stages"].push_back(entry);
            manifest["status"] = "failed";
            save_manifest();
            throw;
        }
        entry["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out << "pipeline: " << s.name << ' ' << entry["status"].get<std::string>() << '\n';
        manifest["stages"].push_back(entry);
        save_manifest();
    }
    manifest["status"] = "complete";
    save_manifest();
    out << "pipeline: run directory " << dir.string() << '\n';
    return {dir, manifest};
}

} // namespace subdivfit::cli
