#pragma once

#include "subdivfit/analysis/geodesic.hpp"
#include "subdivfit/fem/eigen.hpp"
#include "subdivfit/fit/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

namespace subdivfit::cli {

using json = nlohmann::json; // sorted keys: dumps are canonical

/// Parameters of every subcommand. Defaults mirror the module defaults.
struct InitParams {
    std::string input, output;
    Index target_vertices = 0;
    bool report_cost = false;

    template <typename F>
    void visit(F&& f)
    {
        f("input", input);
        f("output", output);
        f("target_vertices", target_vertices);
        f("report_cost", report_cost);
    }
};

struct FitParams {
    std::string init, cloud, out, energy_log;
    double q = FitConfig{}.q;
    double alpha = 0.0;
    double beta = 0.0;
    int samples_per_face = FitConfig{}.samples_per_face;
    int max_iter = FitConfig{}.outer_max_iter;
    double cg_tol = FitConfig{}.cg_tol;
    double energy_decrease_tol = FitConfig{}.energy_decrease_tol;

    template <typename F>
    void visit(F&& f)
    {
        f("init", init);
        f("cloud", cloud);
        f("out", out);
        f("energy_log", energy_log);
        f("q", q);
        f("alpha", alpha);
        f("beta", beta);
        f("samples_per_face", samples_per_face);
        f("max_iter", max_iter);
        f("cg_tol", cg_tol);
        f("energy_decrease_tol", energy_decrease_tol);
    }
};

struct SubdivideParams {
    std::string input, output, out_matrix;
    int levels = 1;
    bool limit = false;

    template <typename F>
    void visit(F&& f)
    {
        f("input", input);
        f("output", output);
        f("out_matrix", out_matrix);
        f("levels", levels);
        f("limit", limit);
    }
};

struct LaplaceParams {
    std::string input, out_d0, out_d1;
    int quadrature = 3;

    template <typename F>
    void visit(F&& f)
    {
        f("input", input);
        f("out_d0", out_d0);
        f("out_d1", out_d1);
        f("quadrature", quadrature);
    }
};

struct EigenParams {
    std::string input, out_values, out_vectors;
    int k = 16;
    double tol = EigenOptions{}.tol;
    int max_iter = EigenOptions{}.max_iter;
    int quadrature = 3;
    std::string method = "auto";

    template <typename F>
    void visit(F&& f)
    {
        f("input", input);
        f("out_values", out_values);
        f("out_vectors", out_vectors);
        f("k", k);
        f("tol", tol);
        f("max_iter", max_iter);
        f("quadrature", quadrature);
        f("method", method);
    }
};

struct WksParams {
    std::string input, out;
    int k = 16;
    int energies = 100;
    double sigma_factor = 2.0;
    int quadrature = 3;

    template <typename F>
    void visit(F&& f)
    {
        f("input", input);
        f("out", out);
        f("k", k);
        f("energies", energies);
        f("sigma_factor", sigma_factor);
        f("quadrature", quadrature);
    }
};

struct GeodesicParams {
    std::string input, out;
    Index source = 0;
    double m_factor = kDefaultHeatTimeFactor;
    double levelline = 0.0; // 0: no cos(varpi g) field
    int levels = 2;
    int quadrature = 3;

    template <typename F>
    void visit(F&& f)
    {
        f("input", input);
        f("out", out);
        f("source", source);
        f("m_factor", m_factor);
        f("levelline", levelline);
        f("levels", levels);
        f("quadrature", quadrature);
    }
};

struct MatchParams {
    std::string shape_a, shape_b, out_map, out_corr;
    int k = 20;
    double mu = 1e-3;
    int energies = 20;
    int quadrature = 3;

    template <typename F>
    void visit(F&& f)
    {
        f("shape_a", shape_a);
        f("shape_b", shape_b);
        f("out_map", out_map);
        f("out_corr", out_corr);
        f("k", k);
        f("mu", mu);
        f("energies", energies);
        f("quadrature", quadrature);
    }
};

struct ExportParams {
    std::string input, output;
    int levels = 0;
    bool limit = false;

    template <typename F>
    void visit(F&& f)
    {
        f("input", input);
        f("output", output);
        f("levels", levels);
        f("limit", limit);
    }
};

/// JSON conversion for any parameter struct exposing visit(f), which calls
/// f(name, member) for each field. Missing keys keep their defaults.
template <typename T>
concept Visitable = requires(T& t) { t.visit([](const char*, auto&) {}); };

template <Visitable T>
void to_json(json& j, const T& p)
{
    j = json::object();
    const_cast<T&>(p).visit([&](const char* name, auto& v) { j[name] = v; });
}

template <Visitable T>
void from_json(const json& j, T& p)
{
    p.visit([&](const char* name, auto& v) {
        if (j.contains(name)) j.at(name).get_to(v);
    });
}

/// Resolved invocation of one subcommand. `seed` feeds the randomized start
/// of the eigensolver; every other stage is deterministic by construction.
struct RunConfig {
    std::string command;
    unsigned seed = EigenOptions{}.seed;
    json params = json::object();
};

inline json to_json(const RunConfig& c)
{
    return json{{"command", c.command}, {"seed", c.seed}, {"params", c.params}};
}

inline RunConfig run_config_from_json(const json& j)
{
    require(j.is_object(), "cli", "run configuration must be a JSON object");
    require(j.contains("command") && j["command"].is_string(), "cli", "run configuration is missing 'command'");
    RunConfig c;
    c.command = j["command"].get<std::string>();
    c.seed = j.value("seed", c.seed);
    c.params = j.value("params", json::object());
    return c;
}

inline void write_json(const json& j, const std::filesystem::path& path)
{
    std::ofstream out(path);
    require(bool(out), "cli", "cannot write " + path.string());
    out << j.dump(2) << '\n';
    require(bool(out), "cli", "failed writing " + path.string());
}

inline json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    require(bool(in), "cli", "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error("cli", path.string() + " is not valid JSON: " + e.what());
    }
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ull)
{
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t h)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) s[std::size_t(i)] = digits[h & 0xf];
    return s;
}

inline std::string hash_string(const std::string& s)
{
    return hex64(fnv1a(s.data(), s.size()));
}

inline std::string hash_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    require(bool(in), "cli", "cannot open " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        h = fnv1a(buf, std::size_t(in.gcount()), h);
    }
    return hex64(h);
}

} // namespace subdivfit::cli
