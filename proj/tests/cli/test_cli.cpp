#include "subdivfit/cli/app.hpp"
#include "support/shapes.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace subdivfit;
namespace fs = std::filesystem;
namespace ts = testing_shapes;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result invoke(std::vector<std::string> args)
{
    args.insert(args.begin(), "subdivfit");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(int(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p)
{
    std::ifstream in(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite()
    {
        dir = fs::temp_directory_path() / ("subdivfit_cli_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
        save_obj(ts::icosphere(3), dir / "sphere.obj");
        const Result init = invoke({"init", "--target-vertices", "100", p("sphere.obj"), p("ctrl.obj")});
        ASSERT_EQ(init.code, 0) << init.err;
        const Result fit = invoke(
            {"fit", "--init", p("ctrl.obj"), "--cloud", p("sphere.obj"), "--out", p("fitted.obj"), "--alpha", "0",
             "--beta", "1e-4", "--energy-log", p("energy.csv")});
        ASSERT_EQ(fit.code, 0) << fit.err;
    }

    static void TearDownTestSuite() { fs::remove_all(dir); }

    static std::string p(const std::string& name) { return (dir / name).string(); }

    static inline fs::path dir;
};

} // namespace

TEST_F(Cli, UnknownFlagExitsWithUsageCode)
{
    const Result r = invoke({"laplace", p("fitted.obj"), "--no-such-flag"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("--no-such-flag"), std::string::npos) << r.err;
    EXPECT_EQ(invoke({"frobnicate"}).code, 2);
}

TEST_F(Cli, BinaryExitCodes)
{
    const std::string bin = SUBDIVFIT_CLI_PATH;
    EXPECT_EQ(WEXITSTATUS(std::system((bin + " eigen --bogus x 2>/dev/null").c_str())), 2);
    EXPECT_EQ(WEXITSTATUS(std::system((bin + " eigen " + p("missing.obj") + " 2>/dev/null").c_str())), 1);
    EXPECT_EQ(WEXITSTATUS(std::system((bin + " --help >/dev/null").c_str())), 0);
}

TEST_F(Cli, ModuleErrorsAreQualified)
{
    Result r = invoke({"laplace", p("fitted.obj"), "--quadrature", "0"});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.err.rfind("error: fem-laplace:", 0), 0u) << r.err;

    r = invoke({"geodesic", p("fitted.obj"), "--source", "100000", "--out", p("x.ply")});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.err.rfind("error: analysis:", 0), 0u) << r.err;

    r = invoke({"eigen", p("sphere.obj")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("quad control mesh"), std::string::npos) << r.err;
}

TEST_F(Cli, InitWritesQuadMeshAndReport)
{
    const Result r = invoke({"init", "--target-vertices", "60", "--report-cost", p("sphere.obj"), p("c60.obj")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = nlohmann::json::parse(r.out);
    const LoadedMesh m = load_mesh(p("c60.obj"));
    ASSERT_TRUE(m.is_quad());
    EXPECT_EQ(report.at("vertices").get<Index>(), m.quad().num_vertices());
    EXPECT_EQ(report.at("faces").get<Index>(), m.quad().num_faces());
    EXPECT_GE(report.at("pairing_cost").get<double>(), 0.0);
    EXPECT_LE(report.at("collapsed_vertices").get<Index>(), 60u);
}

TEST_F(Cli, FitEnergyLogIsMonotone)
{
    const auto rows = read_csv(p("energy.csv"));
    ASSERT_GE(rows.size(), 3u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"iter", "E_point", "E_tangent", "E_reg", "E_total"}));
    for (std::size_t i = 2; i < rows.size(); ++i) EXPECT_LE(std::stod(rows[i][4]), std::stod(rows[i - 1][4]));
    EXPECT_TRUE(load_mesh(p("fitted.obj")).is_quad());
}

TEST_F(Cli, GeodesicExportsFieldAndLevelLines)
{
    const double varpi = 15.707963;
    const Result r = invoke({"geodesic", p("fitted.obj"), "--source", "0", "--out", p("g.ply"), "--levelline", "15.707963"});
    ASSERT_EQ(r.code, 0) << r.err;
    const LoadedMesh g = load_mesh(p("g.ply"));
    ASSERT_EQ(g.fields.size(), 2u);
    const auto& field = g.fields[0].name == "geodesic" ? g.fields[0] : g.fields[1];
    const auto& lines = g.fields[0].name == "geodesic" ? g.fields[1] : g.fields[0];
    EXPECT_EQ(lines.name, "geodesic_levelline");
    EXPECT_EQ(field.values.size(), Eigen::Index(g.quad().num_vertices()));
    EXPECT_NEAR(field.values.minCoeff(), 0.0, 1e-14);
    EXPECT_NEAR(field.values[0], 0.0, 0.02);
    EXPECT_GT(field.values.maxCoeff(), 2.8);
    for (Eigen::Index i = 0; i < field.values.size(); ++i) EXPECT_EQ(lines.values[i], std::cos(varpi * field.values[i]));

    // OBJ output writes sidecars.
    ASSERT_EQ(invoke({"geodesic", p("fitted.obj"), "--out", p("g.obj")}).code, 0);
    const auto rows = read_csv(p("g.geodesic.csv"));
    EXPECT_EQ(rows[0], (std::vector<std::string>{"vertex_index", "geodesic"}));
}

TEST_F(Cli, EigenOutputsMatchLibrary)
{
    const Result r = invoke({"eigen", p("fitted.obj"), "--k", "9", "--out-values", p("ev.csv"), "--out-vectors", p("ev.bin")});
    ASSERT_EQ(r.code, 0) << r.err;
    const SpectralBasis b = eigensolve(assemble(load_mesh(p("fitted.obj")).quad()), 9);
    const auto rows = read_csv(p("ev.csv"));
    ASSERT_EQ(rows.size(), 10u);
    for (int k = 0; k < 9; ++k) EXPECT_EQ(std::stod(rows[std::size_t(k + 1)][1]), b.values[k]);
    const Eigen::MatrixXd V = load_dense_array(p("ev.bin"));
    EXPECT_EQ(V, b.vectors);
    std::ifstream in(p("ev.bin"));
    std::string header;
    std::getline(in, header);
    const auto h = nlohmann::json::parse(header);
    EXPECT_EQ(h.at("K").get<int>(), 9);
    EXPECT_EQ(h.at("ordering").get<std::string>(), "column-major");
}

TEST_F(Cli, LaplaceAndSubdivideWriteMatrixMarket)
{
    ASSERT_EQ(invoke({"laplace", p("fitted.obj"), "--out-d0", p("D0.mtx"), "--out-d1", p("D1.mtx")}).code, 0);
    const OperatorMatrices op = assemble(load_mesh(p("fitted.obj")).quad());
    EXPECT_EQ((SparseMatrix(load_matrix_market(p("D0.mtx"))) - op.D0).norm(), 0.0);
    EXPECT_EQ((SparseMatrix(load_matrix_market(p("D1.mtx"))) - op.D1).norm(), 0.0);

    ASSERT_EQ(invoke({"subdivide", p("fitted.obj"), p("sub.obj"), "--levels", "2", "--out-matrix", p("A2.mtx")}).code, 0);
    const QuadMesh fitted = load_mesh(p("fitted.obj")).quad();
    const QuadMesh sub = load_mesh(p("sub.obj")).quad();
    EXPECT_EQ(sub.num_faces(), 16 * fitted.num_faces());
    const Positions mapped = SparseMatrix(load_matrix_market(p("A2.mtx"))) * fitted.vertices;
    EXPECT_LT((mapped - sub.vertices).cwiseAbs().maxCoeff(), 1e-14);
}

TEST_F(Cli, WksAndMatchOutputs)
{
    ASSERT_EQ(invoke({"wks", p("fitted.obj"), "--k", "10", "--energies", "7", "--out", p("w.csv")}).code, 0);
    const auto w = read_csv(p("w.csv"));
    EXPECT_EQ(w.size(), 101u);
    EXPECT_EQ(w[0].size(), 8u);
    EXPECT_EQ(w[0][0], "vertex_index");

    const Result r = invoke(
        {"match", "--shape-a", p("fitted.obj"), "--shape-b", p("fitted.obj"), "--k", "10", "--out-map", p("C.mtx"),
         "--out-corr", p("corr.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const Eigen::MatrixXd C(load_matrix_market(p("C.mtx")));
    EXPECT_LT((C - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff(), 1e-8);
    const auto corr = read_csv(p("corr.csv"));
    EXPECT_EQ(corr[0], (std::vector<std::string>{"a_index", "b_index"}));
    std::size_t same = 0;
    for (std::size_t i = 1; i < corr.size(); ++i) same += corr[i][0] == corr[i][1];
    EXPECT_GE(same, std::size_t(0.95 * double(corr.size() - 1)));
}

TEST_F(Cli, ExportCarriesFields)
{
    ASSERT_EQ(invoke({"geodesic", p("fitted.obj"), "--levels", "1", "--out", p("g1.ply")}).code, 0);
    ASSERT_EQ(invoke({"export", p("g1.ply"), p("g1.obj")}).code, 0);
    const LoadedMesh a = load_mesh(p("g1.ply"));
    const auto rows = read_csv(p("g1.geodesic.csv"));
    ASSERT_EQ(rows.size(), std::size_t(a.quad().num_vertices()) + 1);
    for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(std::stod(rows[i][1]), a.fields[0].values[Eigen::Index(i - 1)]);
}

TEST_F(Cli, ConfigDumpReproducesRun)
{
    ASSERT_EQ(invoke({"wks", p("fitted.obj"), "--k", "8", "--out", p("w1.csv"), "--config", p("w.json")}).code, 0);
    auto cfg = nlohmann::json::parse(slurp(p("w.json")));
    EXPECT_EQ(cfg.at("command"), "wks");
    EXPECT_EQ(cfg.at("params").at("energies"), 100);
    EXPECT_EQ(cfg.at("params").at("sigma_factor"), 2.0);
    cfg["params"]["out"] = p("w2.csv");
    std::ofstream(p("w2.json")) << cfg.dump(2);
    ASSERT_EQ(invoke({"rerun", p("w2.json")}).code, 0);
    EXPECT_EQ(slurp(p("w1.csv")), slurp(p("w2.csv")));

    cfg["params"]["bogus"] = 1;
    std::ofstream(p("w3.json")) << cfg.dump(2);
    const Result bad = invoke({"rerun", p("w3.json")});
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.err.find("bogus"), std::string::npos);
}

TEST_F(Cli, HelpShowsModuleDefaults)
{
    const Result fit = invoke({"fit", "--help"});
    EXPECT_EQ(fit.code, 0);
    EXPECT_NE(fit.out.find("[1.3]"), std::string::npos) << fit.out;
    EXPECT_NE(fit.out.find("[50]"), std::string::npos);
    EXPECT_NE(fit.out.find("[1e-08]"), std::string::npos);
    EXPECT_NE(fit.out.find("[0.0001]"), std::string::npos);
    EXPECT_NE(fit.out.find("[4]"), std::string::npos);
    const Result geo = invoke({"geodesic", "--help"});
    EXPECT_NE(geo.out.find("[8]"), std::string::npos) << geo.out;
    const Result wks = invoke({"wks", "--help"});
    EXPECT_NE(wks.out.find("[100]"), std::string::npos);
    EXPECT_NE(wks.out.find("[2]"), std::string::npos);
    const Result lap = invoke({"laplace", "--help"});
    EXPECT_NE(lap.out.find("[3]"), std::string::npos);
    const Result mat = invoke({"match", "--help"});
    EXPECT_NE(mat.out.find("[20]"), std::string::npos);
}

TEST_F(Cli, ThreadCountDoesNotChangeOutputs)
{
    ::setenv("SUBDIVFIT_THREADS", "1", 1);
    ASSERT_EQ(invoke({"geodesic", p("fitted.obj"), "--out", p("t1.ply")}).code, 0);
    ASSERT_EQ(invoke({"laplace", p("fitted.obj"), "--out-d1", p("t1.mtx")}).code, 0);
    ::setenv("SUBDIVFIT_THREADS", "4", 1);
    ASSERT_EQ(invoke({"geodesic", p("fitted.obj"), "--out", p("t4.ply")}).code, 0);
    ASSERT_EQ(invoke({"laplace", p("fitted.obj"), "--out-d1", p("t4.mtx")}).code, 0);
    ::unsetenv("SUBDIVFIT_THREADS");
    EXPECT_EQ(slurp(p("t1.ply")), slurp(p("t4.ply")));
    EXPECT_EQ(slurp(p("t1.mtx")), slurp(p("t4.mtx")));
}

class Pipeline : public Cli {
protected:
    static nlohmann::json config()
    {
        return {
            {"inputs", {{"mesh", "sphere.obj"}}},
            {"init", {{"target_vertices", 100}}},
            {"fit", {{"alpha", 0.0}, {"beta", 1e-4}}},
            {"eigen", {{"k", 10}}},
            {"analysis", {{"levelline", 15.707963}}}};
    }

    static nlohmann::json manifest(const fs::path& run) { return nlohmann::json::parse(slurp(run / "manifest.json")); }

    static fs::path run_dir(const Result& r)
    {
        const auto at = r.out.find("run directory ");
        EXPECT_NE(at, std::string::npos) << r.out;
        std::string d = r.out.substr(at + 14);
        return d.substr(0, d.find('\n'));
    }

    static std::map<std::string, std::string> output_hashes(const nlohmann::json& m)
    {
        std::map<std::string, std::string> h;
        for (const auto& s : m.at("stages")) {
            for (const auto& [role, o] : s.at("outputs").items()) h[s.at("name").get<std::string>() + "/" + role] = o.at("hash");
        }
        return h;
    }
};

TEST_F(Pipeline, StagesAreDeterministicAndCached)
{
    std::ofstream(p("pipe.json")) << config().dump(2);
    const Result a = invoke({"pipeline", p("pipe.json"), "--force"});
    ASSERT_EQ(a.code, 0) << a.err;
    const Result b = invoke({"pipeline", p("pipe.json"), "--force"});
    ASSERT_EQ(b.code, 0) << b.err;
    const auto ma = manifest(run_dir(a)), mb = manifest(run_dir(b));
    ASSERT_EQ(ma.at("stages").size(), 5u);
    EXPECT_EQ(ma.at("status"), "complete");
    std::vector<std::string> names;
    for (const auto& s : ma.at("stages")) {
        names.push_back(s.at("name"));
        EXPECT_EQ(s.at("status"), "executed");
        EXPECT_GE(s.at("seconds").get<double>(), 0.0);
        EXPECT_FALSE(s.at("inputs").empty());
    }
    EXPECT_EQ(names, (std::vector<std::string>{"init", "fit", "laplace", "eigen", "analysis"}));
    EXPECT_EQ(output_hashes(ma), output_hashes(mb));
    EXPECT_EQ(output_hashes(ma).size(), 9u);

    // Unchanged config: every stage is reused.
    const Result c = invoke({"pipeline", p("pipe.json")});
    ASSERT_EQ(c.code, 0) << c.err;
    const auto mc = manifest(run_dir(c));
    for (const auto& s : mc.at("stages")) EXPECT_EQ(s.at("status"), "cached") << s.at("name");
    EXPECT_EQ(output_hashes(mc), output_hashes(ma));

    // A fitting parameter change re-executes fit and everything downstream only.
    auto changed = config();
    changed["fit"]["beta"] = 2e-4;
    std::ofstream(p("pipe2.json")) << changed.dump(2);
    const Result d = invoke({"pipeline", p("pipe2.json")});
    ASSERT_EQ(d.code, 0) << d.err;
    const auto md = manifest(run_dir(d));
    const std::vector<std::string> expect = {"cached", "executed", "executed", "executed", "executed"};
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(md.at("stages")[i].at("status"), expect[i]) << i;

    // Downstream-only change: analysis alone re-executes.
    auto late = config();
    late["analysis"]["geodesic_source"] = 3;
    std::ofstream(p("pipe3.json")) << late.dump(2);
    const Result e = invoke({"pipeline", p("pipe3.json")});
    ASSERT_EQ(e.code, 0) << e.err;
    const auto me = manifest(run_dir(e));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(me.at("stages")[i].at("status"), "cached") << i;
    EXPECT_EQ(me.at("stages")[4].at("status"), "executed");
}

TEST_F(Pipeline, SchemaErrorsNameTheField)
{
    auto cfg = config();
    cfg["inputs"].erase("mesh");
    std::ofstream(p("bad1.json")) << cfg.dump();
    Result r = invoke({"pipeline", p("bad1.json")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("'inputs.mesh'"), std::string::npos) << r.err;

    cfg = config();
    cfg["inputs"]["mesh"] = "nowhere.obj";
    std::ofstream(p("bad2.json")) << cfg.dump();
    r = invoke({"pipeline", p("bad2.json")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("'inputs.mesh'"), std::string::npos) << r.err;

    cfg = config();
    cfg["fit"]["alpha"] = "zero";
    std::ofstream(p("bad3.json")) << cfg.dump();
    r = invoke({"pipeline", p("bad3.json")});
    EXPECT_NE(r.err.find("'fit.alpha'"), std::string::npos) << r.err;

    cfg = config();
    cfg["fit"]["gamma"] = 1;
    std::ofstream(p("bad4.json")) << cfg.dump();
    r = invoke({"pipeline", p("bad4.json")});
    EXPECT_NE(r.err.find("'fit.gamma'"), std::string::npos) << r.err;
}

TEST_F(Pipeline, FailedStageIsRecorded)
{
    auto cfg = config();
    cfg["eigen"]["k"] = 5000;
    cfg["runs_dir"] = "runs_fail";
    std::ofstream(p("fail.json")) << cfg.dump();
    const Result r = invoke({"pipeline", p("fail.json"), "--force"});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.err.rfind("error: fem-laplace:", 0), 0u) << r.err;
    std::vector<fs::path> runs;
    for (const auto& e : fs::directory_iterator(dir / "runs_fail")) runs.push_back(e.path());
    ASSERT_EQ(runs.size(), 1u);
    const auto m = manifest(runs[0]);
    EXPECT_EQ(m.at("status"), "failed");
    ASSERT_EQ(m.at("stages").size(), 4u);
    EXPECT_EQ(m.at("stages")[3].at("status"), "failed");
    EXPECT_EQ(m.at("stages")[2].at("status"), "executed");
}

TEST_F(Pipeline, ConfigDumpRerunsIdentically)
{
    std::ofstream(p("pipe.json")) << config().dump(2);
    const Result a = invoke({"pipeline", p("pipe.json"), "--force", "--config", p("resolved.json")});
    ASSERT_EQ(a.code, 0) << a.err;
    const auto resolved = nlohmann::json::parse(slurp(p("resolved.json")));
    EXPECT_EQ(resolved.at("command"), "pipeline");
    EXPECT_EQ(resolved.at("params").at("fit").at("q"), 1.3);
    const Result b = invoke({"rerun", p("resolved.json")});
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_EQ(output_hashes(manifest(run_dir(a))), output_hashes(manifest(run_dir(b))));
}
