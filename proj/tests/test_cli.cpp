#include "doctest.h"

#include "maniforge/run.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace maniforge;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "maniforge_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string write_config(const fs::path& dir, const std::string& body) {
    fs::path p = dir / "run.cfg";
    std::ofstream out(p);
    out << body;
    return p.string();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

const std::string kSaddleManifold =
    "[model]\nname = Saddle2\ntau = 0.6931471805599453\n"
    "[manifold]\nrho = 1\ndelta = 1\nepsilon = 2\ngrid = 33\ninterpolation = cubic\n"
    "max_iter = 60\n";

}  // namespace

TEST_CASE("manifold subcommand: happy path emits section, report and manifest") {
    fs::path dir = scratch("manifold");
    std::string cfg = write_config(dir, kSaddleManifold);
    int code = cli_dispatch({"manifold", "--config", cfg, "--out", (dir / "out").string()});
    CHECK(code == 0);
    CHECK(fs::exists(dir / "out" / "section.csv"));
    CHECK(fs::exists(dir / "out" / "section.json"));
    CHECK(fs::exists(dir / "out" / "transform_report.json"));
    CHECK(fs::exists(dir / "out" / "fixed_point.json"));
    CHECK(fs::exists(dir / "out" / "manifest.json"));
    std::string csv = slurp(dir / "out" / "section.csv");
    CHECK(csv.rfind("x_1,q_1,dq_1_dx_1", 0) == 0);
}

TEST_CASE("delta > 1 is a config error (exit 2)") {
    fs::path dir = scratch("delta");
    std::string cfg = write_config(dir, "[model]\nname = Saddle2\ntau = 1\n[manifold]\ndelta = 1.2\n");
    int code = cli_dispatch({"manifold", "--config", cfg, "--out", (dir / "out").string()});
    CHECK(code == 2);
}

TEST_CASE("missing config and unknown subcommand exit 2") {
    CHECK(cli_dispatch({"manifold"}) == 2);
    CHECK(cli_dispatch({"frobnicate", "--config", "x"}) == 2);
    CHECK(cli_dispatch({"manifold", "--config", "/nonexistent/path.cfg"}) == 2);
}

TEST_CASE("non-convergent run exits 3 and still emits the report") {
    fs::path dir = scratch("nonconv");
    // tau = 0.05 contracts too slowly for this iteration budget.
    std::string cfg = write_config(dir,
                                   "[model]\nname = Saddle2\ntau = 0.05\n"
                                   "[manifold]\nrho = 1\ndelta = 1\nepsilon = 2\ngrid = 17\n"
                                   "interpolation = cubic\nmax_iter = 8\n");
    int code = cli_dispatch({"manifold", "--config", cfg, "--out", (dir / "out").string()});
    CHECK(code == 3);
    CHECK(fs::exists(dir / "out" / "transform_report.json"));
    std::string rep = slurp(dir / "out" / "transform_report.json");
    CHECK(rep.find("\"converged\": false") != std::string::npos);
}

TEST_CASE("identical config produces bitwise-identical outputs") {
    fs::path dir = scratch("determinism");
    std::string cfg = write_config(dir, kSaddleManifold);
    REQUIRE(cli_dispatch({"manifold", "--config", cfg, "--out", (dir / "a").string()}) == 0);
    REQUIRE(cli_dispatch({"manifold", "--config", cfg, "--out", (dir / "b").string()}) == 0);
    for (const char* name : {"section.csv", "section.json", "transform_report.json",
                             "fixed_point.json"}) {
        CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
    }
}

TEST_CASE("check-conditions emits the fixed-name report fields") {
    fs::path dir = scratch("conditions");
    std::string cfg = write_config(dir, kSaddleManifold + "[experiment]\nsamples = 5\n");
    int code = cli_dispatch({"check-conditions", "--config", cfg, "--out", (dir / "out").string()});
    CHECK(code == 0);
    std::string j = slurp(dir / "out" / "conditions.json");
    for (const char* field : {"\"a\"", "\"tau\"", "\"nu\"", "\"theta\"", "\"stability_lhs\"",
                              "\"smoothing_lhs\"", "\"theta1\"", "\"pass\""})
        CHECK(j.find(field) != std::string::npos);
}

TEST_CASE("fixed-point subcommand classifies hyperbolicity") {
    fs::path dir = scratch("fixedpoint");
    std::string cfg = write_config(dir,
                                   "[model]\nname = AppendixPolar\ntau = 0.25\nh = 0\n"
                                   "[scheme]\nkind = RK4\ndt = 0.005\n"
                                   "[fixed_point]\nguess = 0.97, 0.05\ntol = 1e-13\n");
    int code = cli_dispatch({"fixed-point", "--config", cfg, "--out", (dir / "out").string()});
    CHECK(code == 0);
    std::string j = slurp(dir / "out" / "fixed_point.json");
    CHECK(j.find("\"hyperbolic\": true") != std::string::npos);
    CHECK(j.find("\"polar\"") != std::string::npos);
}

TEST_CASE("MANIFORGE_OUT is the lowest-priority output directory") {
    fs::path dir = scratch("envout");
    std::string cfg = write_config(dir, kSaddleManifold);
    fs::path env_dir = dir / "from_env";
    setenv("MANIFORGE_OUT", env_dir.string().c_str(), 1);
    int code = cli_dispatch({"fixed-point", "--config", cfg});
    unsetenv("MANIFORGE_OUT");
    CHECK(code == 0);
    CHECK(fs::exists(env_dir / "fixed_point.json"));
}

TEST_CASE("appendix-demo emits the table and one cloud per h plus the reference") {
    fs::path dir = scratch("appendix");
    std::string cfg = write_config(dir,
                                   "[model]\nname = AppendixPolar\ntau = 0.25\nh = 0\n"
                                   "[scheme]\nkind = RK4\ndt = 0.0125\n"
                                   "[manifold]\nrho = 0.4\ndelta = 1\nepsilon = 1\ngrid = 9\n"
                                   "interpolation = cubic\ntol_c0 = 1e-8\ntol_c1 = 1e-7\n"
                                   "max_iter = 120\n"
                                   "[experiment]\nh_values = 0.2, 0.1\niterations = 12\n"
                                   "bound_box = 3\n"
                                   "[fixed_point]\nguess = 0.97, 0.05\ntol = 1e-13\n");
    int code = cli_dispatch({"appendix-demo", "--config", cfg, "--out", (dir / "out").string()});
    CHECK(code == 0);
    CHECK(fs::exists(dir / "out" / "convergence.csv"));
    CHECK(fs::exists(dir / "out" / "cloud_unperturbed.csv"));
    CHECK(fs::exists(dir / "out" / "cloud_h0.csv"));
    CHECK(fs::exists(dir / "out" / "cloud_h1.csv"));
    std::string j = slurp(dir / "out" / "appendix_report.json");
    CHECK(j.find("\"hyperbolic_point\"") != std::string::npos);
    CHECK(j.find("\"nonhyperbolic_point\"") != std::string::npos);
    std::string cloud = slurp(dir / "out" / "cloud_h0.csv");
    CHECK(cloud.rfind("provenance,c_1,c_2", 0) == 0);
    CHECK(cloud.find("forwardIterate") != std::string::npos);
}

TEST_CASE("converge subcommand: tiny AnalyticE sweep emits table and slope") {
    fs::path dir = scratch("converge");
    std::string cfg = write_config(dir,
                                   kSaddleManifold +
                                       "[perturbation]\nkind = AnalyticE\nanalytic_form = trig\n"
                                       "[experiment]\nh_values = 0.01, 0.001\niterations = 3\n"
                                       "bound_box = 8\n");
    int code = cli_dispatch({"converge", "--config", cfg, "--out", (dir / "out").string()});
    CHECK(code == 0);
    std::string csv = slurp(dir / "out" / "convergence.csv");
    CHECK(csv.rfind("h,c0,c1,dist_fwd,dist_bwd", 0) == 0);
    std::string j = slurp(dir / "out" / "convergence.json");
    CHECK(j.find("fit_slope") != std::string::npos);
}
