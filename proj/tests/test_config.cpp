#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mildspde/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mildspde;

namespace {

std::string minimal_heat_config() {
    return R"(# heat equation on (0,1)
[problem]
eigenvalues = dirichlet_laplacian
mode_count = 32
eta = 0.0
gamma = 0.0
alpha = 0.0
beta = 0.0
drift = zero
diffusion = additive_const:1.0
noise = cylindrical
xi = zero
T = 1.0

[run]
experiment = simulate
scheme = reference
time_steps = 32
paths = 16
seed = 9
workers = 1
)";
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("minimal heat-equation config loads") {
    auto cfg = ExperimentConfig::parse(minimal_heat_config());
    auto p = build_problem(cfg);
    CHECK(p.dim() == 32);
    CHECK(p.model.lambda(0) == doctest::Approx(kPi * kPi));
    CHECK(p.model.lambda(31) == doctest::Approx(1024.0 * kPi * kPi));
    CHECK(p.diffusion.amp_at(5) == 1.0);
    CHECK(p.horizon == 1.0);
}

TEST_CASE("regularity constraint violations are rejected with the assumption named") {
    auto text = minimal_heat_config();
    auto pos = text.find("beta = 0.0");
    text.replace(pos, 10, "beta = -0.6");
    auto cfg = ExperimentConfig::parse(text);
    try {
        build_problem(cfg);
        FAIL("expected rejection");
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("gamma - beta < 1/2") != std::string::npos);
        CHECK(msg.find("diffusion assumption") != std::string::npos);
    }
}

TEST_CASE("duplicate keys are rejected with both line numbers") {
    std::string text = "[problem]\nmode_count = 4\nmode_count = 8\n";
    try {
        ExperimentConfig::parse(text);
        FAIL("expected rejection");
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("line 3") != std::string::npos);
        CHECK(msg.find("duplicate key") != std::string::npos);
        CHECK(msg.find("line 2") != std::string::npos);
    }
}

TEST_CASE("unknown keys and malformed lines are rejected") {
    CHECK_THROWS_AS(ExperimentConfig::parse("[problem]\nmod_count = 4\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[problem]\nmode_count\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[weird]\na = 1\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("a = 1\n"), ConfigError);
    try {
        ExperimentConfig::parse("[problem]\nmode_count = x\n").get_int("problem", "mode_count");
        FAIL("expected rejection");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("not an integer") != std::string::npos);
    }
}

TEST_CASE("experiment kind must match the config") {
    auto cfg = ExperimentConfig::parse(minimal_heat_config());
    CHECK_THROWS_AS(run_experiment("check-ito", cfg, 1, 1), ConfigError);
}

TEST_CASE("missing required keys are reported") {
    std::string text = "[problem]\nmode_count = 4\n";
    auto cfg = ExperimentConfig::parse(text);
    try {
        build_problem(cfg);
        FAIL("expected rejection");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("drift") != std::string::npos);
    }
}

TEST_CASE("golden results.csv for a tiny fixed run") {
    std::string text = R"([problem]
eigenvalues = dirichlet_laplacian
mode_count = 4
drift = zero
diffusion = additive_power:-0.3
noise = cylindrical
xi = decay:0.5
T = 0.5

[run]
experiment = simulate
scheme = reference
time_steps = 16
paths = 8
seed = 4242
workers = 1
)";
    auto cfg = ExperimentConfig::parse(text);
    auto rec = execute_run("simulate", cfg, 4242, 1);
    auto dir = std::filesystem::temp_directory_path() / "mildspde_golden";
    emit(rec, dir.string());
    std::string got = read_file((dir / "results.csv").string());
    std::string want = read_file(std::string(TESTS_DATA_DIR) + "/golden_results.csv");
    CHECK(got == want);
}

TEST_CASE("results.csv bytes do not depend on the worker count") {
    auto cfg = ExperimentConfig::parse(minimal_heat_config());
    auto dir1 = std::filesystem::temp_directory_path() / "mildspde_w1";
    auto dir2 = std::filesystem::temp_directory_path() / "mildspde_w3";
    emit(execute_run("simulate", cfg, 7, 1), dir1.string());
    emit(execute_run("simulate", cfg, 7, 3), dir2.string());
    CHECK(read_file((dir1 / "results.csv").string()) ==
          read_file((dir2 / "results.csv").string()));
}

TEST_CASE("rerunning the same config and seed reproduces identical bytes") {
    auto cfg = ExperimentConfig::parse(minimal_heat_config());
    auto dir1 = std::filesystem::temp_directory_path() / "mildspde_r1";
    auto dir2 = std::filesystem::temp_directory_path() / "mildspde_r2";
    emit(execute_run("simulate", cfg, 12, 2), dir1.string());
    emit(execute_run("simulate", cfg, 12, 2), dir2.string());
    CHECK(read_file((dir1 / "results.csv").string()) ==
          read_file((dir2 / "results.csv").string()));
}

TEST_CASE("isometry check runs and passes on the additive heat problem") {
    std::string text = R"([problem]
eigenvalues = dirichlet_laplacian
mode_count = 8
drift = zero
diffusion = additive_power:-0.3
noise = cylindrical
xi = zero
T = 1.0

[run]
experiment = simulate
scheme = accelerated_exponential_euler
time_steps = 16
paths = 4000
seed = 21
workers = 2
)";
    auto cfg = ExperimentConfig::parse(text);
    auto rec = execute_run("simulate", cfg, 21, 2);
    CHECK(rec.result.pass);
    bool has_z = false;
    for (const auto& r : rec.result.rows)
        if (r.label == "isometry_z") {
            has_z = true;
            CHECK(std::abs(r.value) < 3.0);
        }
    CHECK(has_z);
}

TEST_CASE("svg plot emitted for ladder experiments") {
    std::string text = R"([problem]
eigenvalues = dirichlet_laplacian
mode_count = 16
drift = nemytskii:bounded_rational:0.8
diffusion = nemytskii:bounded_bell:0.8
noise = cylindrical
xi = first:0.5
T = 0.05

[run]
experiment = rates-weak-galerkin
time_steps = 64
paths = 400
seed = 5
workers = 2
mode_levels = 2,4,8
phi = exp_neg_sq:1.0
)";
    auto cfg = ExperimentConfig::parse(text);
    auto rec = execute_run("rates-weak-galerkin", cfg, 5, 2);
    auto dir = std::filesystem::temp_directory_path() / "mildspde_svg";
    emit(rec, dir.string());
    auto svg = read_file((dir / "plot.svg").string());
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
}
