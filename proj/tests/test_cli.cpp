#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>
#include <sys/wait.h>

// End-to-end checks of the command line binary: exit codes, artifacts and
// byte-level reproducibility, all through real subprocesses.

namespace {

namespace fs = std::filesystem;

const std::string kCli = FBLAB_CLI_PATH;

fs::path workdir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "fblab_test_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string write_config(const std::string& name, const std::string& body) {
    const auto path = workdir() / name;
    std::ofstream out(path);
    out << body;
    return path.string();
}

int run(const std::string& args) {
    const std::string cmd = kCli + " " + args + " > " + (workdir() / "stdout.log").string() +
                            " 2> " + (workdir() / "stderr.log").string();
    const int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kHeatConfig = R"({
  "schema": 1,
  "problem": "heat",
  "grid": {"steps": 120, "x_min": [-2], "x_max": [2], "x_nodes": [41]},
  "seed": 7
})";

} // namespace

TEST_CASE("solving writes the field, the residual and a report") {
    const auto cfg = write_config("heat.json", kHeatConfig);
    const auto out = (workdir() / "hjb_out").string();
    CHECK(run("solve-hjb --config " + cfg + " --out " + out) == 0);

    CHECK(fs::exists(out + "/value_hjb.csv"));
    CHECK(fs::exists(out + "/value_hjb.json"));
    CHECK(fs::exists(out + "/residual.csv"));
    CHECK(fs::exists(out + "/report.json"));

    const auto report = nlohmann::json::parse(slurp(out + "/report.json"));
    // Box center is x = 0, where the heat value is 0^2 + 1.
    CHECK(std::abs(report.at("w_at_x0").get<double>() - 1.0) <= 1e-10);
    CHECK(report.at("residual").at("max_abs").get<double>() <= 1e-10);
}

TEST_CASE("artifact bytes do not depend on the run or the thread count") {
    const auto cfg = write_config("heat_det.json", kHeatConfig);
    const auto a = (workdir() / "det_a").string();
    const auto b = (workdir() / "det_b").string();
    REQUIRE(run("solve-hjb --config " + cfg + " --out " + a) == 0);
    REQUIRE(run("solve-hjb --config " + cfg + " --out " + b + " --threads 8") == 0);

    const auto va = slurp(a + "/value_hjb.csv");
    CHECK(!va.empty());
    CHECK(va == slurp(b + "/value_hjb.csv"));
    CHECK(slurp(a + "/residual.csv") == slurp(b + "/residual.csv"));
}

TEST_CASE("the dynamic programming solver writes its field and honors the seed override") {
    const auto cfg = write_config("heat_dpp.json", R"({
      "schema": 1,
      "problem": "heat",
      "grid": {"steps": 4, "x_min": [-2], "x_max": [2], "x_nodes": [9]},
      "seed": 7,
      "value": {"M": 2000}
    })");
    const auto a = (workdir() / "dpp_a").string();
    const auto b = (workdir() / "dpp_b").string();
    const auto c = (workdir() / "dpp_c").string();
    REQUIRE(run("value-dpp --config " + cfg + " --out " + a) == 0);
    REQUIRE(run("value-dpp --config " + cfg + " --out " + b) == 0);
    REQUIRE(run("value-dpp --config " + cfg + " --out " + c + " --seed-override 8") == 0);

    CHECK(fs::exists(a + "/value_dpp.csv"));
    CHECK(slurp(a + "/value_dpp.csv") == slurp(b + "/value_dpp.csv"));
    CHECK(slurp(a + "/value_dpp.csv") != slurp(c + "/value_dpp.csv"));
}

TEST_CASE("simulation runs export trajectories and a coupled report") {
    const auto cfg = write_config("heat_sim.json", R"({
      "schema": 1,
      "problem": "heat",
      "grid": {"steps": 10, "x_min": [-3], "x_max": [3], "x_nodes": [2]},
      "seed": 7,
      "fbsde": {"M": 10000, "steps": 10, "x0": [0.5]}
    })");
    const auto out = (workdir() / "sim_out").string();
    CHECK(run("solve-fbsde --config " + cfg + " --out " + out) == 0);
    CHECK(fs::exists(out + "/paths.csv"));

    const auto report = nlohmann::json::parse(slurp(out + "/report.json"));
    CHECK(std::abs(report.at("y0").get<double>() - 1.25) <= 0.08);
}

TEST_CASE("verification runs end to end from a config") {
    const auto cfg = write_config("heat_verify.json", R"({
      "schema": 1,
      "problem": "heat",
      "grid": {"steps": 4, "x_min": [-2], "x_max": [2], "x_nodes": [9]},
      "seed": 7,
      "value": {"M": 2000},
      "verify": {"mode": "frozen-sigma", "lip_bound": 8.0}
    })");
    const auto out = (workdir() / "verify_out").string();
    CHECK(run("verify --config " + cfg + " --out " + out) == 0);
    const auto report = nlohmann::json::parse(slurp(out + "/report.json"));
    CHECK(report.at("check").get<std::string>() == "frozen_sigma");
    CHECK(report.at("verdict").get<std::string>() == "equal");
}

TEST_CASE("a failing admission gate exits with its own status") {
    const auto cfg = write_config("burgers.json", R"({
      "schema": 1,
      "problem": "burgers",
      "grid": {"steps": 10, "x_min": [-2], "x_max": [2], "x_nodes": [9]}
    })");
    CHECK(run("check --config " + cfg + " --out " + (workdir() / "gate_a").string()) == 2);

    const auto forced = write_config("burgers_forced.json", R"({
      "schema": 1,
      "problem": "burgers",
      "gate": {"allow_override": true},
      "grid": {"steps": 10, "x_min": [-2], "x_max": [2], "x_nodes": [9]}
    })");
    CHECK(run("check --config " + forced + " --out " + (workdir() / "gate_b").string()) == 0);
}

TEST_CASE("solver failures and config mistakes use distinct exit codes") {
    // One time slab of length 1 with L1 = 1 breaks the dt * L1 < 1 bound.
    const auto cfl = write_config("cfl.json", R"({
      "schema": 1,
      "problem": "heat",
      "grid": {"steps": 1, "x_min": [-2], "x_max": [2], "x_nodes": [9]},
      "value": {"M": 500}
    })");
    CHECK(run("value-dpp --config " + cfl + " --out " + (workdir() / "cfl_out").string()) == 3);

    const auto broken = write_config("broken.json", "{ not json");
    CHECK(run("check --config " + broken + " --out " + (workdir() / "x1").string()) == 4);

    const auto unknown = write_config("unknown.json", R"({
      "schema": 1,
      "problem": "heat",
      "grid": {"steps": 2, "x_min": [-2], "x_max": [2], "x_nodes": [9]},
      "no_such_key": true
    })");
    CHECK(run("check --config " + unknown + " --out " + (workdir() / "x2").string()) == 4);

    const auto badexpr = write_config("badexpr.json", R"({
      "schema": 1,
      "problem": {
        "name": "broken",
        "n": 1, "d": 1, "k": 1, "T": 1.0,
        "b": ["x1 +"],
        "sigma": ["1"],
        "g": "0",
        "phi": "x1^2",
        "L1": 1.0, "L2": 0.0, "L3": 0.0
      },
      "grid": {"steps": 2, "x_min": [-2], "x_max": [2], "x_nodes": [9]}
    })");
    CHECK(run("check --config " + badexpr + " --out " + (workdir() / "x3").string()) == 4);

    CHECK(run("check --out " + (workdir() / "x4").string()) == 4); // missing --config
    CHECK(run("no-such-command") == 4);
}
