#include <doctest.h>

#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "rhbsde/config.hpp"
#include "rhbsde/errors.hpp"
#include "rhbsde/io.hpp"

using namespace rhbsde;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("rhbsde_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

Json minimal_config() {
    Json j;
    j["version"] = 1;
    j["mode"] = "bsde";
    j["problem"]["generator"] = {{"kind", "affine"}, {"a", -0.5}, {"weight_rho", 1.0},
                                 {"moment_q", 4.0}};
    j["problem"]["terminal"] = {{"kind", "constant"}, {"value", 1.0}};
    j["problem"]["stopping"] = {{"kind", "deterministic"}, {"time", 1.0}};
    j["numerics"]["n_steps"] = 8;
    j["numerics"]["step_h"] = 0.125;
    j["numerics"]["n_paths"] = 100;
    j["numerics"]["seed"] = 42;
    return j;
}

std::string first_line(const std::string& path) {
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    return line;
}

}  // namespace

TEST_CASE("bundle snapshots round-trip exactly") {
    const PathBundle b = simulate_paths(
        VolatilitySpec::scalar_constant(0.7, 0.3),
        StoppingRule::exit_of_box(Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)),
        TimeGrid(1.0 / 16, 32), 50, 99);
    TempDir tmp;
    const std::string path = tmp.file("bundle.bin");
    save_bundle(b, path);
    const PathBundle r = load_bundle(path);

    CHECK(r.n_paths == b.n_paths);
    CHECK(r.d == b.d);
    CHECK(r.m == b.m);
    CHECK(r.seed == b.seed);
    CHECK(r.grid.step_h == b.grid.step_h);
    CHECK(r.grid.n_steps == b.grid.n_steps);
    CHECK((r.x0.array() == b.x0.array()).all());
    CHECK(r.X.data == b.X.data);  // bitwise: doubles serialized raw
    CHECK(r.W.data == b.W.data);
    CHECK(r.stop_index == b.stop_index);
    CHECK(r.capped == b.capped);
    CHECK(r.sigma.constant == b.sigma.constant);
    CHECK((Mat(r.sigma.at(0, 0)).array() == Mat(b.sigma.at(0, 0)).array()).all());
}

TEST_CASE("bundle loader rejects foreign and truncated files") {
    TempDir tmp;
    const std::string bad = tmp.file("bad.bin");
    write_text_file(bad, "definitely not a bundle");
    CHECK_THROWS_AS(load_bundle(bad), ConfigError);

    const PathBundle b = simulate_paths(VolatilitySpec::scalar_constant(1.0),
                                        StoppingRule::deterministic(1.0), TimeGrid(0.25, 4),
                                        10, 1);
    const std::string full = tmp.file("full.bin");
    save_bundle(b, full);
    // Chop the tail off: the loader must notice the truncation.
    std::string bytes;
    {
        std::ifstream is(full, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
    }
    std::ofstream os(tmp.file("cut.bin"), std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    os.close();
    CHECK_THROWS_AS(load_bundle(tmp.file("cut.bin")), ConfigError);
}

TEST_CASE("csv exports carry their documented headers") {
    const PathBundle b = simulate_paths(VolatilitySpec::scalar_constant(1.0),
                                        StoppingRule::deterministic(1.0), TimeGrid(0.25, 4),
                                        20, 2);
    TempDir tmp;
    write_bundle_csv(b, tmp.file("paths.csv"), 5);
    CHECK(first_line(tmp.file("paths.csv")) == "path,step,t,x0,w0,stopped");

    const QvDensity qv = quadratic_variation_density(b);
    const GeneratorSpec gen = GeneratorSpec::affine_scalar(0.0, 0.0, 0.0, "zero");
    const TerminalSpec term =
        TerminalSpec::state_functional([](const Vec& x) { return x[0]; }, "id");
    const RegressionBasis basis =
        RegressionBasis::polynomial(1, Vec::Constant(1, -3.0), Vec::Constant(1, 3.0));
    const BackwardSolution sol = solve_bsde(b, qv, gen, term, basis);
    StateBins bins;
    bins.n_bins = 5;
    bins.lo = -3.0;
    bins.hi = 3.0;
    bins.auto_range = false;
    write_solution_csv(b, sol, bins, tmp.file("solution.csv"));
    CHECK(first_line(tmp.file("solution.csv")) == "t,bin,center,n_y,y_mean,n_z,z_mean");
}

TEST_CASE("config parsing fills defaults and echoes every effective setting") {
    Json j = minimal_config();
    j["outputs"] = {{"summary_json", "s.json"}, {"checks_json", "c.json"}};
    j["checks"] = Json::array({"tanaka", Json{{"name", "comparison_bsde"}, {"f_shift", 0.2}}});
    const ExperimentConfig cfg = parse_config(j);

    CHECK(cfg.mode == "bsde");
    CHECK(cfg.grid.n_steps == 8);
    CHECK(cfg.seed == 42);
    CHECK(cfg.n_paths == 100);
    CHECK(cfg.gen.monotone_mu == doctest::Approx(0.5));
    CHECK(cfg.family.members.size() == 1);       // default unit volatility
    CHECK(cfg.family.members[0].d == 1);
    CHECK(cfg.checks.size() == 2);
    CHECK(cfg.checks[0].name == "tanaka");
    CHECK(cfg.checks[1].params["f_shift"] == 0.2);
    CHECK(cfg.outputs.size() == 2);

    // Defaults are materialized in the echo, not left implicit.
    const Json& r = cfg.resolved;
    CHECK(r["numerics"]["picard"]["max_iters"] == 50);
    CHECK(r["numerics"]["z_mode"] == "covariation_x");
    CHECK(r["numerics"]["basis"]["kind"] == "polynomial");
    CHECK(r["problem"]["generator"]["moment_q"] == 4.0);
}

TEST_CASE("config hash is deterministic and seed-sensitive") {
    const ExperimentConfig a = parse_config(minimal_config());
    const ExperimentConfig b = parse_config(minimal_config());
    CHECK(config_hash(a.resolved) == config_hash(b.resolved));

    Json j = minimal_config();
    j["numerics"]["seed"] = 43;
    const ExperimentConfig c = parse_config(j);
    CHECK(config_hash(c.resolved) != config_hash(a.resolved));

    const Json manifest = make_manifest(a);
    CHECK(manifest["config_hash"] == config_hash(manifest["config"]));
    CHECK(manifest["seed"] == 42);
}

TEST_CASE("missing seed is a hard error") {
    Json j = minimal_config();
    j["numerics"].erase("seed");
    CHECK_THROWS_WITH_AS(parse_config(j),
                         "config: numerics.seed is required (no nondeterministic default)",
                         ConfigError);
}

TEST_CASE("every violated admissibility window is reported at once") {
    Json j = minimal_config();
    j["problem"]["generator"]["weight_rho"] = 0.1;  // below -monotone_mu? no: mu=0.5 -> ok
    j["problem"]["generator"]["a"] = 0.5;           // mu = -0.5, rho=0.1 < 0.5 violated
    j["numerics"]["norm_p"] = 9.0;                  // outside (1, q)
    try {
        parse_config(j);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        CHECK(what.find("weight_rho") != std::string::npos);
        CHECK(what.find("norm_p") != std::string::npos);
    }
}

TEST_CASE("unknown output slots and sweep axes are rejected") {
    Json j = minimal_config();
    j["outputs"]["plot_png"] = "x.png";
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    Json s = minimal_config();
    s["sweep"] = {{"axis", "volatility"}, {"values", {1.0, 2.0}}};
    CHECK_THROWS_AS(parse_config(s), ConfigError);
}

TEST_CASE("z_mode and basis variants parse") {
    Json j = minimal_config();
    j["numerics"]["z_mode"] = "brownian_w";
    // Array lo/hi on a polynomial basis (per-dimension scaling box).
    j["numerics"]["basis"] = {{"kind", "polynomial"}, {"degree", 2}, {"lo", {-2.0}},
                              {"hi", {2.0}}};
    const ExperimentConfig cfg = parse_config(j);
    CHECK(cfg.z_mode == ZMode::BrownianW);
    CHECK(cfg.basis.degree == 2);
    CHECK(cfg.basis.lo[0] == -2.0);
    CHECK(cfg.basis.hi[0] == 2.0);

    Json k = minimal_config();
    k["numerics"]["basis"] = {{"kind", "piecewise_linear"}, {"bins", 6}, {"lo", -1.5},
                              {"hi", 1.5}};
    const ExperimentConfig cfg2 = parse_config(k);
    CHECK(cfg2.basis.bins == 6);
}

TEST_CASE("config file loader reports unreadable and unparsable files") {
    CHECK_THROWS_AS(load_config_file("/nonexistent/nowhere.json"), ConfigError);
    TempDir tmp;
    write_text_file(tmp.file("broken.json"), "{ not json");
    CHECK_THROWS_AS(load_config_file(tmp.file("broken.json")), ConfigError);
}
