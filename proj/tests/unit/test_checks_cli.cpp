#include <doctest.h>

#include <set>
#include <string>

#include "rhbsde/checks.hpp"
#include "rhbsde/config.hpp"
#include "rhbsde/errors.hpp"

using namespace rhbsde;

namespace {

ExperimentConfig small_affine_config() {
    Json j;
    j["version"] = 1;
    j["mode"] = "bsde";
    j["problem"]["generator"] = {{"kind", "affine"}, {"a", -0.5}, {"weight_rho", 1.0},
                                 {"moment_q", 4.0}};
    j["problem"]["terminal"] = {{"kind", "constant"}, {"value", 1.0}};
    j["problem"]["stopping"] = {{"kind", "deterministic"}, {"time", 1.0}};
    j["problem"]["controls"] = {{"bound", 0.5}, {"lambdas", {{0.5}, {-0.5}}}};
    j["numerics"]["n_steps"] = 16;
    j["numerics"]["step_h"] = 0.0625;
    j["numerics"]["n_paths"] = 1500;
    j["numerics"]["seed"] = 7;
    j["numerics"]["basis"] = {{"kind", "polynomial"}, {"degree", 2}, {"lo", -4.0},
                              {"hi", 4.0}};
    return parse_config(j);
}

}  // namespace

TEST_CASE("the check catalog is populated, unique and described") {
    const auto& cat = check_catalog();
    CHECK(cat.size() == 16);
    std::set<std::string> names;
    for (const auto& c : cat) {
        CHECK_FALSE(c.name.empty());
        CHECK_FALSE(c.description.empty());
        CHECK(c.description.size() > 20);  // a sentence, not a stub
        names.insert(c.name);
    }
    CHECK(names.size() == cat.size());
    CHECK(names.count("comparison_bsde") == 1);
    CHECK(names.count("skorokhod") == 1);
    CHECK(names.count("doob") == 1);
    CHECK(names.count("tail_certificate") == 1);
}

TEST_CASE("unknown check names are rejected with the catalog in the message") {
    const ExperimentConfig cfg = small_affine_config();
    CheckRequest req;
    req.name = "no_such_check";
    req.params = Json::object();
    try {
        run_check(cfg, req);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        CHECK(what.find("no_such_check") != std::string::npos);
        CHECK(what.find("tanaka") != std::string::npos);  // lists known names
    }
}

TEST_CASE("registry checks run end-to-end on a small configuration") {
    const ExperimentConfig cfg = small_affine_config();

    CheckRequest tanaka{"tanaka", Json::object()};
    const CheckOutcome t = run_check(cfg, tanaka);
    CHECK(t.name == "tanaka");
    CHECK(t.pass);
    CHECK(t.report["pass"] == true);

    CheckRequest comparison{"comparison_bsde", Json{{"f_shift", 0.1}, {"xi_shift", 0.1}}};
    const CheckOutcome c = run_check(cfg, comparison);
    CHECK(c.pass);
    CHECK(c.report["params"]["f_shift"] == 0.1);

    CheckRequest picard{"picard_contraction", Json::object()};
    const CheckOutcome p = run_check(cfg, picard);
    CHECK(p.pass);

    CheckRequest doob{"doob", Json::object()};
    const CheckOutcome d = run_check(cfg, doob);
    CHECK(d.pass);
}

TEST_CASE("negative ordering shifts are rejected up front") {
    const ExperimentConfig cfg = small_affine_config();
    CheckRequest bad{"comparison_bsde", Json{{"f_shift", -0.1}}};
    CHECK_THROWS_AS(run_check(cfg, bad), ConfigError);
}

TEST_CASE("run_checks preserves request order") {
    ExperimentConfig cfg = small_affine_config();
    cfg.checks.push_back({"tanaka", Json::object()});
    cfg.checks.push_back({"comparison_bsde", Json::object()});
    const auto outcomes = run_checks(cfg);
    REQUIRE(outcomes.size() == 2);
    CHECK(outcomes[0].name == "tanaka");
    CHECK(outcomes[1].name == "comparison_bsde");
}

TEST_CASE("picard guard refuses a step size outside the contraction regime") {
    Json j;
    j["version"] = 1;
    j["mode"] = "bsde";
    j["problem"]["generator"] = {{"kind", "affine"}, {"a", -3.0}, {"weight_rho", 4.0},
                                 {"moment_q", 4.0}};
    j["problem"]["terminal"] = {{"kind", "constant"}, {"value", 1.0}};
    j["numerics"]["n_steps"] = 4;
    j["numerics"]["step_h"] = 0.25;  // h * (L + mu) = 1.5 >= 0.5
    j["numerics"]["n_paths"] = 200;
    j["numerics"]["seed"] = 3;
    const ExperimentConfig cfg = parse_config(j);
    CheckRequest req{"picard_contraction", Json::object()};
    CHECK_THROWS_AS(run_check(cfg, req), ConfigError);
}
