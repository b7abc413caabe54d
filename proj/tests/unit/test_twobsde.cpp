#include <doctest.h>

#include <cmath>
#include <limits>

#include "rhbsde/errors.hpp"
#include "rhbsde/pde_oracles.hpp"
#include "rhbsde/twobsde.hpp"

using namespace rhbsde;

namespace {

const RegressionBasis kQuad =
    RegressionBasis::polynomial(2, Vec::Constant(1, -8.0), Vec::Constant(1, 8.0));

TwoBsdeProblem square_problem(std::vector<VolatilitySpec> members) {
    TwoBsdeProblem prob;
    prob.family = MeasureFamily(std::move(members));
    prob.gen = GeneratorSpec::affine_scalar(0.0, 0.0, 0.0, "zero");
    prob.term = TerminalSpec::state_functional([](const Vec& x) { return x[0] * x[0]; },
                                               "square");
    return prob;
}

FamilySimConfig sim_config(std::size_t n_steps, std::size_t n_paths, std::uint64_t seed,
                           double cap = 1.0) {
    FamilySimConfig sim;
    sim.grid = TimeGrid(cap / static_cast<double>(n_steps), n_steps);
    sim.rule = StoppingRule::deterministic(cap);
    sim.n_paths = n_paths;
    sim.seed = seed;
    return sim;
}

}  // namespace

TEST_CASE("singleton menu collapses to the member solution") {
    TwoBsdeProblem prob = square_problem({VolatilitySpec::scalar_constant(1.0, 0.0, "only")});
    const FamilySimConfig sim = sim_config(16, 3000, 5);
    TwoBsdeOptions opts;
    opts.keep_member_solutions = true;
    const TwoBsdeSolution sol = solve_2bsde_sweep(prob, kQuad, sim, opts);
    REQUIRE(sol.per_member.size() == 1);
    CHECK(sol.v0 == doctest::Approx(sol.per_member[0].y0_mean).epsilon(1e-12));
    CHECK(sol.argmax_member_0 == 0);
    CHECK(sol.member_ok[0]);
}

TEST_CASE("convex payoff picks the widest volatility") {
    TwoBsdeProblem prob =
        square_problem({VolatilitySpec::scalar_constant(1.0, 0.0, "low"),
                        VolatilitySpec::scalar_constant(std::sqrt(2.0), 0.0, "high")});
    const FamilySimConfig sim = sim_config(16, 6000, 7);
    const TwoBsdeSolution sol = solve_2bsde_sweep(prob, kQuad, sim);
    // sup-member value of E[X_1^2] over sigma in {1, sqrt 2} is 2.
    CHECK(sol.v0 == doctest::Approx(2.0).epsilon(0.07));
    CHECK(sol.member_names[sol.argmax_member_0] == "high");
    CHECK(sol.mode == "sweep");
}

TEST_CASE("node-grid program agrees with the sweep on a constant-optimum problem") {
    TwoBsdeProblem prob =
        square_problem({VolatilitySpec::scalar_constant(1.0, 0.0, "low"),
                        VolatilitySpec::scalar_constant(std::sqrt(2.0), 0.0, "high")});
    const FamilySimConfig sim = sim_config(32, 8000, 9);
    const TwoBsdeSolution sweep = solve_2bsde_sweep(prob, kQuad, sim);
    const TwoBsdeSolution grid = solve_2bsde_hjb(prob, sim);
    CHECK(grid.mode == "node_grid");
    // Exact value: sup over sigma in {1, sqrt 2} of E[(x + sigma W_1)^2]
    // at x = 0 is 2.  The auto-ranged node grid ties its spacing to the
    // one-step diffusion scale, so the interpolation bias stays small.
    CHECK(grid.v0 == doctest::Approx(2.0).epsilon(0.03));
    CHECK(std::abs(grid.v0 - sweep.v0) <= 0.1);
    // A finite menu never beats the pointwise maximization.
    CHECK(grid.v0 >= sweep.v0 - 3.0 * sweep.v0_se - 0.02);
}

TEST_CASE("node-grid program rejects non-markov data") {
    TwoBsdeProblem prob = square_problem({VolatilitySpec::scalar_constant(1.0)});
    prob.term = TerminalSpec::path_functional(
        [](const StoppedPathView& v) { return v.state_at_stop()[0]; }, "path-payoff");
    CHECK_THROWS_AS(solve_2bsde_hjb(prob, sim_config(8, 100, 11)), ConfigError);
}

TEST_CASE("member screening rejects a driver that blows up on the menu") {
    TwoBsdeProblem prob = square_problem({VolatilitySpec::scalar_constant(1.0)});
    prob.family.generator_finiteness_check = true;
    prob.gen.F = [](double, const Vec&, double y, const Vec&, const Mat&) {
        return y + std::numeric_limits<double>::quiet_NaN();
    };
    CHECK_THROWS_AS(solve_2bsde_sweep(prob, kQuad, sim_config(8, 200, 13)), ConfigError);
}

TEST_CASE("dynamic programming composition matches the direct solve") {
    TwoBsdeProblem prob =
        square_problem({VolatilitySpec::scalar_constant(1.0, 0.0, "low"),
                        VolatilitySpec::scalar_constant(std::sqrt(2.0), 0.0, "high")});
    const FamilySimConfig sim = sim_config(16, 6000, 15);
    const DppReport rep = dpp_check(prob, 0.5, kQuad, sim);
    CHECK(rep.pass);
    CHECK(rep.rel_gap <= 0.03);
    CHECK(rep.max_bin_rel_gap <= 0.03);
    CHECK(rep.member_outer.size() == 2);

    // Singleton family: the composition is the plain tower property.
    TwoBsdeProblem single = square_problem({VolatilitySpec::scalar_constant(1.0)});
    const DppReport tower = dpp_check(single, 0.5, kQuad, sim);
    CHECK(tower.rel_gap <= 0.01);
}

TEST_CASE("compensator minimality: argmax member idles, dominated member pays") {
    TwoBsdeProblem prob =
        square_problem({VolatilitySpec::scalar_constant(1.0, 0.0, "low"),
                        VolatilitySpec::scalar_constant(2.0, 0.0, "high")});
    const FamilySimConfig sim = sim_config(64, 8000, 17);
    TwoBsdeOptions opts;
    opts.keep_k_tables = true;
    const TwoBsdeSolution sol = solve_2bsde_sweep(prob, kQuad, sim, opts);
    // Window [t=1/8, t=7/8]: the dominated member pays (sigma_max^2 -
    // sigma_min^2) * window = 3 * 0.75 = 2.25 of compensator mass there,
    // far above the statistical floor, while the argmax member pays none.
    const MinimalityReport rep = minimality_check(sol, 8, 56);
    CHECK(rep.pass);
    CHECK(rep.worst_min <= rep.eps_stat);
    REQUIRE(rep.member_total_inc.size() == 2);
    CHECK(rep.member_total_inc[1] <= rep.member_total_inc[0]);
    CHECK(rep.member_total_inc[0] > 5.0 * rep.eps_stat);
}

TEST_CASE("minimality without retained tables is rejected") {
    TwoBsdeProblem prob = square_problem({VolatilitySpec::scalar_constant(1.0)});
    const TwoBsdeSolution sol = solve_2bsde_sweep(prob, kQuad, sim_config(16, 500, 19));
    CHECK_THROWS_AS(minimality_check(sol, 4, 12), ConfigError);
}

TEST_CASE("tail certificate: exit rules drain, deterministic horizons cut off") {
    TwoBsdeProblem prob = square_problem({VolatilitySpec::scalar_constant(1.0, 0.5)});
    FamilySimConfig sim = sim_config(64, 4000, 21, 4.0);
    sim.rule = StoppingRule::exit_of_box(Vec::Constant(1, 0.0), Vec::Constant(1, 1.0));
    const TailCertificate cert = twobsde_tail_certificate(prob, sim, {0.25, 0.5, 1.0, 2.0});
    REQUIRE(cert.survival.size() == 4);
    for (std::size_t i = 1; i < cert.survival.size(); ++i)
        CHECK(cert.survival[i] <= cert.survival[i - 1]);
    CHECK(cert.pass);

    // A rung beyond a deterministic horizon has no survivors: a stop at
    // the cap is a genuine stop, not censoring.
    FamilySimConfig det = sim_config(16, 1000, 23, 1.0);
    const TailCertificate cut = twobsde_tail_certificate(prob, det, {0.5, 1.0, 2.0, 4.0});
    REQUIRE(cut.survival.size() == 4);
    CHECK(cut.survival[0] == 1.0);
    CHECK(cut.survival[2] == 0.0);
    CHECK(cut.survival[3] == 0.0);
    CHECK(cut.pass);
}

TEST_CASE("family comparison: ordered data give ordered values") {
    TwoBsdeProblem lo =
        square_problem({VolatilitySpec::scalar_constant(1.0, 0.0, "low"),
                        VolatilitySpec::scalar_constant(1.5, 0.0, "high")});
    TwoBsdeProblem hi = lo;
    hi.gen = GeneratorSpec::affine_scalar(0.0, 0.0, 0.2, "up");
    hi.term = TerminalSpec::state_functional(
        [](const Vec& x) { return x[0] * x[0] + 0.3; }, "square+");
    const ComparisonReport rep =
        twobsde_comparison_check(lo, hi, kQuad, sim_config(16, 4000, 25));
    CHECK(rep.pass);
    CHECK(rep.y0_prime > rep.y0);
}

TEST_CASE("member solutions are stripped unless retention is requested") {
    TwoBsdeProblem prob = square_problem({VolatilitySpec::scalar_constant(1.0)});
    const FamilySimConfig sim = sim_config(16, 500, 27);
    const TwoBsdeSolution lean = solve_2bsde_sweep(prob, kQuad, sim);
    REQUIRE(lean.per_member.size() == 1);
    CHECK(lean.per_member[0].Y.empty());
    CHECK(lean.member_K_path.empty());

    TwoBsdeOptions opts;
    opts.keep_member_solutions = true;
    opts.keep_k_tables = true;
    const TwoBsdeSolution fat = solve_2bsde_sweep(prob, kQuad, sim, opts);
    CHECK_FALSE(fat.per_member[0].Y.empty());
    REQUIRE(fat.member_K_path.size() == 1);
    CHECK_FALSE(fat.member_K_path[0].empty());
}
