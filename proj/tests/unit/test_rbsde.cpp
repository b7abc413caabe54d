#include <doctest.h>

#include <cmath>

#include "rhbsde/errors.hpp"
#include "rhbsde/pde_oracles.hpp"
#include "rhbsde/rbsde.hpp"

using namespace rhbsde;

namespace {

const RegressionBasis kCubic =
    RegressionBasis::polynomial(3, Vec::Constant(1, 0.0), Vec::Constant(1, 2.0));

// Additive at-the-money put market: dX = 0.2 dW from 1, horizon 1.
PathBundle put_market(std::size_t n_paths, std::size_t n_steps, std::uint64_t seed) {
    return simulate_paths(VolatilitySpec::scalar_constant(0.2, 1.0),
                          StoppingRule::deterministic(1.0),
                          TimeGrid(1.0 / static_cast<double>(n_steps), n_steps), n_paths, seed);
}

TerminalSpec put_terminal(double strike) {
    return TerminalSpec::state_functional(
        [strike](const Vec& x) { return std::max(strike - x[0], 0.0); }, "put");
}

ObstacleSpec put_obstacle(double strike) {
    ObstacleSpec obs = ObstacleSpec::of(
        [strike](double, const Vec& x) { return std::max(strike - x[0], 0.0); }, "put");
    obs.has_certificate = true;
    obs.plus_rho = 0.5;
    obs.plus_q = 4.0;
    return obs;
}

}  // namespace

TEST_CASE("far-below barrier reduces the reflected solve to the plain one") {
    const PathBundle b = put_market(3000, 32, 3);
    const QvDensity qv = quadratic_variation_density(b);
    const GeneratorSpec gen = GeneratorSpec::affine_scalar(-0.3, 0.0, 0.1, "affine");
    const TerminalSpec term = put_terminal(1.0);
    ObstacleSpec low = ObstacleSpec::of([](double, const Vec&) { return -100.0; }, "floor");
    low.has_certificate = true;
    low.plus_rho = 0.5;
    low.plus_q = 4.0;

    const BackwardSolution plain = solve_bsde(b, qv, gen, term, kCubic);
    const ReflectedSolution refl = solve_rbsde(b, gen, term, low, kCubic, {}, {}, &qv);

    double max_dy = 0.0, max_k = 0.0;
    for (std::size_t p = 0; p < b.n_paths; ++p) {
        for (std::size_t k = 0; k <= b.grid.n_steps; ++k)
            max_dy = std::max(max_dy, std::abs(plain.Y(p, k) - refl.Y(p, k)));
        max_k = std::max(max_k, refl.K(p, b.grid.n_steps));
    }
    CHECK(max_dy <= 1e-8);
    CHECK(max_k <= 1e-12);
    CHECK(refl.binding_fraction == 0.0);
}

TEST_CASE("american put: exact complementarity and a monotone frozen push") {
    const PathBundle b = put_market(6000, 64, 11);
    const QvDensity qv = quadratic_variation_density(b);
    const GeneratorSpec gen = GeneratorSpec::affine_scalar(-0.1, 0.0, 0.0, "discount");
    const ReflectedSolution sol =
        solve_rbsde(b, gen, put_terminal(1.0), put_obstacle(1.0), kCubic, {}, {}, &qv);

    // The per-step reflection is exact, so the sampled residual is zero.
    CHECK(sol.skorokhod_residual == 0.0);
    CHECK(sol.binding_fraction > 0.0);

    for (std::size_t p = 0; p < b.n_paths; p += 97) {
        double prev = 0.0;
        CHECK(sol.K(p, 0) == 0.0);
        for (std::size_t k = 1; k <= b.grid.n_steps; ++k) {
            CHECK(sol.K(p, k) >= prev - 1e-15);
            if (k > b.stop_index[p]) CHECK(sol.K(p, k) == sol.K(p, b.stop_index[p]));
            prev = sol.K(p, k);
        }
    }

    // Reflected value dominates both the barrier at time zero and the
    // plain (European) value.
    const BackwardSolution plain = solve_bsde(b, qv, gen, put_terminal(1.0), kCubic);
    CHECK(sol.y0_mean >= plain.y0_mean - 3.0 * (sol.y0_se + plain.y0_se));
    CHECK(sol.y0_mean >= 0.0);
}

TEST_CASE("snell envelope agrees with the reflected solve on the put") {
    const PathBundle b = put_market(6000, 64, 13);
    const QvDensity qv = quadratic_variation_density(b);
    const GeneratorSpec gen = GeneratorSpec::affine_scalar(-0.1, 0.0, 0.0, "discount");
    const ReflectedSolution refl =
        solve_rbsde(b, gen, put_terminal(1.0), put_obstacle(1.0), kCubic, {}, {}, &qv);
    const ReflectedSolution snell =
        snell_envelope(b, 0.1, put_terminal(1.0), put_obstacle(1.0), kCubic, &qv);
    CHECK(snell.y0_mean == doctest::Approx(refl.y0_mean).epsilon(0.01));
    CHECK(snell.skorokhod_residual == 0.0);
}

TEST_CASE("obstacle above the terminal value is rejected up front") {
    const PathBundle b = put_market(200, 8, 17);
    const GeneratorSpec gen = GeneratorSpec::affine_scalar(0.0, 0.0, 0.0, "zero");
    ObstacleSpec high = ObstacleSpec::of([](double, const Vec&) { return 5.0; }, "too-high");
    high.has_certificate = true;
    high.plus_rho = 0.5;
    high.plus_q = 4.0;
    CHECK_THROWS_AS(solve_rbsde(b, gen, put_terminal(1.0), high, kCubic), ConfigError);
}

TEST_CASE("reflected comparison: ordered data give ordered solutions") {
    const PathBundle b = put_market(3000, 32, 19);
    // Keep genuine Lipschitz content in the drivers: the comparison slack
    // is 3*SE + 2*h*L*scale, so an L ~ 0 pair leaves no room for the
    // regression noise that a barrier kink injects pathwise.
    const GeneratorSpec gen = GeneratorSpec::affine_scalar(-0.4, 0.0, 0.0, "base");
    const GeneratorSpec gen_up = GeneratorSpec::affine_scalar(-0.4, 0.0, 0.05, "up");
    const ComparisonReport rep =
        rbsde_comparison_check(b, gen, put_terminal(1.0), put_obstacle(1.0), gen_up,
                               put_terminal(1.05), put_obstacle(1.05), kCubic);
    CHECK(rep.pass);
    CHECK(rep.y0_prime > rep.y0);
}

TEST_CASE("reflected stability decays with at least square-root order") {
    const PathBundle b = put_market(2000, 16, 23);
    GeneratorSpec gen = GeneratorSpec::affine_scalar(-0.1, 0.0, 0.0, "discount");
    gen.moment_q = 4.0;
    const RbsdeStabilityReport rep = rbsde_stability_check(
        b, gen, put_terminal(1.0), put_obstacle(1.0), put_obstacle(1.0), 0.05, 0.02, kCubic,
        0.0, 2.0, DriftControlSet(), {0.1, 0.01});
    CHECK(rep.pass);
    CHECK(rep.exponent >= 0.48);
    REQUIRE(rep.dY_norm.size() == 2);
    CHECK(rep.dY_norm[1] < rep.dY_norm[0]);
}

TEST_CASE("truncation ladder settles on an exit-time problem") {
    // Exit of (0, 4) from 2 with a unit running cost; expected exit time 4.
    const PathBundle b = simulate_paths(
        VolatilitySpec::scalar_constant(1.0, 2.0),
        StoppingRule::exit_of_box(Vec::Constant(1, 0.0), Vec::Constant(1, 4.0)),
        TimeGrid(1.0 / 16.0, 256), 4000, 29);
    const GeneratorSpec gen = GeneratorSpec::affine_scalar(0.0, 0.0, 1.0, "unit-cost");
    ObstacleSpec floor = ObstacleSpec::of([](double, const Vec&) { return -1.0; }, "floor");
    floor.has_certificate = true;
    floor.plus_rho = 0.5;
    floor.plus_q = 4.0;
    const RegressionBasis basis =
        RegressionBasis::polynomial(2, Vec::Constant(1, 0.0), Vec::Constant(1, 4.0));

    RbsdeOptions opts;
    opts.ladder = {1.0, 2.0, 4.0, 8.0, 16.0};
    opts.keep_solutions = true;
    opts.require_convergence = false;
    const ReflectedSolution sol =
        solve_rbsde(b, gen, TerminalSpec::constant(0.0), floor, basis, {}, opts);

    REQUIRE(sol.rung_n.size() >= 4);
    REQUIRE(sol.rung_distance.size() == sol.rung_n.size() - 1);
    CHECK(sol.rung_Y.size() == sol.rung_n.size());
    // The time-zero value of each truncated run approaches the deepest
    // rung's monotonically: |y0(r) - y0(last)| must shrink as the rung
    // horizon passes the bulk of the exit-time distribution.
    std::vector<double> y0r;
    for (const Array2D& Y : sol.rung_Y) {
        double acc = 0.0;
        for (std::size_t p = 0; p < Y.rows; ++p) acc += Y(p, 0);
        y0r.push_back(acc / static_cast<double>(Y.rows));
    }
    for (std::size_t r = 0; r + 2 < y0r.size(); ++r) {
        CHECK(std::abs(y0r[r] - y0r.back()) > std::abs(y0r[r + 1] - y0r.back()));
    }
    // Never-binding floor: the solution is the plain occupation value,
    // y0 ~ E[tau] = x(4 - x) = 4 up to the horizon cap truncation.
    CHECK(sol.y0_mean == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("single-rung ladder reports itself as settled") {
    const PathBundle b = put_market(500, 16, 31);
    const GeneratorSpec gen = GeneratorSpec::affine_scalar(-0.1, 0.0, 0.0, "discount");
    RbsdeOptions opts;
    opts.ladder = {1.0};
    const ReflectedSolution sol =
        solve_rbsde(b, gen, put_terminal(1.0), put_obstacle(1.0), kCubic, {}, opts);
    CHECK(sol.truncation_converged);
    CHECK(sol.rung_n.size() == 1);
    CHECK(sol.rung_distance.empty());
}
