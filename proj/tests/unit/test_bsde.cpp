#include <doctest.h>

#include <cmath>

#include "rhbsde/bsde.hpp"
#include "rhbsde/errors.hpp"
#include "rhbsde/pde_oracles.hpp"

using namespace rhbsde;

namespace {

PathBundle bm(std::size_t n_paths, std::size_t n_steps, std::uint64_t seed, double x0 = 0.0,
              double cap = 1.0) {
    return simulate_paths(VolatilitySpec::scalar_constant(1.0, x0),
                          StoppingRule::deterministic(cap),
                          TimeGrid(cap / static_cast<double>(n_steps), n_steps), n_paths, seed);
}

const RegressionBasis kQuad =
    RegressionBasis::polynomial(2, Vec::Constant(1, -5.0), Vec::Constant(1, 5.0));

double mean_z_at(const BackwardSolution& sol, std::size_t k) {
    double sum = 0.0;
    for (std::size_t p = 0; p < sol.Z.rows; ++p) sum += sol.Z(p, k, 0);
    return sum / static_cast<double>(sol.Z.rows);
}

}  // namespace

TEST_CASE("driverless quadratic terminal reproduces the heat moment") {
    const PathBundle b = bm(20000, 32, 31);
    const QvDensity qv = quadratic_variation_density(b);
    const GeneratorSpec gen = GeneratorSpec::affine_scalar(0.0, 0.0, 0.0, "zero");
    const TerminalSpec term = TerminalSpec::state_functional(
        [](const Vec& x) { return x[0] * x[0]; }, "square");
    const BackwardSolution sol = solve_bsde(b, qv, gen, term, kQuad);
    CHECK(std::abs(sol.y0_mean - 1.0) <= std::max(4.0 * sol.y0_se, 0.03));
    // Interior surface: E[X_1^2 | X_{1/2} = x] = x^2 + 1/2.
    Regressor reg(kQuad, 1);
    const double at_half = sol.eval_Y(reg, 16, Vec::Constant(1, 0.5));
    CHECK(at_half == doctest::Approx(0.75).epsilon(0.08));
}

TEST_CASE("linear discounting matches the closed form") {
    const PathBundle b = bm(4000, 64, 7);
    const QvDensity qv = quadratic_variation_density(b);
    const GeneratorSpec gen = GeneratorSpec::affine_scalar(-0.5, 0.0, 0.0, "discount");
    const BackwardSolution sol = solve_bsde(b, qv, gen, TerminalSpec::constant(1.0), kQuad);
    CHECK(sol.y0_mean ==
          doctest::Approx(linear_bsde_closed_form(0.5, 1.0, 1.0)).epsilon(0.01));
    CHECK(sol.picard_iters >= 1);
}

TEST_CASE("z extraction identifies the constant gradient in both modes") {
    const PathBundle b = bm(20000, 16, 13);
    const QvDensity qv = quadratic_variation_density(b);
    const GeneratorSpec gen = GeneratorSpec::affine_scalar(0.0, 0.0, 0.0, "zero");
    const TerminalSpec term =
        TerminalSpec::state_functional([](const Vec& x) { return x[0]; }, "identity");
    for (const ZMode mode : {ZMode::CovariationX, ZMode::BrownianW}) {
        const BackwardSolution sol = solve_bsde(b, qv, gen, term, kQuad, {}, mode);
        // dY = dX almost surely, so Z must sit at 1 across the interior.
        for (std::size_t k = 2; k + 2 < 16; ++k) {
            CHECK(mean_z_at(sol, k) == doctest::Approx(1.0).epsilon(0.05));
        }
    }
}

TEST_CASE("standalone z read-off recovers the gradient of a pinned process") {
    const PathBundle b = bm(20000, 16, 17);
    const QvDensity qv = quadratic_variation_density(b);
    Array2D Y(b.n_paths, b.grid.n_steps + 1);
    for (std::size_t p = 0; p < b.n_paths; ++p)
        for (std::size_t k = 0; k <= b.grid.n_steps; ++k) Y(p, k) = b.X(p, k, 0);
    const Array3D Z = estimate_z(b, qv, Y, kQuad);
    double sum = 0.0;
    for (std::size_t p = 0; p < b.n_paths; ++p) sum += Z(p, 8, 0);
    CHECK(sum / static_cast<double>(b.n_paths) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("tower property: window solve with pinned terminals reproduces values") {
    const PathBundle b = bm(5000, 32, 19);
    const QvDensity qv = quadratic_variation_density(b);
    const GeneratorSpec gen = GeneratorSpec::affine_scalar(-0.3, 0.0, 0.2, "affine");
    const TerminalSpec term = TerminalSpec::state_functional(
        [](const Vec& x) { return x[0] * x[0]; }, "square");
    PicardOptions picard;
    picard.tol = 1e-12;
    const BackwardSolution full = solve_bsde(b, qv, gen, term, kQuad, picard);
    const std::size_t k1 = 16;
    std::vector<double> tv(b.n_paths);
    for (std::size_t p = 0; p < b.n_paths; ++p)
        tv[p] = full.Y(p, std::min<std::size_t>(b.stop_index[p], k1));
    const BackwardSolution win =
        solve_bsde_window(b, qv, gen, tv, kQuad, picard, ZMode::CovariationX, SolveWindow{0, k1});
    CHECK(win.y0_mean == doctest::Approx(full.y0_mean).epsilon(1e-7));
}

TEST_CASE("picard sweeps contract under the step-size guard") {
    const PathBundle b = bm(3000, 32, 23);
    const QvDensity qv = quadratic_variation_density(b);
    const GeneratorSpec gen = GeneratorSpec::affine_scalar(-0.5, 0.0, 0.0, "discount");
    PicardOptions picard;
    picard.tol = 1e-13;
    const BackwardSolution sol =
        solve_bsde(b, qv, gen, TerminalSpec::constant(1.0), kQuad, picard);
    REQUIRE(sol.sweep_distances.size() >= 2);
    for (std::size_t i = 1; i < sol.sweep_distances.size(); ++i) {
        if (sol.sweep_distances[i - 1] > 1e-13)
            CHECK(sol.sweep_distances[i] < 0.5 * sol.sweep_distances[i - 1]);
    }
}

TEST_CASE("implicit newton stepping agrees with frozen-y sweeps") {
    const PathBundle b = bm(2000, 16, 29);
    const QvDensity qv = quadratic_variation_density(b);
    const GeneratorSpec gen = GeneratorSpec::affine_scalar(-0.4, 0.0, 0.1, "affine");
    PicardOptions tight;
    tight.tol = 1e-12;
    PicardOptions implicit = tight;
    implicit.implicit_y = true;
    const BackwardSolution a = solve_bsde(b, qv, gen, TerminalSpec::constant(2.0), kQuad, tight);
    const BackwardSolution c =
        solve_bsde(b, qv, gen, TerminalSpec::constant(2.0), kQuad, implicit);
    CHECK(a.y0_mean == doctest::Approx(c.y0_mean).epsilon(1e-6));
}

TEST_CASE("comparison: ordered data give ordered solutions") {
    const PathBundle b = bm(4000, 16, 37);
    const QvDensity qv = quadratic_variation_density(b);
    const GeneratorSpec gen = GeneratorSpec::affine_scalar(-0.2, 0.0, 0.0, "base");
    const GeneratorSpec gen_up = GeneratorSpec::affine_scalar(-0.2, 0.0, 0.3, "up");
    const TerminalSpec term =
        TerminalSpec::state_functional([](const Vec& x) { return x[0]; }, "id");
    const TerminalSpec term_up =
        TerminalSpec::state_functional([](const Vec& x) { return x[0] + 0.5; }, "id+");
    const ComparisonReport rep = comparison_check(b, qv, gen, term, gen_up, term_up, kQuad);
    CHECK(rep.pass);
    CHECK(rep.y0_prime > rep.y0);
    // With the data order flipped the positive-part violation is ~0.5,
    // far beyond the statistical + O(h) slack.
    const ComparisonReport rev = comparison_check(b, qv, gen_up, term_up, gen, term, kQuad);
    CHECK_FALSE(rev.pass);
    CHECK(rev.max_violation > 0.3);
    CHECK(rev.max_violation > rev.slack);
}

TEST_CASE("a-priori energy ratio is stable under data doubling") {
    const PathBundle b = bm(4000, 16, 41);
    const QvDensity qv = quadratic_variation_density(b);
    GeneratorSpec gen = GeneratorSpec::affine_scalar(-0.2, 0.0, 0.3, "affine");
    gen.moment_q = 4.0;  // open the (1, q) exponent window for p = 2
    const TerminalSpec term = TerminalSpec::state_functional(
        [](const Vec& x) { return 1.0 + 0.5 * x[0]; }, "affine-terminal");
    const DriftControlSet controls(
        0.5, {LambdaPolicy::constant(Vec::Constant(1, 0.5), "up")}, 1);
    const AprioriReport rep = apriori_check(b, qv, gen, term, kQuad, 0.0, 2.0, controls);
    CHECK(rep.pass);
    CHECK(rep.lhs > 0.0);
    CHECK(rep.rhs > 0.0);
}

TEST_CASE("stability: a small data shift moves the solution proportionally") {
    const PathBundle b = bm(4000, 16, 43);
    const QvDensity qv = quadratic_variation_density(b);
    GeneratorSpec gen = GeneratorSpec::affine_scalar(-0.2, 0.0, 0.0, "base");
    gen.moment_q = 4.0;
    const TerminalSpec term = TerminalSpec::constant(1.0);
    const TerminalSpec term_eps = TerminalSpec::constant(1.01);
    const StabilityReport rep = stability_check(b, qv, gen, term, gen, term_eps, kQuad, 0.0,
                                                2.0, DriftControlSet());
    CHECK(rep.rhs > 0.0);
    CHECK(std::isfinite(rep.ratio));
    CHECK(rep.lhs <= 10.0 * rep.rhs);
}

TEST_CASE("pathwise occupation inequality holds on brownian paths") {
    const PathBundle b = bm(3000, 64, 47);
    const TanakaReport rep = tanaka_check(b, 0, 0.0);
    CHECK(rep.pass);
    CHECK(rep.violation_fraction == 0.0);
    CHECK(rep.mean_final_gap >= 0.0);
}

TEST_CASE("weighted truncation moments diverge while tilted norms stay flat") {
    const TimeGrid grid(1.0 / 32, 128);  // horizon cap 4 for the quick version
    const DivergenceReport rep = example_divergence(1.0, {1.0, 2.0}, grid, 8000, 51);
    REQUIRE(rep.weighted_moment.size() == 2);
    CHECK(rep.min_growth_factor >= 2.0);
    CHECK(rep.max_tilted_variation < 0.2);
    CHECK(rep.survival_fraction > 0.0);
    CHECK(rep.pass);
}

TEST_CASE("norm window validation names the violated constraint") {
    GeneratorSpec gen = GeneratorSpec::affine_scalar(-0.2, 0.0, 0.0, "g");
    gen.moment_q = 4.0;  // mu = 0.2, rho = 0.5, q = 4
    CHECK_NOTHROW(validate_norm_window(gen, 0.3, 2.0));
    CHECK_THROWS_AS(validate_norm_window(gen, -0.5, 2.0), ConfigError);  // eta < -mu
    CHECK_THROWS_AS(validate_norm_window(gen, 0.6, 2.0), ConfigError);   // eta >= rho
    CHECK_THROWS_AS(validate_norm_window(gen, 0.3, 0.5), ConfigError);   // p <= 1
    CHECK_THROWS_AS(validate_norm_window(gen, 0.3, 4.0), ConfigError);   // p >= q
}
