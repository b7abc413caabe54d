#include <doctest.h>

#include <cmath>
#include <fstream>

#include "rhbsde/io.hpp"
#include "rhbsde/pde_oracles.hpp"

using namespace rhbsde;

TEST_CASE("crank-nicolson heat solve is exact on a quadratic") {
    ParabolicProblem prob;
    prob.xa = -2.0;
    prob.xb = 2.0;
    prob.nx = 200;
    prob.T = 1.0;
    prob.nt = 100;
    prob.sigma = [](double, double) { return 1.0; };
    prob.f = [](double, double, double, double) { return 0.0; };
    prob.terminal = [](double x) { return x * x; };
    prob.dirichlet = true;
    // Exact solution v(t, x) = x^2 + (1 - t) supplies the boundary data.
    prob.left_bc = [](double t) { return 4.0 + (1.0 - t); };
    prob.right_bc = [](double t) { return 4.0 + (1.0 - t); };
    const ParabolicSolution sol = solve_parabolic(prob);
    CHECK(sol.at(0.0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(sol.at(0.5) == doctest::Approx(1.25).epsilon(1e-9));
}

TEST_CASE("parabolic discounting converges at second order in time") {
    ParabolicProblem prob;
    prob.nx = 100;
    prob.nt = 200;
    prob.sigma = [](double, double) { return 1.0; };
    prob.f = [](double, double, double v, double) { return -0.5 * v; };
    prob.terminal = [](double) { return 1.0; };
    const ParabolicSolution sol = solve_parabolic(prob);
    CHECK(sol.at(0.0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-5));
}

TEST_CASE("unit running cost on the unit interval integrates to x(1-x)") {
    EllipticProblem prob;
    prob.sigma = [](double) { return 1.0; };
    prob.f = [](double, double, double) { return 1.0; };
    const EllipticSolution sol = solve_elliptic_exit(prob);
    CHECK(sol.residual <= 1e-10);
    CHECK(sol.at(0.5) == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(sol.at(0.25) == doctest::Approx(0.1875).epsilon(1e-9));
}

TEST_CASE("damped newton handles a nonlinear exit problem") {
    EllipticProblem prob;
    prob.sigma = [](double) { return 1.0; };
    prob.f = [](double, double v, double) { return 1.0 - 0.5 * v * v; };
    const EllipticSolution sol = solve_elliptic_exit(prob);
    CHECK(sol.residual <= 1e-10);
    CHECK(sol.newton_iters >= 2);
    // The nonlinearity only damps the source, so 0 < v < x(1-x).
    CHECK(sol.at(0.5) > 0.0);
    CHECK(sol.at(0.5) < 0.25);
}

TEST_CASE("sup-of-diffusions scheme reduces to the heat equation on a singleton") {
    SupHeatProblem prob;
    prob.sigma_menu = {1.0};
    prob.terminal = [](double x) { return x * x; };
    const SupHeatSolution sol = solve_g_heat(prob);
    CHECK(sol.nt_used > 0);
    CHECK(sol.at(0.0) == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("sup-of-diffusions picks the extreme members on convex and concave data") {
    SupHeatProblem prob;
    prob.sigma_menu = {1.0, 2.0};
    prob.terminal = [](double x) { return x * x; };
    CHECK(solve_g_heat(prob).at(0.0) == doctest::Approx(4.0).epsilon(0.01));
    prob.terminal = [](double x) { return -x * x; };
    CHECK(solve_g_heat(prob).at(0.0) == doctest::Approx(-1.0).epsilon(0.01));
}

TEST_CASE("additive binomial put matches the gaussian limit without discounting") {
    BinomialAmericanSpec spec;
    // Undiscounted american = european on a martingale lattice; the
    // continuous at-the-money value is vol * sqrt(T) * phi(0).
    const double limit = 0.2 * std::sqrt(1.0 / (2.0 * M_PI));
    CHECK(binomial_american(spec) == doctest::Approx(limit).epsilon(0.01));
}

TEST_CASE("discounting makes early exercise strict") {
    BinomialAmericanSpec spec;
    const double european_side = binomial_american(spec);
    spec.discount_mu = 0.1;
    const double discounted = binomial_american(spec);
    // Discounting lowers continuation values, so the american value drops
    // but stays above the fully discounted european bound.
    CHECK(discounted < european_side);
    CHECK(discounted > std::exp(-0.1) * european_side - 1e-12);
}

TEST_CASE("closed form discounting") {
    CHECK(linear_bsde_closed_form(0.5, 1.0, 1.0) == doctest::Approx(std::exp(-0.5)));
    CHECK(linear_bsde_closed_form(0.0, 3.0, 2.5) == 2.5);
}

TEST_CASE("oracle outputs match the frozen fixture") {
    std::ifstream is(std::string(RHBSDE_FIXTURE_DIR) + "/oracle_refs.json");
    REQUIRE(is.good());
    Json ref = Json::parse(is);

    const auto close = [&](const char* key, double value) {
        REQUIRE(ref.contains(key));
        CHECK(value == doctest::Approx(ref[key].get<double>()).epsilon(1e-9));
    };

    {
        ParabolicProblem prob;
        prob.xa = -2.0;
        prob.xb = 2.0;
        prob.nx = 200;
        prob.T = 1.0;
        prob.nt = 100;
        prob.sigma = [](double, double) { return 1.0; };
        prob.f = [](double, double, double, double) { return 0.0; };
        prob.terminal = [](double x) { return x * x; };
        prob.dirichlet = true;
        prob.left_bc = [](double t) { return 4.0 + (1.0 - t); };
        prob.right_bc = [](double t) { return 4.0 + (1.0 - t); };
        close("heat_quadratic", solve_parabolic(prob).at(0.0));
    }
    {
        EllipticProblem prob;
        prob.sigma = [](double) { return 1.0; };
        prob.f = [](double, double, double) { return 1.0; };
        close("elliptic_exit", solve_elliptic_exit(prob).at(0.5));
    }
    {
        BinomialAmericanSpec spec;
        close("binomial_put_mu0", binomial_american(spec));
        spec.discount_mu = 0.1;
        close("binomial_put_mu01", binomial_american(spec));
    }
    close("closed_form_half", linear_bsde_closed_form(0.5, 1.0, 1.0));
}
