#include <doctest.h>

#include <cmath>

#include "rhbsde/errors.hpp"
#include "rhbsde/girsanov.hpp"
#include "rhbsde/norms.hpp"

using namespace rhbsde;

namespace {
PathBundle bm(std::size_t n_paths = 20000, std::uint64_t seed = 11) {
    return simulate_paths(VolatilitySpec::scalar_constant(1.0, 0.0),
                          StoppingRule::deterministic(1.0), TimeGrid(1.0 / 32, 32), n_paths,
                          seed);
}
}  // namespace

TEST_CASE("girsanov densities start at one and have unit mean") {
    const PathBundle b = bm();
    const DensityProcess d =
        girsanov_density(b, LambdaPolicy::constant(Vec::Constant(1, 0.7), "lam"), 1.0);
    double sum = 0.0, sq = 0.0;
    for (std::size_t p = 0; p < b.n_paths; ++p) {
        CHECK(d.D(p, 0) == 1.0);
        const double v = d.D(p, b.grid.n_steps);
        sum += v;
        sq += v * v;
    }
    const double np = static_cast<double>(b.n_paths);
    const double mean = sum / np;
    const double se = std::sqrt((sq / np - mean * mean) / np);
    CHECK(std::abs(mean - 1.0) <= 4.0 * se);
}

TEST_CASE("tilting shifts the brownian mean by lambda t") {
    const PathBundle b = bm();
    const double lam = 0.5;
    const DensityProcess d =
        girsanov_density(b, LambdaPolicy::constant(Vec::Constant(1, lam), "lam"), 1.0);
    const std::size_t n = b.grid.n_steps;
    double sum = 0.0, sq = 0.0;
    for (std::size_t p = 0; p < b.n_paths; ++p) {
        const double v = d.D(p, n) * b.W(p, n, 0);
        sum += v;
        sq += v * v;
    }
    const double np = static_cast<double>(b.n_paths);
    const double mean = sum / np;
    const double se = std::sqrt((sq / np - mean * mean) / np);
    CHECK(std::abs(mean - lam * 1.0) <= 4.0 * se);  // E^lam[W_1] = lam
}

TEST_CASE("densities freeze after the stop") {
    const TimeGrid grid(1.0 / 32, 64);
    const PathBundle b =
        simulate_paths(VolatilitySpec::scalar_constant(1.0, 0.5),
                       StoppingRule::exit_of_box(Vec::Constant(1, 0.0), Vec::Constant(1, 1.0)),
                       grid, 2000, 5);
    const DensityProcess d =
        girsanov_density(b, LambdaPolicy::constant(Vec::Constant(1, 0.8), "lam"), 1.0);
    for (std::size_t p = 0; p < b.n_paths; ++p)
        for (std::size_t k = b.stop_index[p]; k <= grid.n_steps; ++k)
            CHECK(d.D(p, k) == d.D(p, b.stop_index[p]));
}

TEST_CASE("dominated expectation is monotone in the control set") {
    const PathBundle b = bm(8000);
    std::vector<double> payoff(b.n_paths);
    for (std::size_t p = 0; p < b.n_paths; ++p) payoff[p] = b.X(p, b.grid.n_steps, 0);
    const DriftControlSet small(1.0, {LambdaPolicy::constant(Vec::Constant(1, 0.5), "up")}, 1);
    const DriftControlSet big(1.0,
                              {LambdaPolicy::constant(Vec::Constant(1, 0.5), "up"),
                               LambdaPolicy::constant(Vec::Constant(1, 1.0), "upper")},
                              1);
    const DominatedExpectation es = dominated_expectation(b, payoff, small);
    const DominatedExpectation eb = dominated_expectation(b, payoff, big);
    CHECK(eb.value >= es.value - 1e-12);           // sup over a superset dominates
    CHECK(es.value >= 0.0 - 4.0 * es.std_error);   // zero tilt is always included
    CHECK(es.per_control.size() == small.size());
    CHECK(eb.argmax_name == "upper");              // strongest up-tilt wins a linear payoff
}

TEST_CASE("family expectation picks the diffusive member for convex payoffs") {
    FamilySimConfig sim;
    sim.grid = TimeGrid(1.0 / 16, 16);
    sim.rule = StoppingRule::deterministic(1.0);
    sim.n_paths = 8000;
    sim.seed = 17;
    const std::vector<VolatilitySpec> fam = {VolatilitySpec::scalar_constant(1.0, 0.0, "low"),
                                             VolatilitySpec::scalar_constant(2.0, 0.0, "high")};
    const auto payoff = [](const StoppedPathView& v) {
        const double x = v.state_at_stop()[0];
        return x * x;
    };
    const FamilyExpectation fe = family_expectation(fam, payoff, DriftControlSet(), sim);
    CHECK(fe.argmax_member_name == "high");
    CHECK(fe.value == doctest::Approx(4.0).epsilon(0.1));  // E[(2 W_1)^2] = 4
    CHECK(fe.per_member[0] == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("weighted mean and standard error") {
    double m = 0.0, se = 0.0;
    weighted_mean_se({1.0, 3.0}, {1.0, 1.0}, m, se);
    CHECK(m == doctest::Approx(2.0));
    CHECK(se == doctest::Approx(std::sqrt(0.5)));  // population sd 1 over sqrt(2)
}

TEST_CASE("weighted sup norm is homogeneous and weight-monotone") {
    const PathBundle b = bm(2000);
    const std::size_t n = b.grid.n_steps;
    Array2D y(b.n_paths, n + 1), y2(b.n_paths, n + 1);
    for (std::size_t p = 0; p < b.n_paths; ++p)
        for (std::size_t k = 0; k <= n; ++k) {
            y(p, k) = b.X(p, k, 0);
            y2(p, k) = 2.0 * b.X(p, k, 0);
        }
    const NormReport n1 = norm_D(b, y, NormParams{2.0, 0.0});
    const NormReport n2 = norm_D(b, y2, NormParams{2.0, 0.0});
    const NormReport nw = norm_D(b, y, NormParams{2.0, 1.0});
    CHECK(n2.value == doctest::Approx(2.0 * n1.value).epsilon(1e-10));
    CHECK(nw.value >= n1.value);  // e^{alpha t} >= 1 on [0, 1]
    CHECK(n1.value > 0.0);
}

TEST_CASE("integral norm of Z scales with sigma") {
    const PathBundle b = bm(500);
    const std::size_t n = b.grid.n_steps;
    Array3D z(b.n_paths, n, 1);
    for (std::size_t p = 0; p < b.n_paths; ++p)
        for (std::size_t k = 0; k < n; ++k) z(p, k, 0) = 1.0;
    const NormReport nz = norm_H(b, z, NormParams{2.0, 0.0});
    // |sigma^T z|^2 h summed over 32 steps of h = 1/32 -> 1, then sqrt.
    CHECK(nz.value == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("compensator norm rejects decreasing increments") {
    const PathBundle b = bm(50);
    Array2D dk(b.n_paths, b.grid.n_steps);
    for (std::size_t p = 0; p < b.n_paths; ++p)
        for (std::size_t k = 0; k < b.grid.n_steps; ++k) dk(p, k) = 0.01;
    CHECK(norm_K(b, dk, NormParams{2.0, 0.0}).value == doctest::Approx(0.32).epsilon(1e-9));
    dk(3, 5) = -1.0;
    CHECK_THROWS_AS(norm_K(b, dk, NormParams{2.0, 0.0}), SolverError);
}

TEST_CASE("maximal inequality holds for stopped brownian motion") {
    const TimeGrid grid(1.0 / 32, 128);
    const PathBundle b =
        simulate_paths(VolatilitySpec::scalar_constant(1.0, 0.0),
                       StoppingRule::exit_of_box(Vec::Constant(1, -2.0), Vec::Constant(1, 2.0)),
                       grid, 8000, 23);
    Array2D m(b.n_paths, grid.n_steps + 1);
    for (std::size_t p = 0; p < b.n_paths; ++p)
        for (std::size_t k = 0; k <= grid.n_steps; ++k) m(p, k) = b.X(p, k, 0);
    const DoobReport rep = doob_check(b, m, 2.0, 4.0, nullptr);
    CHECK(rep.pass);
    CHECK(rep.lhs <= rep.rhs + rep.slack);
    CHECK_THROWS_AS(doob_check(b, m, 4.0, 2.0, nullptr), ConfigError);  // needs p < q
}
