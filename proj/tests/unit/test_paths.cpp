#include <doctest.h>

#include <cmath>

#include "rhbsde/errors.hpp"
#include "rhbsde/sde_paths.hpp"

using namespace rhbsde;

namespace {
PathBundle unit_bm(std::size_t n_paths = 20000, std::size_t n_steps = 32,
                   std::uint64_t seed = 42) {
    return simulate_paths(VolatilitySpec::scalar_constant(1.0, 0.0),
                          StoppingRule::deterministic(1.0), TimeGrid(1.0 / n_steps, n_steps),
                          n_paths, seed);
}
}  // namespace

TEST_CASE("simulated paths start at x0 with zero brownian motion") {
    const PathBundle b = unit_bm(500);
    for (std::size_t p = 0; p < b.n_paths; ++p) {
        CHECK(b.X(p, 0, 0) == 0.0);
        CHECK(b.W(p, 0, 0) == 0.0);
        CHECK(b.stop_index[p] == b.grid.n_steps);  // deterministic horizon
        CHECK(b.capped[p] == 0);  // the rule fires exactly at the cap
    }
}

TEST_CASE("driftless paths are martingales and accumulate the right variance") {
    const PathBundle b = unit_bm();
    const std::size_t n = b.grid.n_steps;
    double sum = 0.0, sq = 0.0, qv = 0.0;
    for (std::size_t p = 0; p < b.n_paths; ++p) {
        const double xT = b.X(p, n, 0);
        sum += xT;
        sq += xT * xT;
        for (std::size_t k = 0; k < n; ++k) {
            const double dx = b.X(p, k + 1, 0) - b.X(p, k, 0);
            qv += dx * dx;
        }
    }
    const double np = static_cast<double>(b.n_paths);
    const double mean = sum / np;
    const double var = sq / np - mean * mean;
    const double se = std::sqrt(var / np);
    CHECK(std::abs(mean) <= 4.0 * se);                       // martingale at the horizon
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));        // Var X_1 = 1
    CHECK(qv / np == doctest::Approx(1.0).epsilon(0.05));    // realized QV = sigma^2 T
}

TEST_CASE("reproducibility: same seed, same bundle") {
    const PathBundle a = unit_bm(300, 16, 9);
    const PathBundle b = unit_bm(300, 16, 9);
    const PathBundle c = unit_bm(300, 16, 10);
    bool equal = true, differs = false;
    for (std::size_t p = 0; p < a.n_paths && equal; ++p)
        for (std::size_t k = 0; k <= 16; ++k) {
            if (a.X(p, k, 0) != b.X(p, k, 0)) equal = false;
            if (a.X(p, k, 0) != c.X(p, k, 0)) differs = true;
        }
    CHECK(equal);
    CHECK(differs);
}

TEST_CASE("exit rule freezes paths outside the box") {
    const TimeGrid grid(1.0 / 64, 128);  // cap 2
    const PathBundle b =
        simulate_paths(VolatilitySpec::scalar_constant(1.0, 0.5),
                       StoppingRule::exit_of_box(Vec::Constant(1, 0.0), Vec::Constant(1, 1.0)),
                       grid, 8000, 3);
    double mean_stop = 0.0;
    for (std::size_t p = 0; p < b.n_paths; ++p) {
        const std::size_t s = b.stop_index[p];
        CHECK(s <= grid.n_steps);
        const double xs = b.X(p, s, 0);
        if (!b.capped[p]) {
            // The first observed exit state is on or outside the boundary.
            CHECK((xs <= 0.0 || xs >= 1.0));
        }
        for (std::size_t k = s; k <= grid.n_steps; ++k) {
            CHECK(b.X(p, k, 0) == xs);           // frozen state
            CHECK(b.W(p, k, 0) == b.W(p, s, 0));  // frozen noise
        }
        mean_stop += b.stop_time(p);
    }
    mean_stop /= static_cast<double>(b.n_paths);
    // E[tau] = x(1-x) = 0.25; discrete monitoring adds a positive O(sqrt(h)) bias.
    CHECK(mean_stop == doctest::Approx(0.25).epsilon(0.2));
}

TEST_CASE("hitting rule and min-of composition") {
    const TimeGrid grid(1.0 / 32, 64);
    const StoppingRule hit = StoppingRule::hitting_level(0, 0.5);
    const StoppingRule both =
        StoppingRule::min_of({StoppingRule::hitting_level(0, 0.5),
                              StoppingRule::deterministic(1.0)});
    const PathBundle a = simulate_paths(VolatilitySpec::scalar_constant(1.0, 0.0), hit, grid,
                                        2000, 8);
    const PathBundle c = simulate_paths(VolatilitySpec::scalar_constant(1.0, 0.0), both, grid,
                                        2000, 8);
    for (std::size_t p = 0; p < a.n_paths; ++p) {
        CHECK(c.stop_index[p] <= a.stop_index[p]);
        CHECK(c.stop_index[p] <= grid.index_of(1.0));
        if (!a.capped[p]) CHECK(a.X(p, a.stop_index[p], 0) >= 0.5);
    }
}

TEST_CASE("truncating the horizon re-freezes the bundle") {
    const TimeGrid grid(1.0 / 16, 64);  // cap 4
    const PathBundle b =
        simulate_paths(VolatilitySpec::scalar_constant(1.0, 0.5),
                       StoppingRule::exit_of_box(Vec::Constant(1, 0.0), Vec::Constant(1, 1.0)),
                       grid, 3000, 21);
    const PathBundle t = truncate_horizon(b, 1.0);
    const std::size_t k1 = grid.index_of(1.0);
    for (std::size_t p = 0; p < b.n_paths; ++p) {
        CHECK(t.stop_index[p] == std::min<std::size_t>(b.stop_index[p], k1));
        const double xs = t.X(p, t.stop_index[p], 0);
        for (std::size_t k = t.stop_index[p]; k <= grid.n_steps; ++k)
            CHECK(t.X(p, k, 0) == xs);
    }
}

TEST_CASE("matrix volatility drives a 2d state with 1d noise") {
    Mat s(2, 1);
    s << 1.0, 0.5;
    const PathBundle b = simulate_paths(VolatilitySpec::matrix_constant(s, Vec::Zero(2), "two"),
                                        StoppingRule::deterministic(1.0), TimeGrid(0.125, 8),
                                        200, 4);
    CHECK(b.d == 2);
    CHECK(b.m == 1);
    for (std::size_t p = 0; p < b.n_paths; ++p)
        for (std::size_t k = 0; k <= 8; ++k)
            CHECK(b.X(p, k, 1) == doctest::Approx(0.5 * b.X(p, k, 0)).epsilon(1e-12));
}

TEST_CASE("quadratic variation density inverts sigma sigma^T") {
    Mat s(2, 2);
    s << 1.0, 0.2, 0.0, 0.8;
    const PathBundle b = simulate_paths(VolatilitySpec::matrix_constant(s, Vec::Zero(2), "m"),
                                        StoppingRule::deterministic(1.0), TimeGrid(0.25, 4),
                                        50, 1);
    const QvDensity qv = quadratic_variation_density(b);
    const Mat a = qv.a_at(0, 0);
    const Mat ainv = qv.pinv_at(0, 0);
    CHECK((a - s * s.transpose()).norm() < 1e-12);
    CHECK((a * ainv - Mat::Identity(2, 2)).norm() < 1e-10);
}

TEST_CASE("spectral pseudo-inverse zeroes the null space") {
    Mat a(2, 2);
    a << 1.0, 0.0, 0.0, 0.0;
    const Mat p = spectral_pinv(a, 0.0);
    CHECK(p(0, 0) == doctest::Approx(1.0));
    CHECK(p(1, 1) == doctest::Approx(0.0));
    CHECK(p(0, 1) == doctest::Approx(0.0));
}
