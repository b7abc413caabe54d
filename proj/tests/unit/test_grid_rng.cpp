#include <doctest.h>

#include <cmath>
#include <set>

#include "rhbsde/errors.hpp"
#include "rhbsde/rng.hpp"
#include "rhbsde/time_grid.hpp"

using namespace rhbsde;

TEST_CASE("time grid indexing") {
    TimeGrid g(0.25, 8);
    CHECK(g.horizon_cap() == doctest::Approx(2.0));
    CHECK(g.t(0) == 0.0);
    CHECK(g.t(3) == doctest::Approx(0.75));
    CHECK(g.index_of(0.0) == 0);
    CHECK(g.index_of(0.75) == 3);
    CHECK(g.index_of(2.0) == 8);
    CHECK_THROWS_AS(g.index_of(2.26), ConfigError);
    CHECK_THROWS_AS(TimeGrid(0.0, 4), ConfigError);
    CHECK_THROWS_AS(TimeGrid(0.1, 0), ConfigError);
}

TEST_CASE("counter rng is a pure function of seed and indices") {
    CounterRng a(42), b(42), c(43);
    CHECK(a.normal(3, 7, 0) == b.normal(3, 7, 0));
    CHECK(a.uniform(3, 7, 0) == b.uniform(3, 7, 0));
    CHECK(a.normal(3, 7, 0) != c.normal(3, 7, 0));
    // Distinct triples give distinct draws.
    std::set<double> vals;
    for (int p = 0; p < 10; ++p)
        for (int k = 0; k < 10; ++k)
            for (int comp = 0; comp < 2; ++comp) vals.insert(a.normal(p, k, comp));
    CHECK(vals.size() == 200);
}

TEST_CASE("derived streams differ from the root stream") {
    const std::uint64_t root = 7;
    const std::uint64_t s0 = CounterRng::derive(root, 0);
    const std::uint64_t s1 = CounterRng::derive(root, 1);
    CHECK(s0 != s1);
    CHECK(s0 != root);
    CHECK(CounterRng(s0).normal(0, 0, 0) != CounterRng(s1).normal(0, 0, 0));
    CHECK(CounterRng::derive(root, 0) == s0);  // derivation is deterministic
}

TEST_CASE("normal draws have the right first two moments") {
    CounterRng rng(123);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal(i, 0, 0);
        sum += z;
        sq += z * z;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("uniform draws live in (0, 1]") {
    CounterRng rng(5);
    double lo = 1.0, hi = 0.0, sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform(i, 1, 0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        sum += u;
    }
    CHECK(lo > 0.0);
    CHECK(hi <= 1.0);
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}
