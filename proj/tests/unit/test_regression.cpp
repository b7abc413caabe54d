#include <doctest.h>

#include <cmath>
#include <numeric>

#include "rhbsde/regression.hpp"
#include "rhbsde/rng.hpp"

using namespace rhbsde;

namespace {

// states(p, 0, 0) = spread sample points; one step is enough for fitting.
Array3D spread_states(std::size_t n, double lo, double hi) {
    Array3D s(n, 1, 1);
    for (std::size_t p = 0; p < n; ++p)
        s(p, 0, 0) = lo + (hi - lo) * static_cast<double>(p) / static_cast<double>(n - 1);
    return s;
}

std::vector<std::uint32_t> all_rows(std::size_t n) {
    std::vector<std::uint32_t> r(n);
    std::iota(r.begin(), r.end(), 0u);
    return r;
}

}  // namespace

TEST_CASE("polynomial basis recovers a polynomial target exactly") {
    const std::size_t n = 400;
    const Array3D states = spread_states(n, -2.0, 2.0);
    std::vector<double> target(n);
    for (std::size_t p = 0; p < n; ++p) {
        const double x = states(p, 0, 0);
        target[p] = 3.0 + 2.0 * x - x * x;
    }
    const RegressionBasis basis =
        RegressionBasis::polynomial(2, Vec::Constant(1, -2.0), Vec::Constant(1, 2.0));
    Regressor reg(basis, 1);
    FitReport rep;
    const Eigen::VectorXd c = reg.fit(states, 0, all_rows(n), target, &rep);
    CHECK(rep.rank == reg.basis_size());
    CHECK(rep.n_samples == n);
    for (double x : {-1.7, -0.3, 0.0, 0.9, 1.99}) {
        CHECK(reg.eval(c, &x) == doctest::Approx(3.0 + 2.0 * x - x * x).epsilon(1e-9));
    }
}

TEST_CASE("degenerate sample at a point start falls back to the sample mean") {
    const std::size_t n = 50;
    Array3D states(n, 1, 1);
    for (std::size_t p = 0; p < n; ++p) states(p, 0, 0) = 0.5;  // all paths share x0
    std::vector<double> target(n);
    for (std::size_t p = 0; p < n; ++p) target[p] = static_cast<double>(p % 5);
    const RegressionBasis basis =
        RegressionBasis::polynomial(3, Vec::Constant(1, -1.0), Vec::Constant(1, 1.0));
    Regressor reg(basis, 1);
    FitReport rep;
    const Eigen::VectorXd c = reg.fit(states, 0, all_rows(n), target, &rep);
    CHECK(rep.rank < reg.basis_size());  // Gram matrix is rank one
    const double x = 0.5;
    const double mean = 2.0;  // (0+1+2+3+4)/5
    CHECK(reg.eval(c, &x) == doctest::Approx(mean).epsilon(1e-9));
    CHECK(std::isfinite(c.norm()));
}

TEST_CASE("multi-target fit matches per-target fits") {
    const std::size_t n = 300;
    const Array3D states = spread_states(n, 0.0, 1.0);
    std::vector<double> t0(n), t1(n);
    std::vector<double> flat(2 * n);
    for (std::size_t p = 0; p < n; ++p) {
        const double x = states(p, 0, 0);
        t0[p] = 1.0 + x;
        t1[p] = x * x;
        flat[2 * p] = t0[p];
        flat[2 * p + 1] = t1[p];
    }
    const RegressionBasis basis =
        RegressionBasis::polynomial(2, Vec::Constant(1, 0.0), Vec::Constant(1, 1.0));
    Regressor reg(basis, 1);
    const Eigen::VectorXd c0 = reg.fit(states, 0, all_rows(n), t0);
    const Eigen::VectorXd c1 = reg.fit(states, 0, all_rows(n), t1);
    const std::vector<const double*> targets = {flat.data(), flat.data() + 1};
    const Eigen::MatrixXd multi = reg.fit_multi(states, 0, all_rows(n), targets, 2);
    CHECK((multi.col(0) - c0).norm() < 1e-10);
    CHECK((multi.col(1) - c1).norm() < 1e-10);
}

TEST_CASE("piecewise linear basis reproduces kinked targets") {
    const std::size_t n = 2000;
    const Array3D states = spread_states(n, -1.0, 1.0);
    std::vector<double> target(n);
    for (std::size_t p = 0; p < n; ++p) target[p] = std::max(0.0, states(p, 0, 0));
    const RegressionBasis basis = RegressionBasis::piecewise_linear(8, -1.0, 1.0);
    Regressor reg(basis, 1);
    const Eigen::VectorXd c = reg.fit(states, 0, all_rows(n), target);
    for (double x : {-0.75, -0.5, 0.5, 0.75}) {
        // Node-aligned points of a piecewise-linear target are exact.
        CHECK(reg.eval(c, &x) == doctest::Approx(std::max(0.0, x)).epsilon(1e-6));
    }
}

TEST_CASE("indicator basis recovers bin means") {
    const std::size_t n = 1000;
    const Array3D states = spread_states(n, 0.0, 1.0);
    std::vector<double> target(n);
    for (std::size_t p = 0; p < n; ++p) target[p] = states(p, 0, 0) < 0.5 ? 1.0 : 5.0;
    const RegressionBasis basis = RegressionBasis::indicator_bins(2, 0.0, 1.0);
    Regressor reg(basis, 1);
    const Eigen::VectorXd c = reg.fit(states, 0, all_rows(n), target);
    double xl = 0.25, xr = 0.75;
    CHECK(reg.eval(c, &xl) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(reg.eval(c, &xr) == doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("row subsets restrict the sample") {
    const std::size_t n = 100;
    const Array3D states = spread_states(n, 0.0, 1.0);
    std::vector<double> target(n, 7.0);
    for (std::size_t p = 50; p < n; ++p) target[p] = -100.0;  // excluded rows
    std::vector<std::uint32_t> rows(50);
    std::iota(rows.begin(), rows.end(), 0u);
    const RegressionBasis basis =
        RegressionBasis::polynomial(0, Vec::Constant(1, 0.0), Vec::Constant(1, 1.0));
    Regressor reg(basis, 1);
    const Eigen::VectorXd c = reg.fit(states, 0, rows, target);
    double x = 0.1;
    CHECK(reg.eval(c, &x) == doctest::Approx(7.0).epsilon(1e-12));
}
