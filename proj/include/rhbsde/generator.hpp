#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>

#include "rhbsde/sde_paths.hpp"

namespace rhbsde {

// Driver F(t, x, y, z, sigma) of a backward equation, together with the
// structural constants the estimates depend on:
//   lipschitz_L: |F(y1,z1) - F(y2,z2)| <= L (|y1-y2| + |sigma^T (z1-z2)|)
//   monotone_mu: (y1-y2)(F(y1,.) - F(y2,.)) <= -mu |y1-y2|^2  (mu may be < 0)
//   weight_rho:  exponential weight used for the data norm; needs rho > -mu
//   moment_q:    data moment exponent; needs q > 1
struct GeneratorSpec {
    std::function<double(double t, const Vec& x, double y, const Vec& z, const Mat& sigma)> F;
    double lipschitz_L = 0.0;
    double monotone_mu = 0.0;
    double weight_rho = 0.0;
    double moment_q = 2.0;
    std::string name;

    double f0(double t, const Vec& x, const Mat& sigma) const {
        return F(t, x, 0.0, Vec::Zero(x.size()), sigma);
    }

    // Affine driver a*y + b.(sigma^T z) + c; the workhorse of the test
    // configurations.  b has the state dimension.
    static GeneratorSpec affine(double a, const Vec& b, double c, const std::string& label = "");
    static GeneratorSpec affine_scalar(double a, double b, double c,
                                       const std::string& label = "");

    void validate_window() const;
};

// Samples random (y, z) probe pairs along bundle states and verifies the
// declared Lipschitz and monotonicity constants; throws on violation.
void validate_generator(const GeneratorSpec& gen, const PathBundle& bundle,
                        std::size_t n_probes, std::uint64_t seed);

// Terminal payoff evaluated on the stopped path.
struct TerminalSpec {
    std::function<double(const StoppedPathView&)> xi;
    std::string name;
    // Set by state_functional: exposes the underlying g so Markov-only
    // consumers (node-grid dynamic programs) can reject path payoffs.
    std::function<double(const Vec&)> state_fn;

    static TerminalSpec constant(double c);
    static TerminalSpec state_functional(std::function<double(const Vec&)> g,
                                         const std::string& label = "");
    // |X_{t0 ^ tau}| style payoffs need the whole stopped path.
    static TerminalSpec path_functional(std::function<double(const StoppedPathView&)> f,
                                        const std::string& label = "");
};

// Lower barrier S(t, x).  unconstrained() is the "no obstacle" sentinel
// (conceptually S = -infinity); solvers skip the reflection entirely.
struct ObstacleSpec {
    bool constrained = false;
    std::function<double(double t, const Vec& x)> S;
    std::string name;
    // Declared weighted-norm window (rho, q) under which the sampled
    // positive-part norm of S must stay finite.
    bool has_certificate = false;
    double plus_rho = 0.0;
    double plus_q = 2.0;

    static ObstacleSpec unconstrained();
    static ObstacleSpec of(std::function<double(double, const Vec&)> s,
                           const std::string& label = "");

    double value(double t, const Vec& x) const {
        return constrained ? S(t, x) : -std::numeric_limits<double>::infinity();
    }
};

// Admissibility window for norm parameters relative to a generator:
// eta in [-mu, rho), p in (1, q).  Throws ConfigError naming the violated
// constraint.
void validate_norm_window(const GeneratorSpec& gen, double eta, double p);

}  // namespace rhbsde
