#pragma once

#include <functional>
#include <vector>

namespace rhbsde {

// Deterministic one-dimensional reference solvers.  They share no numerical
// machinery with the Monte-Carlo solvers: finite differences and trees
// only, so cross-checks between the two routes are genuinely independent.

// Terminal-value problem  v_t + 0.5 sigma(t,x)^2 v_xx + f(t, x, v, v_x) = 0
// on [0,T] x [xa, xb], v(T, .) = g.  Crank-Nicolson in time with a Picard
// loop on the nonlinearity; boundary either Dirichlet data or v_xx = 0.
struct ParabolicProblem {
    double xa = -1.0, xb = 1.0;
    int nx = 200;          // interior nodes + 1 intervals; grid has nx+1 nodes
    double T = 1.0;
    int nt = 200;
    std::function<double(double t, double x)> sigma;
    std::function<double(double t, double x, double v, double vx)> f;
    std::function<double(double x)> terminal;
    bool dirichlet = false;
    std::function<double(double t)> left_bc, right_bc;  // used when dirichlet
};

struct ParabolicSolution {
    std::vector<double> x;       // grid nodes
    std::vector<double> v0;      // v(0, .)
    double residual = 0.0;       // max discrete residual of the final sweep
    double at(double xq) const;  // linear interpolation of v0
};

ParabolicSolution solve_parabolic(const ParabolicProblem& prob);

// Stationary exit problem  -0.5 sigma(x)^2 v'' = f(x, v, v') on (xa, xb)
// with Dirichlet boundary values; damped Newton on the nonlinear FD system.
// Converges to max-norm residual <= tol (default 1e-10) or throws.
struct EllipticProblem {
    double xa = 0.0, xb = 1.0;
    int nx = 400;
    std::function<double(double x)> sigma;
    std::function<double(double x, double v, double vx)> f;
    double va = 0.0, vb = 0.0;
    double tol = 1e-10;
    int max_newton = 50;
};

struct EllipticSolution {
    std::vector<double> x;
    std::vector<double> v;
    double residual = 0.0;
    int newton_iters = 0;
    double at(double xq) const;
};

EllipticSolution solve_elliptic_exit(const EllipticProblem& prob);

// Terminal-value problem for the sup-of-diffusions operator
//   v_t + max_{s in menu} { 0.5 s^2 v_xx + f(t, x, v, vx, s) } = 0,
// explicit monotone scheme; the time step must satisfy
// dt * max(s^2) / dx^2 <= 1 (checked, throws otherwise).
struct SupHeatProblem {
    double xa = -10.0, xb = 10.0;
    int nx = 800;
    double T = 1.0;
    int nt = 0;  // 0 = choose the largest stable step count automatically
    std::vector<double> sigma_menu;
    std::function<double(double x)> terminal;
    std::function<double(double t, double x, double v, double vx, double s)> f;  // optional
};

struct SupHeatSolution {
    std::vector<double> x;
    std::vector<double> v0;
    int nt_used = 0;
    double at(double xq) const;
};

SupHeatSolution solve_g_heat(const SupHeatProblem& prob);

// American put on an additive (arithmetic) martingale lattice:
// X moves +/- vol*sqrt(dt) per step, payoff (strike - x)^+, continuation
// discounted by exp(-discount_mu * dt).
struct BinomialAmericanSpec {
    double x0 = 1.0;
    double vol = 0.2;       // additive volatility
    double strike = 1.0;
    double T = 1.0;
    double discount_mu = 0.0;
    int steps = 1000;
};

double binomial_american(const BinomialAmericanSpec& spec);

// Constant-coefficient linear backward equation with driver -mu*y and
// constant terminal value: y_0 = exp(-mu*T) * xi.
double linear_bsde_closed_form(double mu, double T, double xi);

}  // namespace rhbsde
