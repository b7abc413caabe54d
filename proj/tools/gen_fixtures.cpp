// Regenerates tests/fixtures/oracle_refs.json from the deterministic
// reference solvers.  Run manually when an oracle changes on purpose:
//   rhbsde_gen_fixtures <output-path>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "rhbsde/io.hpp"
#include "rhbsde/pde_oracles.hpp"

using namespace rhbsde;

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: rhbsde_gen_fixtures <output-json>\n";
        return 2;
    }

    Json out;

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
        out["heat_quadratic"] = solve_parabolic(prob).at(0.0);
    }

    {
        ParabolicProblem prob;
        prob.xa = -1.0;
        prob.xb = 1.0;
        prob.nx = 100;
        prob.T = 1.0;
        prob.nt = 200;
        prob.sigma = [](double, double) { return 1.0; };
        prob.f = [](double, double, double v, double) { return -0.5 * v; };
        prob.terminal = [](double) { return 1.0; };
        out["discounting"] = solve_parabolic(prob).at(0.0);
    }

    {
        EllipticProblem prob;  // -0.5 v'' = 1 on (0,1), v(0)=v(1)=0
        prob.sigma = [](double) { return 1.0; };
        prob.f = [](double, double, double) { return 1.0; };
        out["elliptic_exit"] = solve_elliptic_exit(prob).at(0.5);
    }

    {
        SupHeatProblem prob;
        prob.sigma_menu = {1.0, 2.0};
        prob.terminal = [](double x) { return x * x; };
        out["g_heat_convex"] = solve_g_heat(prob).at(0.0);
        prob.terminal = [](double x) { return -x * x; };
        out["g_heat_concave"] = solve_g_heat(prob).at(0.0);
    }

    {
        BinomialAmericanSpec spec;  // additive ATM put, 1000 steps
        out["binomial_put_mu0"] = binomial_american(spec);
        spec.discount_mu = 0.1;
        out["binomial_put_mu01"] = binomial_american(spec);
    }

    out["closed_form_half"] = linear_bsde_closed_form(0.5, 1.0, 1.0);

    std::ofstream os(argv[1]);
    if (!os) {
        std::cerr << "cannot open " << argv[1] << "\n";
        return 2;
    }
    os << out.dump(2) << "\n";
    std::cout << out.dump(2) << "\n";
    return 0;
}
