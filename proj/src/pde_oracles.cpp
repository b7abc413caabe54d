#include "rhbsde/pde_oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rhbsde/errors.hpp"

namespace rhbsde {

namespace {

// Thomas solve of a tridiagonal system; a = sub, b = diag, c = super.
void tridiag_solve(std::vector<double> a, std::vector<double> b, std::vector<double> c,
                   std::vector<double> r, std::vector<double>& out) {
    const std::size_t n = b.size();
    for (std::size_t i = 1; i < n; ++i) {
        const double m = a[i] / b[i - 1];
        b[i] -= m * c[i - 1];
        r[i] -= m * r[i - 1];
    }
    out.resize(n);
    out[n - 1] = r[n - 1] / b[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) {
        out[i] = (r[i] - c[i] * out[i + 1]) / b[i];
    }
}

double interp(const std::vector<double>& x, const std::vector<double>& v, double xq) {
    if (xq <= x.front()) return v.front();
    if (xq >= x.back()) return v.back();
    const auto it = std::upper_bound(x.begin(), x.end(), xq);
    const std::size_t i = static_cast<std::size_t>(it - x.begin()) - 1;
    const double w = (xq - x[i]) / (x[i + 1] - x[i]);
    return (1.0 - w) * v[i] + w * v[i + 1];
}

}  // namespace

double ParabolicSolution::at(double xq) const { return interp(x, v0, xq); }
double EllipticSolution::at(double xq) const { return interp(x, v, xq); }
double SupHeatSolution::at(double xq) const { return interp(x, v0, xq); }

ParabolicSolution solve_parabolic(const ParabolicProblem& prob) {
    if (prob.nx < 4 || prob.nt < 1) throw ConfigError("solve_parabolic: grid too small");
    if (prob.dirichlet && (!prob.left_bc || !prob.right_bc)) {
        throw ConfigError("solve_parabolic: missing Dirichlet data");
    }
    const int nx = prob.nx;
    const double dx = (prob.xb - prob.xa) / nx;
    const double dt = prob.T / prob.nt;

    std::vector<double> x(nx + 1);
    for (int i = 0; i <= nx; ++i) x[i] = prob.xa + i * dx;

    std::vector<double> v(nx + 1), vn(nx + 1), vtrial(nx + 1);
    for (int i = 0; i <= nx; ++i) v[i] = prob.terminal(x[i]);

    // diffusion(u, i, t): the 0.5 sigma^2 D2 term; edge rows carry zero
    // curvature under the extrapolation boundary.
    auto diffusion = [&](const std::vector<double>& u, int i, double t) {
        if (!prob.dirichlet && (i == 1 || i == nx - 1)) return 0.0;
        const double s = prob.sigma(t, x[i]);
        return 0.5 * s * s * (u[i - 1] - 2.0 * u[i] + u[i + 1]) / (dx * dx);
    };
    auto source = [&](const std::vector<double>& u, int i, double t) {
        const double vx = (u[i + 1] - u[i - 1]) / (2.0 * dx);
        return prob.f(t, x[i], u[i], vx);
    };

    double residual = 0.0;
    std::vector<double> sub(nx - 1), diag(nx - 1), sup(nx - 1), rhs(nx - 1), sol;
    for (int kt = prob.nt - 1; kt >= 0; --kt) {
        const double t0 = kt * dt;
        const double t1 = (kt + 1) * dt;
        vn = v;  // Picard start: previous time level
        const double bl = prob.dirichlet ? prob.left_bc(t0) : 0.0;
        const double br = prob.dirichlet ? prob.right_bc(t0) : 0.0;
        for (int it = 0; it < 60; ++it) {
            // (I - dt/2 A0) v = v1 + dt/2 A1 v1 + dt/2 (f(v_prev) + f(v1))
            for (int i = 1; i < nx; ++i) {
                const double s0 = prob.sigma(t0, x[i]);
                double lam = 0.5 * dt * 0.5 * s0 * s0 / (dx * dx);
                if (!prob.dirichlet && (i == 1 || i == nx - 1)) lam = 0.0;
                sub[i - 1] = -lam;
                diag[i - 1] = 1.0 + 2.0 * lam;
                sup[i - 1] = -lam;
                double r = v[i] + 0.5 * dt * diffusion(v, i, t1) +
                           0.5 * dt * (source(vn, i, t0) + source(v, i, t1));
                if (i == 1) r += lam * bl;
                if (i == nx - 1) r += lam * br;
                rhs[i - 1] = r;
            }
            tridiag_solve(sub, diag, sup, rhs, sol);
            vtrial[0] = prob.dirichlet ? bl : 2.0 * sol[0] - sol[1];
            vtrial[nx] = prob.dirichlet ? br : 2.0 * sol[nx - 2] - sol[nx - 3];
            for (int i = 1; i < nx; ++i) vtrial[i] = sol[i - 1];
            double change = 0.0, scale = 1.0;
            for (int i = 0; i <= nx; ++i) {
                change = std::max(change, std::abs(vtrial[i] - vn[i]));
                scale = std::max(scale, std::abs(vtrial[i]));
            }
            vn = vtrial;
            if (change <= 1e-13 * scale) break;
        }
        // Residual of the nonlinear Crank-Nicolson equation at this level.
        for (int i = 1; i < nx; ++i) {
            const double r = (v[i] - vn[i]) / dt +
                             0.5 * (diffusion(vn, i, t0) + diffusion(v, i, t1)) +
                             0.5 * (source(vn, i, t0) + source(v, i, t1));
            residual = std::max(residual, std::abs(r));
        }
        v = vn;
    }

    ParabolicSolution out;
    out.x = std::move(x);
    out.v0 = std::move(v);
    out.residual = residual;
    return out;
}

EllipticSolution solve_elliptic_exit(const EllipticProblem& prob) {
    if (prob.nx < 4) throw ConfigError("solve_elliptic_exit: grid too small");
    const int nx = prob.nx;
    const double dx = (prob.xb - prob.xa) / nx;

    std::vector<double> x(nx + 1);
    for (int i = 0; i <= nx; ++i) x[i] = prob.xa + i * dx;

    // Unknowns are interior nodes; boundary values fixed.
    std::vector<double> v(nx + 1, 0.0);
    v[0] = prob.va;
    v[nx] = prob.vb;
    for (int i = 1; i < nx; ++i) {
        const double w = static_cast<double>(i) / nx;
        v[i] = (1.0 - w) * prob.va + w * prob.vb;
    }

    auto residual_at = [&](const std::vector<double>& u, int i) {
        const double s = prob.sigma(x[i]);
        const double vxx = (u[i - 1] - 2.0 * u[i] + u[i + 1]) / (dx * dx);
        const double vx = (u[i + 1] - u[i - 1]) / (2.0 * dx);
        return 0.5 * s * s * vxx + prob.f(x[i], u[i], vx);
    };
    auto max_residual = [&](const std::vector<double>& u) {
        double r = 0.0;
        for (int i = 1; i < nx; ++i) r = std::max(r, std::abs(residual_at(u, i)));
        return r;
    };

    EllipticSolution out;
    std::vector<double> sub(nx - 1), diag(nx - 1), sup(nx - 1), rhs(nx - 1), step;
    std::vector<double> trial(nx + 1);
    double res = max_residual(v);
    int iters = 0;
    const double fd_eps = 1e-7;
    while (res > prob.tol && iters < prob.max_newton) {
        ++iters;
        for (int i = 1; i < nx; ++i) {
            const double s = prob.sigma(x[i]);
            const double lam = 0.5 * s * s / (dx * dx);
            const double vx = (v[i + 1] - v[i - 1]) / (2.0 * dx);
            const double f0 = prob.f(x[i], v[i], vx);
            const double fv = (prob.f(x[i], v[i] + fd_eps, vx) - f0) / fd_eps;
            const double fvx = (prob.f(x[i], v[i], vx + fd_eps) - f0) / fd_eps;
            sub[i - 1] = lam - fvx / (2.0 * dx);
            diag[i - 1] = -2.0 * lam + fv;
            sup[i - 1] = lam + fvx / (2.0 * dx);
            rhs[i - 1] = -residual_at(v, i);
        }
        tridiag_solve(sub, diag, sup, rhs, step);
        // Damped update: halve until the residual decreases.
        double alpha = 1.0;
        bool accepted = false;
        for (int half = 0; half < 30; ++half) {
            trial = v;
            for (int i = 1; i < nx; ++i) trial[i] += alpha * step[i - 1];
            const double res_trial = max_residual(trial);
            if (res_trial < res) {
                v = trial;
                res = res_trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            throw SolverError("solve_elliptic_exit: Newton stalled at residual " +
                              std::to_string(res));
        }
    }
    if (res > prob.tol) {
        throw SolverError("solve_elliptic_exit: residual " + std::to_string(res) +
                          " above tolerance after " + std::to_string(iters) + " iterations");
    }
    out.x = std::move(x);
    out.v = std::move(v);
    out.residual = res;
    out.newton_iters = iters;
    return out;
}

SupHeatSolution solve_g_heat(const SupHeatProblem& prob) {
    if (prob.nx < 4) throw ConfigError("solve_g_heat: grid too small");
    if (prob.sigma_menu.empty()) throw ConfigError("solve_g_heat: empty diffusion menu");
    const int nx = prob.nx;
    const double dx = (prob.xb - prob.xa) / nx;
    double s2max = 0.0;
    for (double s : prob.sigma_menu) s2max = std::max(s2max, s * s);

    int nt = prob.nt;
    if (nt == 0) {
        nt = static_cast<int>(std::ceil(prob.T * s2max / (0.9 * dx * dx)));
        nt = std::max(nt, 1);
    }
    const double dt = prob.T / nt;
    // Monotone-scheme restriction for the explicit step.
    if (dt * s2max / (dx * dx) > 1.0 + 1e-12) {
        throw ConfigError("solve_g_heat: dt violates the monotone step restriction");
    }

    std::vector<double> x(nx + 1);
    for (int i = 0; i <= nx; ++i) x[i] = prob.xa + i * dx;
    std::vector<double> v(nx + 1), vn(nx + 1);
    for (int i = 0; i <= nx; ++i) v[i] = prob.terminal(x[i]);

    for (int kt = nt - 1; kt >= 0; --kt) {
        const double t = kt * dt;
        for (int i = 1; i < nx; ++i) {
            const double d2 = (v[i - 1] - 2.0 * v[i] + v[i + 1]) / (dx * dx);
            const double vx = (v[i + 1] - v[i - 1]) / (2.0 * dx);
            double best = -std::numeric_limits<double>::infinity();
            for (double s : prob.sigma_menu) {
                double cand = 0.5 * s * s * d2;
                if (prob.f) cand += prob.f(t, x[i], v[i], vx, s);
                best = std::max(best, cand);
            }
            vn[i] = v[i] + dt * best;
        }
        vn[0] = 2.0 * vn[1] - vn[2];
        vn[nx] = 2.0 * vn[nx - 1] - vn[nx - 2];
        v = vn;
    }

    SupHeatSolution out;
    out.x = std::move(x);
    out.v0 = std::move(v);
    out.nt_used = nt;
    return out;
}

double binomial_american(const BinomialAmericanSpec& spec) {
    if (spec.steps < 1) throw ConfigError("binomial_american: steps must be positive");
    const int n = spec.steps;
    const double dt = spec.T / n;
    const double dxs = spec.vol * std::sqrt(dt);
    const double disc = std::exp(-spec.discount_mu * dt);

    // Terminal layer: node j has value x0 + (2j - n) * dxs.
    std::vector<double> val(n + 1);
    for (int j = 0; j <= n; ++j) {
        const double xv = spec.x0 + (2.0 * j - n) * dxs;
        val[j] = std::max(spec.strike - xv, 0.0);
    }
    for (int i = n - 1; i >= 0; --i) {
        for (int j = 0; j <= i; ++j) {
            const double xv = spec.x0 + (2.0 * j - i) * dxs;
            const double cont = disc * 0.5 * (val[j] + val[j + 1]);
            val[j] = std::max(cont, std::max(spec.strike - xv, 0.0));
        }
    }
    return val[0];
}

double linear_bsde_closed_form(double mu, double T, double xi) {
    return std::exp(-mu * T) * xi;
}

}  // namespace rhbsde
