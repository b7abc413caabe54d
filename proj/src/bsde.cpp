#include "rhbsde/bsde.hpp"

#include <algorithm>
#include <cmath>

#include "rhbsde/errors.hpp"
#include "rhbsde/girsanov.hpp"
#include "rhbsde/norms.hpp"
#include "rhbsde/parallel.hpp"

namespace rhbsde {

namespace {

// Per-step lists of paths still alive (stop_index > k) on the window.
// Deterministic horizons share one full list to avoid n_steps copies.
struct AliveIndex {
    std::vector<std::uint32_t> all;
    std::vector<std::vector<std::uint32_t>> per_step;  // empty when shared
    bool shared = false;
    std::size_t k_lo = 0;

    const std::vector<std::uint32_t>& at(std::size_t k) const {
        return shared ? all : per_step[k - k_lo];
    }
};

AliveIndex build_alive(const PathBundle& b, std::size_t k_lo, std::size_t k_hi) {
    AliveIndex idx;
    idx.k_lo = k_lo;
    bool all_at_cap = true;
    for (std::size_t p = 0; p < b.n_paths; ++p) {
        if (b.stop_index[p] < b.grid.n_steps) {
            all_at_cap = false;
            break;
        }
    }
    if (all_at_cap) {
        idx.shared = true;
        idx.all.resize(b.n_paths);
        for (std::size_t p = 0; p < b.n_paths; ++p) idx.all[p] = static_cast<std::uint32_t>(p);
        return idx;
    }
    idx.per_step.resize(k_hi - k_lo);
    for (std::size_t k = k_lo; k < k_hi; ++k) {
        auto& v = idx.per_step[k - k_lo];
        for (std::size_t p = 0; p < b.n_paths; ++p) {
            if (b.stop_index[p] > k) v.push_back(static_cast<std::uint32_t>(p));
        }
    }
    return idx;
}

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

double BackwardSolution::eval_Y(const Regressor& reg, std::size_t k, const Vec& x) const {
    return reg.eval(coeffs_Y.at(k), x.data());
}

// Shared Z read-off over a window; optionally exports per-step coefficients
// of the pre-adjustment regression for surface evaluation.
Array3D estimate_z_window(const PathBundle& bundle, const QvDensity& qv, const Array2D& Y,
                          const RegressionBasis& basis, ZMode z_mode, std::size_t k_lo,
                          std::size_t k_hi, RegressionReport* report,
                          std::vector<Eigen::MatrixXd>* coeffs_out) {
    const std::size_t n = bundle.grid.n_steps;
    Array3D Z(bundle.n_paths, n, bundle.d);
    Regressor reg(basis, bundle.d);
    AliveIndex alive = build_alive(bundle, k_lo, k_hi);
    const double h = bundle.grid.step_h;
    double max_cond = 1.0;
    int min_rank = reg.basis_size();
    if (coeffs_out) coeffs_out->assign(n, Eigen::MatrixXd());

    Array3D target(bundle.n_paths, 1, std::max(bundle.d, bundle.m));
    for (std::size_t k = k_lo; k < k_hi; ++k) {
        const auto& rows = alive.at(k);
        if (rows.empty()) continue;
        const int tdim = z_mode == ZMode::CovariationX ? bundle.d : bundle.m;
        parallel_blocks(rows.size(), [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                const std::uint32_t p = rows[i];
                if (z_mode == ZMode::CovariationX) {
                    const double dy = Y(p, k + 1) - Y(p, k);
                    for (int c = 0; c < bundle.d; ++c) {
                        target(p, 0, c) = dy * (bundle.X(p, k + 1, c) - bundle.X(p, k, c)) / h;
                    }
                } else {
                    for (int c = 0; c < bundle.m; ++c) {
                        target(p, 0, c) = Y(p, k + 1) * (bundle.W(p, k + 1, c) - bundle.W(p, k, c)) / h;
                    }
                }
            }
        });
        std::vector<const double*> tptr(tdim);
        for (int c = 0; c < tdim; ++c) tptr[c] = target.data.data() + c;
        FitReport fr;
        const Eigen::MatrixXd coef =
            reg.fit_multi(bundle.X, k, rows, tptr, target.depth, &fr);
        max_cond = std::max(max_cond, fr.cond);
        min_rank = std::min(min_rank, fr.rank);
        if (coeffs_out) (*coeffs_out)[k] = coef;
        parallel_blocks(rows.size(), [&](std::size_t lo, std::size_t hi) {
            Eigen::VectorXd phi(reg.basis_size());
            Vec fitted(tdim), z(bundle.d);
            for (std::size_t i = lo; i < hi; ++i) {
                const std::uint32_t p = rows[i];
                reg.basis().eval(bundle.X.at(p, k), bundle.d, phi.data());
                fitted = coef.transpose() * phi;
                if (z_mode == ZMode::CovariationX) {
                    z = qv.pinv_at(p, k) * fitted;
                } else {
                    z = qv.pinv_at(p, k) * (Mat(bundle.sigma.at(p, k)) * fitted);
                }
                for (int c = 0; c < bundle.d; ++c) Z(p, k, c) = z[c];
            }
        });
    }
    if (report) {
        report->basis_kind = "z";
        report->basis_size = reg.basis_size();
        report->max_cond = max_cond;
        report->min_rank = min_rank;
        report->z_mode = z_mode == ZMode::CovariationX ? "covariation_x" : "brownian_w";
    }
    return Z;
}

Array3D estimate_z(const PathBundle& bundle, const QvDensity& qv, const Array2D& Y,
                   const RegressionBasis& basis, ZMode z_mode, RegressionReport* report) {
    return estimate_z_window(bundle, qv, Y, basis, z_mode, 0, bundle.grid.n_steps, report,
                             nullptr);
}

BackwardSolution solve_bsde_window(const PathBundle& bundle, const QvDensity& qv,
                                   const GeneratorSpec& gen,
                                   const std::vector<double>& terminal_values,
                                   const RegressionBasis& basis, const PicardOptions& picard,
                                   ZMode z_mode, SolveWindow window) {
    const std::size_t n = bundle.grid.n_steps;
    const std::size_t k_hi = window.k_hi == 0 ? n : window.k_hi;
    const std::size_t k_lo = window.k_lo;
    if (k_hi > n || k_lo >= k_hi) throw ConfigError("solve window out of range");
    if (terminal_values.size() != bundle.n_paths) {
        throw ConfigError("solve_bsde: terminal value count mismatch");
    }
    gen.validate_window();

    const double h = bundle.grid.step_h;
    const Regressor reg(basis, bundle.d);
    const AliveIndex alive = build_alive(bundle, k_lo, k_hi);

    BackwardSolution sol;
    sol.Y = Array2D(bundle.n_paths, n + 1);
    sol.Z = Array3D(bundle.n_paths, n, bundle.d);
    sol.coeffs_Y.assign(n, Eigen::VectorXd());
    sol.coeffs_Z.assign(n, Eigen::MatrixXd());
    sol.alive_at_cap = bundle.alive_at_cap_fraction();

    // Pin terminal data: Y at and past min(stop, k_hi) carries the
    // terminal value (the solution is flat after the stop).
    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            const std::size_t kterm = std::min<std::size_t>(bundle.stop_index[p], k_hi);
            for (std::size_t k = kterm; k <= n; ++k) sol.Y(p, k) = terminal_values[p];
        }
    });

    Array2D Y_prev = sol.Y;  // previous sweep (zero on the active region)
    Array3D Z_prev(bundle.n_paths, n, bundle.d);
    std::vector<double> target(bundle.n_paths, 0.0);
    double max_cond = 1.0;
    int min_rank = reg.basis_size();

    double prev_dist = -1.0;
    int stall_count = 0;
    bool converged = false;
    int sweep = 0;
    for (; sweep < picard.max_iters; ++sweep) {
        // ---- Y sweep ----
        for (std::size_t k = k_hi; k-- > k_lo;) {
            const auto& rows = alive.at(k);
            if (rows.empty()) {
                sol.coeffs_Y[k] = Eigen::VectorXd::Zero(reg.basis_size());
                continue;
            }
            parallel_blocks(rows.size(), [&](std::size_t lo, std::size_t hi) {
                Vec x(bundle.d), z(bundle.d);
                for (std::size_t i = lo; i < hi; ++i) {
                    const std::uint32_t p = rows[i];
                    double t = sol.Y(p, k + 1);
                    if (!picard.implicit_y) {
                        for (int c = 0; c < bundle.d; ++c) {
                            x[c] = bundle.X(p, k, c);
                            z[c] = Z_prev(p, k, c);
                        }
                        t += h * gen.F(bundle.grid.t(k), x, Y_prev(p, k), z,
                                       Mat(bundle.sigma.at(p, k)));
                    }
                    target[p] = t;
                }
            });
            FitReport fr;
            sol.coeffs_Y[k] = reg.fit(bundle.X, k, rows, target, &fr);
            max_cond = std::max(max_cond, fr.cond);
            min_rank = std::min(min_rank, fr.rank);
            parallel_blocks(rows.size(), [&](std::size_t lo, std::size_t hi) {
                Eigen::VectorXd phi(reg.basis_size());
                Vec x(bundle.d), z(bundle.d);
                for (std::size_t i = lo; i < hi; ++i) {
                    const std::uint32_t p = rows[i];
                    reg.basis().eval(bundle.X.at(p, k), bundle.d, phi.data());
                    double y = phi.dot(sol.coeffs_Y[k]);
                    if (picard.implicit_y) {
                        // y = cont + h F(t, x, y, z_prev): damped Newton with
                        // a finite-difference slope.
                        const double cont = y;
                        for (int c = 0; c < bundle.d; ++c) {
                            x[c] = bundle.X(p, k, c);
                            z[c] = Z_prev(p, k, c);
                        }
                        const Mat sig = Mat(bundle.sigma.at(p, k));
                        const double tk = bundle.grid.t(k);
                        for (int it = 0; it < picard.newton_max; ++it) {
                            const double g = y - cont - h * gen.F(tk, x, y, z, sig);
                            if (std::abs(g) <= picard.newton_tol * (1.0 + std::abs(y))) break;
                            const double eps = 1e-7 * (1.0 + std::abs(y));
                            const double gp =
                                (y + eps - cont - h * gen.F(tk, x, y + eps, z, sig) - g) / eps;
                            y -= g / (std::abs(gp) > 1e-12 ? gp : 1.0);
                        }
                    }
                    sol.Y(p, k) = y;
                }
            });
        }

        // ---- convergence on the active region ----
        const std::size_t n_blocks = (bundle.n_paths + kBlockSize - 1) / kBlockSize;
        std::vector<double> dmax(n_blocks, 0.0), ymax(n_blocks, 0.0);
        parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
            const std::size_t blk = lo / kBlockSize;
            double dm = 0.0, ym = 0.0;
            for (std::size_t p = lo; p < hi; ++p) {
                const std::size_t kterm = std::min<std::size_t>(bundle.stop_index[p], k_hi);
                for (std::size_t k = k_lo; k < kterm; ++k) {
                    dm = std::max(dm, std::abs(sol.Y(p, k) - Y_prev(p, k)));
                    ym = std::max(ym, std::abs(sol.Y(p, k)));
                }
            }
            dmax[blk] = dm;
            ymax[blk] = ym;
        });
        double dist = 0.0, ysup = 0.0;
        for (std::size_t b = 0; b < n_blocks; ++b) {
            dist = std::max(dist, dmax[b]);
            ysup = std::max(ysup, ymax[b]);
        }
        sol.sweep_distances.push_back(dist);

        if (dist <= picard.tol * (1.0 + ysup)) {
            converged = true;
            ++sweep;
            break;
        }

        // ---- Z sweep feeding the next Picard iterate ----
        if (gen.lipschitz_L > 0.0) {
            RegressionReport zrep;
            Z_prev = estimate_z_window(bundle, qv, sol.Y, basis, z_mode, k_lo, k_hi, &zrep,
                                       nullptr);
            max_cond = std::max(max_cond, zrep.max_cond);
            min_rank = std::min(min_rank, zrep.min_rank);
        }
        Y_prev = sol.Y;
        if (prev_dist > 0.0 && dist >= prev_dist) {
            if (++stall_count >= 3) {
                throw SolverError("solve_bsde: Picard loop diverging; last distances " +
                                  std::to_string(prev_dist) + ", " + std::to_string(dist));
            }
        } else {
            stall_count = 0;
        }
        prev_dist = dist;
    }
    if (!converged) {
        const std::size_t nd = sol.sweep_distances.size();
        throw SolverError(
            "solve_bsde: Picard loop failed to converge; last distances " +
            (nd >= 2 ? std::to_string(sol.sweep_distances[nd - 2]) + ", " : std::string()) +
            std::to_string(sol.sweep_distances[nd - 1]));
    }
    sol.picard_iters = sweep;

    // Final Z read-off, capturing coefficients for surface evaluation.
    {
        RegressionReport zrep;
        sol.Z = estimate_z_window(bundle, qv, sol.Y, basis, z_mode, k_lo, k_hi, &zrep,
                                  &sol.coeffs_Z);
        max_cond = std::max(max_cond, zrep.max_cond);
        min_rank = std::min(min_rank, zrep.min_rank);
        sol.regression.z_mode = zrep.z_mode;
    }

    // Orthogonal residual increments: realized step mismatch against the
    // modeled dynamics; conditionally centered by construction.
    sol.N_inc = Array2D(bundle.n_paths, n);
    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        Vec x(bundle.d), z(bundle.d);
        for (std::size_t p = lo; p < hi; ++p) {
            const std::size_t kterm = std::min<std::size_t>(bundle.stop_index[p], k_hi);
            for (std::size_t k = k_lo; k < kterm; ++k) {
                for (int c = 0; c < bundle.d; ++c) {
                    x[c] = bundle.X(p, k, c);
                    z[c] = sol.Z(p, k, c);
                }
                double zdx = 0.0;
                for (int c = 0; c < bundle.d; ++c) {
                    zdx += sol.Z(p, k, c) * (bundle.X(p, k + 1, c) - bundle.X(p, k, c));
                }
                sol.N_inc(p, k) =
                    sol.Y(p, k + 1) - sol.Y(p, k) +
                    h * gen.F(bundle.grid.t(k), x, sol.Y(p, k), z, Mat(bundle.sigma.at(p, k))) -
                    zdx;
            }
        }
    });

    sol.regression.basis_kind =
        basis.kind == RegressionBasis::Kind::Polynomial
            ? "polynomial"
            : (basis.kind == RegressionBasis::Kind::PiecewiseLinear ? "piecewise_linear"
                                                                    : "indicator_bins");
    sol.regression.basis_size = reg.basis_size();
    sol.regression.max_cond = max_cond;
    sol.regression.min_rank = min_rank;

    // Value and error proxy at the window start: the mean of Y there plus
    // the Monte-Carlo standard error of the terminal-plus-driver estimator.
    {
        std::vector<double> y0(bundle.n_paths), carried(bundle.n_paths);
        parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
            Vec x(bundle.d), z(bundle.d);
            for (std::size_t p = lo; p < hi; ++p) {
                y0[p] = sol.Y(p, k_lo);
                const std::size_t kterm = std::min<std::size_t>(bundle.stop_index[p], k_hi);
                double acc = terminal_values[p];
                for (std::size_t k = k_lo; k < kterm; ++k) {
                    for (int c = 0; c < bundle.d; ++c) {
                        x[c] = bundle.X(p, k, c);
                        z[c] = sol.Z(p, k, c);
                    }
                    acc += h * gen.F(bundle.grid.t(k), x, sol.Y(p, k), z,
                                     Mat(bundle.sigma.at(p, k)));
                }
                carried[p] = acc;
            }
        });
        double m = 0.0, se = 0.0;
        weighted_mean_se(y0, {}, m, se);
        sol.y0_mean = m;
        weighted_mean_se(carried, {}, m, se);
        sol.y0_se = se;
    }
    return sol;
}

BackwardSolution solve_bsde(const PathBundle& bundle, const QvDensity& qv,
                            const GeneratorSpec& gen, const TerminalSpec& term,
                            const RegressionBasis& basis, const PicardOptions& picard,
                            ZMode z_mode) {
    std::vector<double> tv(bundle.n_paths);
    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) tv[p] = term.xi(StoppedPathView{&bundle, p});
    });
    return solve_bsde_window(bundle, qv, gen, tv, basis, picard, z_mode, SolveWindow{});
}

namespace {

// Homothety used by the scaling check: 2*F(t, x, y/2, z/2, s) doubles the
// driver-at-zero while keeping the Lipschitz and monotonicity constants.
GeneratorSpec doubled(const GeneratorSpec& gen) {
    GeneratorSpec g = gen;
    auto base = gen.F;
    g.F = [base](double t, const Vec& x, double y, const Vec& z, const Mat& s) {
        return 2.0 * base(t, x, 0.5 * y, Vec(0.5 * z), s);
    };
    g.name = gen.name + "_x2";
    return g;
}

// sup-over-tilts data norms of the right-hand side of the a-priori bound.
double data_norm_rhs(const PathBundle& bundle, const GeneratorSpec& gen,
                     const std::vector<double>& xi, double p,
                     const std::vector<DensityProcess>& densities) {
    const double rho = gen.weight_rho;
    const double q = gen.moment_q;
    const double h = bundle.grid.step_h;
    std::vector<double> xi_q(bundle.n_paths), f_q(bundle.n_paths);
    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        Vec x(bundle.d);
        for (std::size_t pp = lo; pp < hi; ++pp) {
            const double tau = bundle.stop_time(pp);
            xi_q[pp] = std::pow(std::abs(std::exp(rho * tau) * xi[pp]), q);
            double acc = 0.0;
            for (std::size_t k = 0; k < bundle.stop_index[pp]; ++k) {
                for (int c = 0; c < bundle.d; ++c) x[c] = bundle.X(pp, k, c);
                const double f0 =
                    gen.f0(bundle.grid.t(k), x, Mat(bundle.sigma.at(pp, k)));
                const double w = std::exp(rho * bundle.grid.t(k));
                acc += w * w * f0 * f0 * h;
            }
            f_q[pp] = std::pow(acc, 0.5 * q);
        }
    });
    const auto exi = dominated_expectation(bundle, xi_q, densities);
    const auto ef = dominated_expectation(bundle, f_q, densities);
    const double xi_norm_p = std::pow(std::max(exi.value, 0.0), p / q);
    const double f_norm_p = std::pow(std::max(ef.value, 0.0), p / q);
    return xi_norm_p + f_norm_p;
}

double solution_norm_lhs(const PathBundle& bundle, const BackwardSolution& sol, double eta,
                         double p, const std::vector<DensityProcess>& densities) {
    const NormParams np{p, eta};
    const NormReport d = norm_D(bundle, sol.Y, np, &densities);
    const NormReport hn = norm_H(bundle, sol.Z, np, &densities);
    return d.mean_power + hn.mean_power;
}

}  // namespace

AprioriReport apriori_check(const PathBundle& bundle, const QvDensity& qv,
                            const GeneratorSpec& gen, const TerminalSpec& term,
                            const RegressionBasis& basis, double eta, double p,
                            const DriftControlSet& controls, const PicardOptions& picard) {
    validate_norm_window(gen, eta, p);
    const auto densities = density_family(bundle, controls);

    std::vector<double> xi(bundle.n_paths);
    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t pp = lo; pp < hi; ++pp) xi[pp] = term.xi(StoppedPathView{&bundle, pp});
    });

    AprioriReport rep;
    rep.eta = eta;
    rep.p = p;

    const BackwardSolution sol = solve_bsde(bundle, qv, gen, term, basis, picard);
    rep.lhs = solution_norm_lhs(bundle, sol, eta, p, densities);
    rep.rhs = data_norm_rhs(bundle, gen, xi, p, densities);
    rep.ratio = rep.rhs > 0.0 ? rep.lhs / rep.rhs : (rep.lhs > 0.0 ? 1e300 : 0.0);

    // Doubled data: xi' = 2 xi, driver-at-zero doubled via the homothety.
    const GeneratorSpec gen2 = doubled(gen);
    TerminalSpec term2;
    auto base_xi = term.xi;
    term2.xi = [base_xi](const StoppedPathView& v) { return 2.0 * base_xi(v); };
    term2.name = term.name + "_x2";
    std::vector<double> xi2(bundle.n_paths);
    for (std::size_t pp = 0; pp < bundle.n_paths; ++pp) xi2[pp] = 2.0 * xi[pp];
    const BackwardSolution sol2 = solve_bsde(bundle, qv, gen2, term2, basis, picard);
    const double lhs2 = solution_norm_lhs(bundle, sol2, eta, p, densities);
    const double rhs2 = data_norm_rhs(bundle, gen2, xi2, p, densities);
    rep.ratio_doubled = rhs2 > 0.0 ? lhs2 / rhs2 : (lhs2 > 0.0 ? 1e300 : 0.0);

    const double lo = std::min(rep.ratio, rep.ratio_doubled);
    const double hi = std::max(rep.ratio, rep.ratio_doubled);
    rep.pass = hi < 1e300 && (lo <= 0.0 ? hi <= 0.0 : hi / std::max(lo, 1e-300) <= 2.0);
    return rep;
}

ComparisonReport comparison_check(const PathBundle& bundle, const QvDensity& qv,
                                  const GeneratorSpec& gen, const TerminalSpec& term,
                                  const GeneratorSpec& gen_prime, const TerminalSpec& term_prime,
                                  const RegressionBasis& basis, const PicardOptions& picard) {
    const BackwardSolution a = solve_bsde(bundle, qv, gen, term, basis, picard);
    const BackwardSolution b = solve_bsde(bundle, qv, gen_prime, term_prime, basis, picard);

    double viol = 0.0, sup = 1.0;
    for (std::size_t p = 0; p < bundle.n_paths; ++p) {
        for (std::size_t k = 0; k <= bundle.stop_index[p]; ++k) {
            viol = std::max(viol, a.Y(p, k) - b.Y(p, k));
            sup = std::max({sup, std::abs(a.Y(p, k)), std::abs(b.Y(p, k))});
        }
    }
    ComparisonReport rep;
    rep.max_violation = std::max(viol, 0.0);
    const double L = std::max(gen.lipschitz_L, gen_prime.lipschitz_L);
    const double se = std::sqrt(a.y0_se * a.y0_se + b.y0_se * b.y0_se);
    rep.slack = 3.0 * se + 2.0 * bundle.grid.step_h * L * sup;
    rep.y0 = a.y0_mean;
    rep.y0_prime = b.y0_mean;
    rep.pass = rep.max_violation <= rep.slack;
    return rep;
}

StabilityReport stability_check(const PathBundle& bundle, const QvDensity& qv,
                                const GeneratorSpec& gen, const TerminalSpec& term,
                                const GeneratorSpec& gen_prime, const TerminalSpec& term_prime,
                                const RegressionBasis& basis, double eta, double p,
                                const DriftControlSet& controls,
                                std::optional<double> horizon_prime,
                                const PicardOptions& picard) {
    validate_norm_window(gen, eta, p);
    const auto densities = density_family(bundle, controls);
    const double pprime = 0.5 * (p + gen.moment_q);  // p < p' < q

    const BackwardSolution a = solve_bsde(bundle, qv, gen, term, basis, picard);

    PathBundle truncated;
    const PathBundle* bprime = &bundle;
    QvDensity qv_prime = qv;
    if (horizon_prime) {
        truncated = truncate_horizon(bundle, *horizon_prime);
        qv_prime = quadratic_variation_density(truncated);
        bprime = &truncated;
    }
    const BackwardSolution b = solve_bsde(*bprime, qv_prime, gen_prime, term_prime, basis, picard);

    // Both solutions extend flat past their own stop, so the difference is
    // well-defined on the full grid; measure it in the weighted path norm.
    Array2D dY(bundle.n_paths, bundle.grid.n_steps + 1);
    for (std::size_t pp = 0; pp < bundle.n_paths; ++pp) {
        for (std::size_t k = 0; k <= bundle.grid.n_steps; ++k) {
            dY(pp, k) = a.Y(pp, k) - b.Y(pp, k);
        }
    }
    const NormReport dnorm = norm_D(bundle, dY, NormParams{p, eta}, &densities);

    // Data distance: terminal mismatch across the two horizons plus the
    // driver mismatch integrated along the first solution.
    const double h = bundle.grid.step_h;
    std::vector<double> term_mm(bundle.n_paths), drv_mm(bundle.n_paths);
    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        Vec x(bundle.d), z(bundle.d);
        for (std::size_t pp = lo; pp < hi; ++pp) {
            const double tau = bundle.stop_time(pp);
            const double tau_p = bprime->stop_time(pp);
            const double xi_a = term.xi(StoppedPathView{&bundle, pp});
            const double xi_b = term_prime.xi(StoppedPathView{bprime, pp});
            term_mm[pp] = std::pow(
                std::abs(std::exp(eta * tau) * xi_a - std::exp(eta * tau_p) * xi_b), pprime);
            double acc = 0.0;
            const std::size_t kmax =
                std::max<std::size_t>(bundle.stop_index[pp], bprime->stop_index[pp]);
            for (std::size_t k = 0; k < kmax; ++k) {
                for (int c = 0; c < bundle.d; ++c) {
                    x[c] = bundle.X(pp, k, c);
                    z[c] = a.Z(pp, k, c);
                }
                const Mat sig = Mat(bundle.sigma.at(pp, k));
                const double t = bundle.grid.t(k);
                const double fa =
                    k < bundle.stop_index[pp] ? gen.F(t, x, a.Y(pp, k), z, sig) : 0.0;
                const double fb =
                    k < bprime->stop_index[pp] ? gen_prime.F(t, x, a.Y(pp, k), z, sig) : 0.0;
                acc += std::exp(eta * t) * std::abs(fa - fb) * h;
            }
            drv_mm[pp] = std::pow(acc, pprime);
        }
    });
    const auto e_term = dominated_expectation(bundle, term_mm, densities);
    const auto e_drv = dominated_expectation(bundle, drv_mm, densities);

    StabilityReport rep;
    rep.eta = eta;
    rep.p = p;
    rep.lhs = dnorm.mean_power;  // ||dY||^p
    rep.terminal_mismatch = std::pow(std::max(e_term.value, 0.0), p / pprime);
    rep.rhs = rep.terminal_mismatch + std::pow(std::max(e_drv.value, 0.0), p / pprime);
    rep.ratio = rep.rhs > 0.0 ? rep.lhs / rep.rhs : (rep.lhs > 0.0 ? 1e300 : 0.0);
    return rep;
}

DivergenceReport example_divergence(double L, const std::vector<double>& n_list,
                                    const TimeGrid& grid, std::size_t n_paths,
                                    std::uint64_t seed) {
    if (n_list.size() < 2) throw ConfigError("example_divergence: need at least two horizons");
    const VolatilitySpec vol = VolatilitySpec::scalar_constant(1.0);
    const StoppingRule rule = StoppingRule::hitting_level(0, 1.0);
    const PathBundle b = simulate_paths(vol, rule, grid, n_paths, seed);

    // Payoff |X_{1 ^ tau}|: frozen paths make the read-off exact.
    const std::size_t k1 = b.grid.index_of(std::min(1.0, b.grid.horizon_cap()));
    std::vector<double> xi2(b.n_paths);
    for (std::size_t p = 0; p < b.n_paths; ++p) {
        const double v = b.X(p, k1, 0);
        xi2[p] = v * v;
    }

    std::vector<LambdaPolicy> tilts;
    for (const double frac : {-1.0, -0.5, 0.5, 1.0}) {
        tilts.push_back(LambdaPolicy::constant(Vec::Constant(1, frac * L),
                                               "tilt" + std::to_string(frac * L)));
    }
    const DriftControlSet controls(L, tilts, b.m);
    const auto densities = density_family(b, controls);

    DivergenceReport rep;
    rep.survival_fraction = b.alive_at_cap_fraction();
    rep.n_values = n_list;
    double prev_wm = 0.0;
    rep.min_growth_factor = 1e300;
    for (const double nv : n_list) {
        const std::size_t kn = b.grid.index_of(std::min(nv, b.grid.horizon_cap()));
        std::vector<double> wm(b.n_paths);
        for (std::size_t p = 0; p < b.n_paths; ++p) {
            const double tau_n = std::min<double>(b.stop_time(p), nv);
            wm[p] = std::exp(2.0 * L * L * tau_n) * xi2[p];
        }
        double m = 0.0, se = 0.0;
        weighted_mean_se(wm, {}, m, se);
        rep.weighted_moment.push_back(m);
        if (rep.weighted_moment.size() > 1) {
            rep.min_growth_factor = std::min(rep.min_growth_factor, m / std::max(prev_wm, 1e-300));
        }
        prev_wm = m;

        // Tilted norm of the same payoff with densities stopped at tau ^ n.
        double best = 0.0;
        bool first = true;
        for (const auto& dens : densities) {
            double acc_mean = 0.0, acc_se = 0.0;
            std::vector<double> v(b.n_paths);
            for (std::size_t p = 0; p < b.n_paths; ++p) {
                const std::size_t kstop = std::min<std::size_t>(b.stop_index[p], kn);
                v[p] = dens.D(p, kstop) * xi2[p];
            }
            weighted_mean_se(v, {}, acc_mean, acc_se);
            if (first || acc_mean > best) best = acc_mean;
            first = false;
        }
        rep.tilted_norm_sq.push_back(best);
    }
    double tmin = 1e300, tmax = 0.0;
    for (const double v : rep.tilted_norm_sq) {
        tmin = std::min(tmin, v);
        tmax = std::max(tmax, v);
    }
    rep.max_tilted_variation = tmax > 0.0 ? (tmax - tmin) / tmax : 0.0;
    rep.pass = rep.min_growth_factor >= 2.0 && rep.max_tilted_variation < 0.20;
    return rep;
}

TanakaReport tanaka_check(const PathBundle& bundle, int component, double slack) {
    TanakaReport rep;
    std::size_t violators = 0;
    double max_viol = 0.0, gap_sum = 0.0;
    for (std::size_t p = 0; p < bundle.n_paths; ++p) {
        const double x0 = bundle.X(p, 0, component);
        double acc = 0.0;
        bool violated = false;
        const std::size_t stop = bundle.stop_index[p];
        for (std::size_t k = 0; k < stop; ++k) {
            acc += sgn(bundle.X(p, k, component)) *
                   (bundle.X(p, k + 1, component) - bundle.X(p, k, component));
            const double lhs = std::abs(bundle.X(p, k + 1, component)) - std::abs(x0);
            const double gap = lhs - acc;
            if (gap < -slack - 1e-12) {
                violated = true;
                max_viol = std::max(max_viol, -gap - slack);
            }
            if (k + 1 == stop) gap_sum += gap;
        }
        if (violated) ++violators;
    }
    rep.violation_fraction =
        bundle.n_paths ? static_cast<double>(violators) / bundle.n_paths : 0.0;
    rep.max_violation = max_viol;
    rep.mean_final_gap = bundle.n_paths ? gap_sum / bundle.n_paths : 0.0;
    rep.pass = violators == 0;
    return rep;
}

}  // namespace rhbsde
