#include "rhbsde/rbsde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rhbsde/errors.hpp"
#include "rhbsde/norms.hpp"
#include "rhbsde/parallel.hpp"
#include "rhbsde/rng.hpp"

namespace rhbsde {

namespace {

std::vector<double> terminal_samples(const PathBundle& bundle, const TerminalSpec& term) {
    std::vector<double> xi(bundle.n_paths);
    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) xi[p] = term.xi(StoppedPathView{&bundle, p});
    });
    return xi;
}

// The barrier may not exceed the terminal value at the stop: a constraint
// that binds above its own terminal data has no minimal solution.
void check_terminal_consistency(const PathBundle& bundle, const std::vector<double>& xi,
                                const ObstacleSpec& obstacle) {
    if (!obstacle.constrained) return;
    double scale = 1.0;
    for (const double v : xi) scale = std::max(scale, std::abs(v));
    const double tol = 1e-9 * scale;
    double worst = 0.0;
    std::size_t worst_p = 0;
    Vec x(bundle.d);
    for (std::size_t p = 0; p < bundle.n_paths; ++p) {
        for (int c = 0; c < bundle.d; ++c) x[c] = bundle.X(p, bundle.stop_index[p], c);
        const double gap = obstacle.S(bundle.stop_time(p), x) - xi[p];
        if (gap > worst) {
            worst = gap;
            worst_p = p;
        }
    }
    if (worst > tol) {
        throw ConfigError("obstacle exceeds the terminal value at the stop (worst gap " +
                          std::to_string(worst) + " on path " + std::to_string(worst_p) + ")");
    }
}

// Declared finiteness certificate of the barrier's positive part under the
// weighted sup norm: evaluated on the sample, rejected if it blows up.
void check_plus_norm(const PathBundle& bundle, const ObstacleSpec& obstacle) {
    if (!obstacle.constrained || !obstacle.has_certificate) return;
    std::vector<double> sup_q(bundle.n_paths, 0.0);
    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        Vec x(bundle.d);
        for (std::size_t p = lo; p < hi; ++p) {
            double sup = 0.0;
            for (std::size_t k = 0; k <= bundle.stop_index[p]; ++k) {
                for (int c = 0; c < bundle.d; ++c) x[c] = bundle.X(p, k, c);
                const double splus =
                    std::max(obstacle.S(bundle.grid.t(k), x), 0.0) *
                    std::exp(obstacle.plus_rho * bundle.grid.t(k));
                sup = std::max(sup, splus);
            }
            sup_q[p] = std::pow(sup, obstacle.plus_q);
        }
    });
    double m = 0.0, se = 0.0;
    weighted_mean_se(sup_q, {}, m, se);
    if (!std::isfinite(m)) {
        throw ConfigError("obstacle positive-part norm certificate (rho=" +
                          std::to_string(obstacle.plus_rho) +
                          ", q=" + std::to_string(obstacle.plus_q) + ") is not finite");
    }
}

// Complementarity bookkeeping shared by both solvers: accumulate K from the
// per-step lifts, count binding steps, and sum min(1, (Y-S)^+) * lift.
void finalize_reflection(const PathBundle& bundle, const ObstacleSpec& obstacle,
                         const Array2D& dK, std::size_t k_lo, ReflectedSolution& sol) {
    const std::size_t n = bundle.grid.n_steps;
    sol.K = Array2D(bundle.n_paths, n + 1);
    sol.skorokhod_path.assign(bundle.n_paths, 0.0);
    std::vector<double> binding(bundle.n_paths, 0.0), alive(bundle.n_paths, 0.0);
    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        Vec x(bundle.d);
        for (std::size_t p = lo; p < hi; ++p) {
            double acc = 0.0, resid = 0.0, nbind = 0.0;
            sol.K(p, 0) = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double lift = dK(p, k);
                if (lift > 0.0) {
                    nbind += 1.0;
                    for (int c = 0; c < bundle.d; ++c) x[c] = bundle.X(p, k, c);
                    const double gap =
                        std::max(sol.Y(p, k) - obstacle.S(bundle.grid.t(k), x), 0.0);
                    resid += std::min(1.0, gap) * lift;
                }
                acc += lift;
                sol.K(p, k + 1) = acc;
            }
            sol.skorokhod_path[p] = resid;
            binding[p] = nbind;
            alive[p] = static_cast<double>(bundle.stop_index[p] > k_lo
                                               ? bundle.stop_index[p] - k_lo
                                               : 0);
        }
    });
    double bind_sum = 0.0, alive_sum = 0.0, resid_sum = 0.0;
    for (std::size_t p = 0; p < bundle.n_paths; ++p) {
        bind_sum += binding[p];
        alive_sum += alive[p];
        resid_sum += sol.skorokhod_path[p];
    }
    sol.binding_fraction = alive_sum > 0.0 ? bind_sum / alive_sum : 0.0;
    sol.skorokhod_residual = bundle.n_paths ? resid_sum / bundle.n_paths : 0.0;
}

ReflectedSolution wrap_unconstrained(BackwardSolution&& base, const PathBundle& bundle) {
    ReflectedSolution sol;
    static_cast<BackwardSolution&>(sol) = std::move(base);
    sol.K = Array2D(bundle.n_paths, bundle.grid.n_steps + 1);
    sol.skorokhod_path.assign(bundle.n_paths, 0.0);
    sol.skorokhod_residual = 0.0;
    sol.binding_fraction = 0.0;
    return sol;
}

double obstacle_floor(const ObstacleSpec& obstacle, double t, const Vec& x) {
    return obstacle.constrained ? obstacle.S(t, x)
                                : -std::numeric_limits<double>::infinity();
}

}  // namespace

ReflectedSolution snell_envelope(const PathBundle& bundle, double discount_mu,
                                 const TerminalSpec& term, const ObstacleSpec& obstacle,
                                 const RegressionBasis& basis, const QvDensity* qv) {
    const std::size_t n = bundle.grid.n_steps;
    const double h = bundle.grid.step_h;
    const std::vector<double> xi = terminal_samples(bundle, term);
    check_terminal_consistency(bundle, xi, obstacle);
    check_plus_norm(bundle, obstacle);

    const Regressor reg(basis, bundle.d);
    ReflectedSolution sol;
    sol.Y = Array2D(bundle.n_paths, n + 1);
    sol.coeffs_Y.assign(n, Eigen::VectorXd());
    sol.coeffs_Z.assign(n, Eigen::MatrixXd());
    sol.alive_at_cap = bundle.alive_at_cap_fraction();

    // Work on discounted values: yhat_k = e^{-mu t_k} y_k, so the driver
    // -mu*y becomes exactly zero and the dynamic program is a pure
    // max(barrier, continuation) recursion.
    Array2D yhat(bundle.n_paths, n + 1);
    Array2D dK(bundle.n_paths, n);  // undiscounted lifts
    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            const double hat = std::exp(-discount_mu * bundle.stop_time(p)) * xi[p];
            for (std::size_t k = bundle.stop_index[p]; k <= n; ++k) {
                yhat(p, k) = hat;
                sol.Y(p, k) = xi[p];
            }
        }
    });

    std::vector<double> target(bundle.n_paths, 0.0);
    double max_cond = 1.0;
    int min_rank = reg.basis_size();
    for (std::size_t k = n; k-- > 0;) {
        std::vector<std::uint32_t> rows;
        for (std::size_t p = 0; p < bundle.n_paths; ++p) {
            if (bundle.stop_index[p] > k) rows.push_back(static_cast<std::uint32_t>(p));
        }
        if (rows.empty()) {
            sol.coeffs_Y[k] = Eigen::VectorXd::Zero(reg.basis_size());
            continue;
        }
        for (const std::uint32_t p : rows) target[p] = yhat(p, k + 1);
        FitReport fr;
        sol.coeffs_Y[k] = reg.fit(bundle.X, k, rows, target, &fr);
        max_cond = std::max(max_cond, fr.cond);
        min_rank = std::min(min_rank, fr.rank);
        const double t = bundle.grid.t(k);
        const double undisc = std::exp(discount_mu * t);
        parallel_blocks(rows.size(), [&](std::size_t lo, std::size_t hi) {
            Eigen::VectorXd phi(reg.basis_size());
            Vec x(bundle.d);
            for (std::size_t i = lo; i < hi; ++i) {
                const std::uint32_t p = rows[i];
                reg.basis().eval(bundle.X.at(p, k), bundle.d, phi.data());
                const double cont = phi.dot(sol.coeffs_Y[k]);
                for (int c = 0; c < bundle.d; ++c) x[c] = bundle.X(p, k, c);
                const double floor = obstacle.constrained
                                         ? obstacle.S(t, x)
                                         : -std::numeric_limits<double>::infinity();
                const double shat = std::exp(-discount_mu * t) * floor;
                if (obstacle.constrained && shat >= cont) {
                    // Binding: pin the undiscounted value to the barrier
                    // itself so the complementarity gap Y - S is exactly
                    // zero (re-undiscounting e^{-mu t} S would leave
                    // rounding dust in the Skorokhod residual).
                    yhat(p, k) = shat;
                    sol.Y(p, k) = floor;
                    dK(p, k) = undisc * (shat - cont);
                } else {
                    yhat(p, k) = cont;
                    sol.Y(p, k) = undisc * cont;
                    dK(p, k) = 0.0;
                }
            }
        });
    }

    const QvDensity qv_local = qv ? QvDensity() : quadratic_variation_density(bundle);
    const QvDensity& qv_use = qv ? *qv : qv_local;
    RegressionReport zrep;
    sol.Z = estimate_z_window(bundle, qv_use, sol.Y, basis, ZMode::CovariationX, 0, n, &zrep,
                              &sol.coeffs_Z);
    sol.regression.basis_kind =
        basis.kind == RegressionBasis::Kind::Polynomial
            ? "polynomial"
            : (basis.kind == RegressionBasis::Kind::PiecewiseLinear ? "piecewise_linear"
                                                                    : "indicator_bins");
    sol.regression.basis_size = reg.basis_size();
    sol.regression.max_cond = std::max(max_cond, zrep.max_cond);
    sol.regression.min_rank = std::min(min_rank, zrep.min_rank);
    sol.regression.z_mode = zrep.z_mode;
    sol.picard_iters = 1;
    sol.sweep_distances = {0.0};

    finalize_reflection(bundle, obstacle, dK, 0, sol);

    // Residual increments of the discounted supermartingale decomposition.
    sol.N_inc = Array2D(bundle.n_paths, n);
    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            for (std::size_t k = 0; k < bundle.stop_index[p]; ++k) {
                double zdx = 0.0;
                for (int c = 0; c < bundle.d; ++c) {
                    zdx += sol.Z(p, k, c) * (bundle.X(p, k + 1, c) - bundle.X(p, k, c));
                }
                sol.N_inc(p, k) = sol.Y(p, k + 1) - sol.Y(p, k) -
                                  discount_mu * sol.Y(p, k) * h + dK(p, k) - zdx;
            }
        }
    });

    // Mean and error of the carried estimator xi_hat + total lift (the
    // Doob-decomposition martingale evaluated at the stop).
    {
        std::vector<double> y0(bundle.n_paths), carried(bundle.n_paths);
        for (std::size_t p = 0; p < bundle.n_paths; ++p) {
            y0[p] = sol.Y(p, 0);
            double acc = std::exp(-discount_mu * bundle.stop_time(p)) * xi[p];
            for (std::size_t k = 0; k < bundle.stop_index[p]; ++k) {
                acc += std::exp(-discount_mu * bundle.grid.t(k)) * dK(p, k);
            }
            carried[p] = acc;
        }
        double m = 0.0, se = 0.0;
        weighted_mean_se(y0, {}, m, se);
        sol.y0_mean = m;
        weighted_mean_se(carried, {}, m, se);
        sol.y0_se = se;
    }
    return sol;
}

ReflectedSolution solve_rbsde_window(const PathBundle& bundle, const QvDensity& qv,
                                     const GeneratorSpec& gen,
                                     const std::vector<double>& terminal_values,
                                     const ObstacleSpec& obstacle, const RegressionBasis& basis,
                                     const PicardOptions& picard, ZMode z_mode,
                                     SolveWindow window) {
    const std::size_t n = bundle.grid.n_steps;
    const std::size_t k_hi = window.k_hi == 0 ? n : window.k_hi;
    const std::size_t k_lo = window.k_lo;
    if (k_hi > n || k_lo >= k_hi) throw ConfigError("solve window out of range");
    if (terminal_values.size() != bundle.n_paths) {
        throw ConfigError("solve_rbsde: terminal value count mismatch");
    }
    gen.validate_window();

    if (!obstacle.constrained) {
        return wrap_unconstrained(
            solve_bsde_window(bundle, qv, gen, terminal_values, basis, picard, z_mode, window),
            bundle);
    }

    const double h = bundle.grid.step_h;
    const Regressor reg(basis, bundle.d);

    ReflectedSolution sol;
    sol.Y = Array2D(bundle.n_paths, n + 1);
    sol.coeffs_Y.assign(n, Eigen::VectorXd());
    sol.coeffs_Z.assign(n, Eigen::MatrixXd());
    sol.alive_at_cap = bundle.alive_at_cap_fraction();
    Array2D dK(bundle.n_paths, n);

    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            const std::size_t kterm = std::min<std::size_t>(bundle.stop_index[p], k_hi);
            for (std::size_t k = kterm; k <= n; ++k) sol.Y(p, k) = terminal_values[p];
        }
    });

    Array2D Y_prev = sol.Y;
    Array3D Z_prev(bundle.n_paths, n, bundle.d);
    std::vector<double> target(bundle.n_paths, 0.0);
    double max_cond = 1.0;
    int min_rank = reg.basis_size();

    double prev_dist = -1.0;
    int stall_count = 0;
    bool converged = false;
    int sweep = 0;
    for (; sweep < picard.max_iters; ++sweep) {
        for (std::size_t k = k_hi; k-- > k_lo;) {
            std::vector<std::uint32_t> rows;
            for (std::size_t p = 0; p < bundle.n_paths; ++p) {
                if (bundle.stop_index[p] > k) rows.push_back(static_cast<std::uint32_t>(p));
            }
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
                    for (int c = 0; c < bundle.d; ++c) x[c] = bundle.X(p, k, c);
                    if (picard.implicit_y) {
                        const double cont = y;
                        for (int c = 0; c < bundle.d; ++c) z[c] = Z_prev(p, k, c);
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
                    const double floor = obstacle_floor(obstacle, bundle.grid.t(k), x);
                    const double refl = std::max(floor, y);
                    sol.Y(p, k) = refl;
                    dK(p, k) = refl - y;
                }
            });
        }

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
                throw SolverError("solve_rbsde: Picard loop diverging; last distances " +
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
            "solve_rbsde: Picard loop failed to converge; last distances " +
            (nd >= 2 ? std::to_string(sol.sweep_distances[nd - 2]) + ", " : std::string()) +
            std::to_string(sol.sweep_distances[nd - 1]));
    }
    sol.picard_iters = sweep;

    {
        RegressionReport zrep;
        sol.Z = estimate_z_window(bundle, qv, sol.Y, basis, z_mode, k_lo, k_hi, &zrep,
                                  &sol.coeffs_Z);
        max_cond = std::max(max_cond, zrep.max_cond);
        min_rank = std::min(min_rank, zrep.min_rank);
        sol.regression.z_mode = zrep.z_mode;
    }

    finalize_reflection(bundle, obstacle, dK, k_lo, sol);

    // Residual increments of the reflected dynamics (lift included).
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
                    h * gen.F(bundle.grid.t(k), x, sol.Y(p, k), z, Mat(bundle.sigma.at(p, k))) +
                    dK(p, k) - zdx;
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
                                     Mat(bundle.sigma.at(p, k))) +
                           dK(p, k);
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

namespace {

// Stitch a finite-window rung to the beyond-horizon solution: the rung
// carries [k_lo=0, k_hi]; past k_hi the composite follows the discounted
// optimal-stopping solution, with K continuing from the rung's level.
void compose_rung(const PathBundle& bundle, const ReflectedSolution& tail, std::size_t k_hi,
                  ReflectedSolution& rung) {
    const std::size_t n = bundle.grid.n_steps;
    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            const std::size_t stop = bundle.stop_index[p];
            if (stop <= k_hi) continue;  // rung window already covers the path
            const double k_shift = rung.K(p, k_hi) - tail.K(p, k_hi);
            for (std::size_t k = k_hi + 1; k <= n; ++k) {
                rung.Y(p, k) = tail.Y(p, k);
                rung.K(p, k) = tail.K(p, k) + k_shift;
            }
            for (std::size_t k = k_hi; k < n; ++k) {
                for (int c = 0; c < bundle.d; ++c) rung.Z(p, k, c) = tail.Z(p, k, c);
                rung.N_inc(p, k) = tail.N_inc(p, k);
            }
            // Complementarity terms past the window are exact zeros in the
            // tail (lift > 0 forces Y = S there), so the residual carries
            // over from the window part unchanged.
        }
    });
}

}  // namespace

ReflectedSolution solve_rbsde(const PathBundle& bundle, const GeneratorSpec& gen,
                              const TerminalSpec& term, const ObstacleSpec& obstacle,
                              const RegressionBasis& basis, const PicardOptions& picard,
                              const RbsdeOptions& options, const QvDensity* qv,
                              ZMode z_mode) {
    const std::size_t n = bundle.grid.n_steps;
    const QvDensity qv_local = qv ? QvDensity() : quadratic_variation_density(bundle);
    const QvDensity& qv_use = qv ? *qv : qv_local;

    if (!obstacle.constrained) {
        // Unconstrained reduction: identical to the plain solver, K = 0.
        const std::vector<double> xi = terminal_samples(bundle, term);
        return wrap_unconstrained(solve_bsde_window(bundle, qv_use, gen, xi, basis, picard,
                                                    z_mode, SolveWindow{}),
                                  bundle);
    }

    const std::vector<double> xi = terminal_samples(bundle, term);
    check_terminal_consistency(bundle, xi, obstacle);
    check_plus_norm(bundle, obstacle);

    // Stage one: beyond any truncation time the driver is replaced by its
    // monotone envelope -mu*y, solvable exactly by discounting.
    const ReflectedSolution tail =
        snell_envelope(bundle, gen.monotone_mu, term, obstacle, basis, &qv_use);

    // Deduped ladder of window ends.
    std::vector<double> ladder = options.ladder;
    std::sort(ladder.begin(), ladder.end());
    std::vector<std::pair<double, std::size_t>> rungs;
    for (const double nv : ladder) {
        if (nv <= 0.0) throw ConfigError("truncation ladder entries must be positive");
        const std::size_t k_hi = bundle.grid.index_of(std::min(nv, bundle.grid.horizon_cap()));
        if (k_hi == 0) continue;
        if (!rungs.empty() && rungs.back().second == k_hi) continue;
        rungs.emplace_back(nv, k_hi);
    }
    if (rungs.empty()) throw ConfigError("truncation ladder is empty after dedup");

    ReflectedSolution current;
    Array2D prev_Y;  // previous rung's Y, kept for the gap norm only
    std::vector<double> distances;
    std::vector<double> rung_ns;
    std::vector<Array2D> kept;
    bool settled = false;
    for (std::size_t r = 0; r < rungs.size(); ++r) {
        const std::size_t k_hi = rungs[r].second;
        std::vector<double> tv(bundle.n_paths);
        for (std::size_t p = 0; p < bundle.n_paths; ++p) {
            tv[p] = tail.Y(p, std::min<std::size_t>(bundle.stop_index[p], k_hi));
        }
        ReflectedSolution rung = solve_rbsde_window(bundle, qv_use, gen, tv, obstacle, basis,
                                                    picard, z_mode, SolveWindow{0, k_hi});
        compose_rung(bundle, tail, k_hi, rung);
        rung_ns.push_back(rungs[r].first);
        if (options.keep_solutions) kept.push_back(rung.Y);

        bool stop_here = false;
        if (r > 0) {
            Array2D dY(bundle.n_paths, n + 1);
            for (std::size_t p = 0; p < bundle.n_paths; ++p) {
                for (std::size_t k = 0; k <= n; ++k) {
                    dY(p, k) = rung.Y(p, k) - prev_Y(p, k);
                }
            }
            const NormReport gap =
                norm_D(bundle, dY, NormParams{options.norm_p, options.norm_alpha}, nullptr);
            const NormReport size =
                norm_D(bundle, rung.Y, NormParams{options.norm_p, options.norm_alpha}, nullptr);
            distances.push_back(gap.value);
            if (gap.value <= options.tol * (1.0 + size.value)) {
                settled = true;
                if (!options.keep_solutions) stop_here = true;
            } else {
                settled = false;
            }
        }
        prev_Y = rung.Y;
        current = std::move(rung);
        if (stop_here) break;
    }
    if (rungs.size() == 1) settled = true;  // single window covers the horizon

    current.rung_n = rung_ns;
    current.rung_distance = distances;
    current.rung_Y = std::move(kept);
    current.truncation_converged = settled;
    if (!settled && options.require_convergence && !options.keep_solutions) {
        std::string seq;
        for (const double d : distances) seq += (seq.empty() ? "" : ", ") + std::to_string(d);
        throw SolverError("solve_rbsde: truncation ladder did not settle; gaps " + seq);
    }
    return current;
}

double skorokhod_residual(const ReflectedSolution& sol) {
    if (sol.skorokhod_path.empty()) return 0.0;
    double acc = 0.0;
    for (const double v : sol.skorokhod_path) acc += v;
    return acc / static_cast<double>(sol.skorokhod_path.size());
}

namespace {

// Sampled order verification used by the comparison precondition.
void require_ordered(const PathBundle& bundle, const GeneratorSpec& gen,
                     const TerminalSpec& term, const ObstacleSpec& obstacle,
                     const GeneratorSpec& gen_prime, const TerminalSpec& term_prime,
                     const ObstacleSpec& obstacle_prime) {
    const std::vector<double> xi = terminal_samples(bundle, term);
    const std::vector<double> xi2 = terminal_samples(bundle, term_prime);
    double scale = 1.0;
    for (std::size_t p = 0; p < bundle.n_paths; ++p) {
        scale = std::max({scale, std::abs(xi[p]), std::abs(xi2[p])});
    }
    const double tol = 1e-12 * scale;
    for (std::size_t p = 0; p < bundle.n_paths; ++p) {
        if (xi[p] > xi2[p] + tol) {
            throw ConfigError("comparison precondition violated: terminal order fails on path " +
                              std::to_string(p));
        }
    }
    if (obstacle.constrained != obstacle_prime.constrained) {
        if (obstacle.constrained) {
            throw ConfigError("comparison precondition violated: barrier order fails "
                              "(one-sided constraint)");
        }
    }
    CounterRng rng(CounterRng::derive(0x9e3779b97f4a7c15ULL, 7));
    Vec x(bundle.d), z(bundle.d);
    const std::size_t stride = std::max<std::size_t>(1, bundle.n_paths / 64);
    for (std::size_t p = 0; p < bundle.n_paths; p += stride) {
        const std::size_t krange = std::max<std::size_t>(bundle.stop_index[p], 1);
        for (std::size_t probe = 0; probe < 4; ++probe) {
            const std::size_t k =
                std::min<std::size_t>(static_cast<std::size_t>(
                                          rng.uniform(p, probe, 0) * krange),
                                      krange - 1);
            for (int c = 0; c < bundle.d; ++c) x[c] = bundle.X(p, k, c);
            const double t = bundle.grid.t(k);
            if (obstacle.constrained && obstacle_prime.constrained) {
                if (obstacle.S(t, x) > obstacle_prime.S(t, x) + 1e-12 * scale) {
                    throw ConfigError(
                        "comparison precondition violated: barrier order fails at sampled "
                        "state");
                }
            }
            const double y = 4.0 * (rng.uniform(p, probe, 1) - 0.5);
            for (int c = 0; c < bundle.d; ++c) {
                z[c] = 4.0 * (rng.uniform(p, probe, 2 + c) - 0.5);
            }
            const Mat sig = Mat(bundle.sigma.at(p, k));
            if (gen.F(t, x, y, z, sig) > gen_prime.F(t, x, y, z, sig) + 1e-10 * scale) {
                throw ConfigError(
                    "comparison precondition violated: driver order fails at sampled point");
            }
        }
    }
}

}  // namespace

ComparisonReport rbsde_comparison_check(const PathBundle& bundle, const GeneratorSpec& gen,
                                        const TerminalSpec& term, const ObstacleSpec& obstacle,
                                        const GeneratorSpec& gen_prime,
                                        const TerminalSpec& term_prime,
                                        const ObstacleSpec& obstacle_prime,
                                        const RegressionBasis& basis,
                                        const PicardOptions& picard,
                                        const RbsdeOptions& options) {
    require_ordered(bundle, gen, term, obstacle, gen_prime, term_prime, obstacle_prime);
    const ReflectedSolution a =
        solve_rbsde(bundle, gen, term, obstacle, basis, picard, options);
    const ReflectedSolution b =
        solve_rbsde(bundle, gen_prime, term_prime, obstacle_prime, basis, picard, options);

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

RbsdeStabilityReport rbsde_stability_check(const PathBundle& bundle, const GeneratorSpec& gen,
                                           const TerminalSpec& term,
                                           const ObstacleSpec& obstacle,
                                           const ObstacleSpec& obstacle_prime,
                                           double xi_shift, double f_shift,
                                           const RegressionBasis& basis, double eta, double p,
                                           const DriftControlSet& controls,
                                           const std::vector<double>& eps_values,
                                           const PicardOptions& picard,
                                           const RbsdeOptions& options) {
    validate_norm_window(gen, eta, p);
    if (eps_values.empty()) throw ConfigError("stability sweep needs at least one epsilon");

    // The theorem requires a common barrier: verify the two specs agree on
    // sampled states before running anything.
    {
        Vec x(bundle.d);
        if (obstacle.constrained != obstacle_prime.constrained) {
            throw ConfigError("rbsde_stability_check: the two barriers differ");
        }
        if (obstacle.constrained) {
            const std::size_t stride = std::max<std::size_t>(1, bundle.n_paths / 128);
            for (std::size_t pp = 0; pp < bundle.n_paths; pp += stride) {
                const std::size_t k = bundle.stop_index[pp] / 2;
                for (int c = 0; c < bundle.d; ++c) x[c] = bundle.X(pp, k, c);
                const double t = bundle.grid.t(k);
                if (std::abs(obstacle.S(t, x) - obstacle_prime.S(t, x)) > 1e-12) {
                    throw ConfigError("rbsde_stability_check: the two barriers differ");
                }
            }
        }
    }

    const auto densities = density_family(bundle, controls);
    const double pprime = 0.5 * (p + gen.moment_q);
    const std::size_t n = bundle.grid.n_steps;
    const double h = bundle.grid.step_h;

    const ReflectedSolution base =
        solve_rbsde(bundle, gen, term, obstacle, basis, picard, options);

    RbsdeStabilityReport rep;
    rep.eta = eta;
    rep.p = p;
    rep.eps_values = eps_values;
    for (const double eps : eps_values) {
        GeneratorSpec gen2 = gen;
        const double df = eps * f_shift;
        auto baseF = gen.F;
        gen2.F = [baseF, df](double t, const Vec& x, double y, const Vec& z, const Mat& s) {
            return baseF(t, x, y, z, s) + df;
        };
        gen2.name = gen.name + "_eps";
        TerminalSpec term2;
        auto base_xi = term.xi;
        const double dxi = eps * xi_shift;
        term2.xi = [base_xi, dxi](const StoppedPathView& v) { return base_xi(v) + dxi; };
        term2.name = term.name + "_eps";

        const ReflectedSolution pert =
            solve_rbsde(bundle, gen2, term2, obstacle_prime, basis, picard, options);

        Array2D dY(bundle.n_paths, n + 1);
        Array3D dZ(bundle.n_paths, n, bundle.d);
        Array2D dKabs(bundle.n_paths, n);
        for (std::size_t pp = 0; pp < bundle.n_paths; ++pp) {
            for (std::size_t k = 0; k <= n; ++k) dY(pp, k) = pert.Y(pp, k) - base.Y(pp, k);
            for (std::size_t k = 0; k < n; ++k) {
                for (int c = 0; c < bundle.d; ++c) {
                    dZ(pp, k, c) = pert.Z(pp, k, c) - base.Z(pp, k, c);
                }
                dKabs(pp, k) = std::abs((pert.K(pp, k + 1) - pert.K(pp, k)) -
                                        (base.K(pp, k + 1) - base.K(pp, k)));
            }
        }
        const NormParams np{p, eta};
        rep.dY_norm.push_back(norm_D(bundle, dY, np, &densities).value);
        rep.dZ_norm.push_back(norm_H(bundle, dZ, np, &densities).value);
        rep.dK_norm.push_back(norm_K(bundle, dKabs, np, &densities).value);

        // Data distances under the tilt family at the theorem's exponents.
        std::vector<double> xim(bundle.n_paths), fm(bundle.n_paths);
        for (std::size_t pp = 0; pp < bundle.n_paths; ++pp) {
            const double tau = bundle.stop_time(pp);
            xim[pp] = std::pow(std::abs(std::exp(eta * tau) * dxi), pprime);
            double acc = 0.0;
            for (std::size_t k = 0; k < bundle.stop_index[pp]; ++k) {
                acc += std::exp(eta * bundle.grid.t(k)) * std::abs(df) * h;
            }
            fm[pp] = std::pow(acc, pprime);
        }
        const auto exi = dominated_expectation(bundle, xim, densities);
        const auto ef = dominated_expectation(bundle, fm, densities);
        rep.delta_xi.push_back(std::pow(std::max(exi.value, 0.0), p / pprime));
        rep.delta_f.push_back(std::pow(std::max(ef.value, 0.0), p / pprime));
    }

    // Least-squares slope of log(dY norm) against log(eps); a clean linear
    // response gives 1, the theorem guarantees at least 1/2.
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    std::size_t cnt = 0;
    bool decreasing = true;
    for (std::size_t i = 0; i < eps_values.size(); ++i) {
        if (rep.dY_norm[i] <= 0.0) continue;
        const double lx = std::log(eps_values[i]);
        const double ly = std::log(rep.dY_norm[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++cnt;
        if (i > 0 && rep.dY_norm[i] > rep.dY_norm[i - 1] + 1e-14) {
            // eps_values are expected in decreasing order of eps
            if (eps_values[i] < eps_values[i - 1]) decreasing = false;
        }
    }
    if (cnt >= 2) {
        const double denom = static_cast<double>(cnt) * sxx - sx * sx;
        rep.exponent = denom != 0.0 ? (static_cast<double>(cnt) * sxy - sx * sy) / denom : 0.0;
    }
    rep.pass = cnt >= 2 && rep.exponent >= 0.48 && decreasing;
    return rep;
}

}  // namespace rhbsde
