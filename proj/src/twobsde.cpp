#include "rhbsde/twobsde.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "rhbsde/errors.hpp"
#include "rhbsde/parallel.hpp"
#include "rhbsde/rng.hpp"

namespace rhbsde {

int StateBins::locate(double x) const {
    if (n_bins <= 0) return 0;
    const double w = width();
    if (!(w > 0.0)) return 0;
    const auto b = static_cast<int>(std::floor((x - lo) / w));
    return std::clamp(b, 0, n_bins - 1);
}

namespace {

// Piecewise-linear read of one row of a (step, bin) table; constant beyond
// the outermost bin centers.
double interp_row(const Array2D& table, const StateBins& bins, std::size_t k, double x) {
    const int nb = bins.n_bins;
    if (nb <= 1) return table(k, 0);
    const double w = bins.width();
    const double u = (x - bins.lo - 0.5 * w) / w;  // fractional center index
    if (u <= 0.0) return table(k, 0);
    if (u >= static_cast<double>(nb - 1)) return table(k, nb - 1);
    const auto i0 = static_cast<int>(std::floor(u));
    const double frac = u - static_cast<double>(i0);
    return (1.0 - frac) * table(k, i0) + frac * table(k, i0 + 1);
}

PathBundle member_bundle(const MeasureFamily& family, const FamilySimConfig& sim,
                         std::size_t m) {
    const std::uint64_t seed = sim.common_seed ? sim.seed : CounterRng::derive(sim.seed, m);
    return simulate_paths(family.members[m], sim.rule, sim.grid, sim.n_paths, seed);
}

std::vector<double> terminal_samples(const TerminalSpec& term, const PathBundle& bundle) {
    std::vector<double> xi(bundle.n_paths, 0.0);
    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) xi[p] = term.xi(StoppedPathView{&bundle, p});
    });
    return xi;
}

std::string member_label(const VolatilitySpec& spec, std::size_t m) {
    return spec.name.empty() ? "member" + std::to_string(m) : spec.name;
}

// Samples the driver at (y, z) = 0 along the member's paths and rejects the
// member on any non-finite value.
void screen_member(const PathBundle& bundle, const GeneratorSpec& gen,
                   const std::string& label) {
    const std::size_t stride = std::max<std::size_t>(1, bundle.n_paths / 256);
    for (std::size_t p = 0; p < bundle.n_paths; p += stride) {
        const std::size_t stop = bundle.stop_index[p];
        for (std::size_t k = 0; k < stop; k += 4) {
            const double v = gen.f0(bundle.grid.t(k), bundle.state_at(p, k),
                                    Mat(bundle.sigma.at(p, k)));
            if (!std::isfinite(v)) {
                throw ConfigError("family member '" + label +
                                  "' rejected: non-finite driver sample at t = " +
                                  std::to_string(bundle.grid.t(k)));
            }
        }
    }
}

// z read-off from stored regression coefficients at one state: the same
// generalized-inverse adjustment the per-path extraction applies.
Vec z_from_coeffs(const Regressor& reg, const Eigen::MatrixXd& coeffs,
                  const VolatilitySpec& spec, ZMode z_mode, double t, const Vec& x) {
    if (coeffs.size() == 0) return Vec::Zero(spec.d);
    Eigen::VectorXd phi(reg.basis_size());
    reg.basis().eval(x.data(), spec.d, phi.data());
    const Vec fitted = coeffs.transpose() * phi;
    const Mat sig = spec.sigma_at(t, x);
    const Mat a_pinv = spectral_pinv(sig * sig.transpose(), 0.0);
    if (z_mode == ZMode::CovariationX) return a_pinv * fitted;
    return a_pinv * (sig * fitted);
}

double member_x0_first(const VolatilitySpec& spec) {
    return spec.x0.size() > 0 ? spec.x0[0] : 0.0;
}

double max_sigma_bound(const MeasureFamily& family) {
    double s = 0.0;
    for (const auto& m : family.members) {
        double b = m.sigma_bound;
        if (!(b > 0.0) && m.constant && m.const_sigma.size() > 0) {
            b = m.const_sigma.cwiseAbs().maxCoeff();
        }
        s = std::max(s, b);
    }
    return s > 0.0 ? s : 1.0;
}

double min_sigma_bound(const MeasureFamily& family) {
    double s = std::numeric_limits<double>::infinity();
    for (const auto& m : family.members) {
        double b = m.sigma_bound;
        if (!(b > 0.0) && m.constant && m.const_sigma.size() > 0) {
            b = m.const_sigma.cwiseAbs().maxCoeff();
        }
        if (b > 0.0) s = std::min(s, b);
    }
    return std::isfinite(s) ? s : 1.0;
}

// Intersects the sampled-diffusion range with the absorbing geometry of the
// stopping rule (first component only; the node grid is one-dimensional).
void clamp_domain_to_rule(const StoppingRule& rule, double& lo, double& hi) {
    switch (rule.kind) {
        case StoppingRule::Kind::ExitOfBox:
            if (rule.lower.size() > 0) lo = std::max(lo, rule.lower[0]);
            if (rule.upper.size() > 0) hi = std::min(hi, rule.upper[0]);
            break;
        case StoppingRule::Kind::HittingLevel:
            if (rule.component == 0) hi = std::min(hi, rule.level);
            break;
        case StoppingRule::Kind::MinOf:
            for (const auto& part : rule.parts) clamp_domain_to_rule(part, lo, hi);
            break;
        case StoppingRule::Kind::Deterministic:
            break;
    }
}

void require_one_dimensional(const MeasureFamily& family, const char* what) {
    if (family.size() == 0) throw ConfigError("volatility family is empty");
    for (const auto& m : family.members) {
        if (m.d != 1) {
            throw ConfigError(std::string(what) + " requires a one-dimensional state");
        }
    }
}

}  // namespace

double TwoBsdeSolution::value_at(std::size_t k, double x) const {
    return interp_row(V, bins, k, x);
}

TailCertificate twobsde_tail_certificate(const TwoBsdeProblem& problem,
                                         const FamilySimConfig& sim,
                                         const std::vector<double>& ladder) {
    if (problem.family.size() == 0) throw ConfigError("volatility family is empty");
    if (ladder.empty()) throw ConfigError("tail certificate: empty truncation ladder");
    TailCertificate cert;
    cert.n_values = ladder;
    cert.survival.assign(ladder.size(), 0.0);

    const double cap = sim.grid.horizon_cap();
    for (std::size_t m = 0; m < problem.family.size(); ++m) {
        const PathBundle b = member_bundle(problem.family, sim, m);
        std::vector<DensityProcess> densities;
        if (!problem.controls.policies.empty()) {
            densities = density_family(b, problem.controls);
        }
        for (std::size_t r = 0; r < ladder.size(); ++r) {
            const bool beyond_cap = ladder[r] > cap;
            const std::size_t idx = sim.grid.index_of(std::min(ladder[r], cap));
            std::vector<double> ind(b.n_paths), wts(b.n_paths);
            for (std::size_t p = 0; p < b.n_paths; ++p) {
                // Survival to a rung past the cap is only possible for paths
                // whose rule never fired; a stop exactly at the cap is a
                // genuine stop, not censoring.
                const bool alive = beyond_cap ? b.capped[p] != 0 : b.stop_index[p] >= idx;
                ind[p] = alive ? 1.0 : 0.0;
            }
            double best = 0.0;
            if (densities.empty()) {
                std::fill(wts.begin(), wts.end(), 1.0);
                double mean = 0.0, se = 0.0;
                weighted_mean_se(ind, wts, mean, se);
                best = mean;
            } else {
                for (const auto& dp : densities) {
                    for (std::size_t p = 0; p < b.n_paths; ++p) {
                        wts[p] = dp.D(p, std::min<std::size_t>(b.stop_index[p], idx));
                    }
                    double mean = 0.0, se = 0.0;
                    weighted_mean_se(ind, wts, mean, se);
                    best = std::max(best, mean);
                }
            }
            cert.survival[r] = std::max(cert.survival[r], best);
        }
    }

    bool nonincreasing = true;
    for (std::size_t r = 1; r < cert.survival.size(); ++r) {
        if (cert.survival[r] > cert.survival[r - 1] + 1e-12) nonincreasing = false;
    }
    cert.pass = nonincreasing && cert.survival.back() <= 0.2;
    return cert;
}

TwoBsdeSolution solve_2bsde_sweep(const TwoBsdeProblem& problem, const RegressionBasis& basis,
                                  const FamilySimConfig& sim, const TwoBsdeOptions& options) {
    require_one_dimensional(problem.family, "the sup-of-solvers sweep");
    problem.gen.validate_window();
    if (options.bins.n_bins < 1) throw ConfigError("state bins: n_bins must be positive");

    const MeasureFamily& fam = problem.family;
    const std::size_t M = fam.size();
    const TimeGrid grid = sim.grid;
    const std::size_t n = grid.n_steps;
    const double h = grid.step_h;

    TwoBsdeSolution sol;
    sol.mode = "sweep";
    sol.grid = grid;
    sol.sim = sim;
    sol.per_member.resize(M);
    sol.member_ok.assign(M, false);
    sol.member_errors.assign(M, std::string());
    sol.member_names.resize(M);
    for (std::size_t m = 0; m < M; ++m) sol.member_names[m] = member_label(fam.members[m], m);

    // Pass 1: one member at a time — simulate, screen, solve, record the
    // sampled state range and per-step alive counts.  Bundles are discarded
    // immediately; the counter-based generator reproduces them bit-exactly
    // in pass 2.
    double gmin = std::numeric_limits<double>::infinity();
    double gmax = -std::numeric_limits<double>::infinity();
    Array2D alive_count(M, n, 0.0);
    for (std::size_t m = 0; m < M; ++m) {
        const PathBundle b = member_bundle(fam, sim, m);
        if (fam.generator_finiteness_check) screen_member(b, problem.gen, sol.member_names[m]);
        try {
            const QvDensity qv = quadratic_variation_density(b);
            sol.per_member[m] = solve_bsde(b, qv, problem.gen, problem.term, basis,
                                           options.picard, options.z_mode);
            sol.member_ok[m] = true;
        } catch (const SolverError& e) {
            sol.member_errors[m] = e.what();
            continue;
        }
        for (std::size_t p = 0; p < b.n_paths; ++p) {
            const std::size_t stop = b.stop_index[p];
            for (std::size_t k = 0; k <= n; ++k) {
                const double x = b.X(p, k, 0);
                gmin = std::min(gmin, x);
                gmax = std::max(gmax, x);
            }
            for (std::size_t k = 0; k < std::min(stop, n); ++k) alive_count(m, k) += 1.0;
        }
    }
    bool any_ok = false;
    for (std::size_t m = 0; m < M; ++m) any_ok = any_ok || sol.member_ok[m];
    if (!any_ok) {
        std::string first;
        for (std::size_t m = 0; m < M && first.empty(); ++m) first = sol.member_errors[m];
        throw SolverError("every family member failed: " + first);
    }

    sol.bins = options.bins;
    if (sol.bins.auto_range) {
        if (!(gmax > gmin)) {
            gmin -= 0.5;
            gmax += 0.5;
        }
        const double pad = 1e-9 + 0.005 * (gmax - gmin);
        sol.bins.lo = gmin - pad;
        sol.bins.hi = gmax + pad;
    }
    if (!(sol.bins.hi > sol.bins.lo)) throw ConfigError("state bins: hi must exceed lo");
    const int B = sol.bins.n_bins;

    // Interior value surface: pointwise max over member value functions
    // (the fitted conditional-expectation coefficients ARE those functions
    // in the explicit scheme), evaluated at bin centers.
    Regressor reg(basis, 1);
    sol.V = Array2D(n + 1, B, 0.0);
    sol.Z_agg = Array2D(n, B, 0.0);
    sol.argmax_member.assign(n + 1, std::vector<int>(B, -1));
    for (std::size_t k = 0; k < n; ++k) {
        const double tk = grid.t(k);
        for (int b = 0; b < B; ++b) {
            const double c = sol.bins.center(b);
            double best = 0.0;
            int best_m = -1;
            for (std::size_t m = 0; m < M; ++m) {
                if (!sol.member_ok[m] || alive_count(m, k) == 0.0) continue;
                const double v = reg.eval(sol.per_member[m].coeffs_Y[k], &c);
                if (best_m < 0 || v > best) {
                    best = v;
                    best_m = static_cast<int>(m);
                }
            }
            if (best_m < 0) continue;
            sol.V(k, b) = best;
            sol.argmax_member[k][b] = best_m;
            Vec cx(1);
            cx << c;
            const Vec z = z_from_coeffs(reg, sol.per_member[best_m].coeffs_Z[k],
                                        fam.members[best_m], options.z_mode, tk, cx);
            sol.Z_agg(k, b) = z[0];
        }
    }
    const bool markov_terminal = static_cast<bool>(problem.term.state_fn);
    if (markov_terminal) {
        for (int b = 0; b < B; ++b) {
            Vec cx(1);
            cx << sol.bins.center(b);
            sol.V(n, b) = problem.term.state_fn(cx);
        }
    }

    // Pass 2: re-simulate each member and accumulate the one-step residual
    // increments of U = V(t, X) - int F + int Z dX along its own paths.
    sol.member_drift.assign(M, Array2D());
    sol.member_drift_se.assign(M, Array2D());
    sol.member_khat.assign(M, Array2D());
    sol.member_occupancy.assign(M, Array2D());
    if (options.keep_k_tables) {
        sol.member_K_path.assign(M, Array2D());
        sol.member_bin_index.assign(M, Array2D());
        sol.member_stop.assign(M, std::vector<std::uint32_t>());
    }
    std::vector<Eigen::VectorXd> term_coeffs(M);
    std::vector<char> term_have(M, 0);
    for (std::size_t m = 0; m < M; ++m) {
        if (!sol.member_ok[m]) continue;
        const PathBundle b = member_bundle(fam, sim, m);
        const std::vector<double> xi = terminal_samples(problem.term, b);

        if (!markov_terminal) {
            std::vector<std::uint32_t> capped_rows;
            for (std::size_t p = 0; p < b.n_paths; ++p) {
                if (b.capped[p]) capped_rows.push_back(static_cast<std::uint32_t>(p));
            }
            if (!capped_rows.empty()) {
                term_coeffs[m] = reg.fit(b.X, n, capped_rows, xi);
                term_have[m] = 1;
            }
        }

        Array2D sum(n, B, 0.0), sq(n, B, 0.0), cnt(n, B, 0.0);
        Vec xv(1), zv(1);
        for (std::size_t p = 0; p < b.n_paths; ++p) {
            const std::size_t stop = b.stop_index[p];
            for (std::size_t k = 0; k < stop; ++k) {
                const double x = b.X(p, k, 0);
                const int bi = sol.bins.locate(x);
                const double yk = interp_row(sol.V, sol.bins, k, x);
                const double xn = b.X(p, k + 1, 0);
                const double ynext =
                    (k + 1 == stop) ? xi[p] : interp_row(sol.V, sol.bins, k + 1, xn);
                const double z = interp_row(sol.Z_agg, sol.bins, k, x);
                xv[0] = x;
                zv[0] = z;
                const double f =
                    problem.gen.F(grid.t(k), xv, yk, zv, Mat(b.sigma.at(p, k)));
                const double du = ynext - yk + h * f - z * (xn - x);
                sum(k, bi) += du;
                sq(k, bi) += du * du;
                cnt(k, bi) += 1.0;
            }
        }
        Array2D drift(n, B, 0.0), dse(n, B, 0.0), khat(n, B, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            for (int bi = 0; bi < B; ++bi) {
                const double c = cnt(k, bi);
                if (c < 1.0) continue;
                const double mean = sum(k, bi) / c;
                const double var = std::max(0.0, sq(k, bi) / c - mean * mean);
                drift(k, bi) = mean;
                dse(k, bi) = c > 1.0 ? std::sqrt(var / c) : 0.0;
                khat(k, bi) = std::max(0.0, -mean);
            }
        }
        if (options.keep_k_tables) {
            // Per-path tables accumulate the *unclamped* negative drift so
            // that conditional means over paths sharing a bin estimate the
            // expected compensator increment without rectification bias: for
            // the attaining member the bin drifts are zero-mean noise and
            // max(0, -drift) would pile up ~E|noise|/2 per step, poisoning
            // the minimality statistic.  The clamped khat tables are kept
            // separately for reporting, where nonnegativity aids reading.
            Array2D K(b.n_paths, n + 1, 0.0);
            Array2D bidx(b.n_paths, n, 0.0);
            for (std::size_t p = 0; p < b.n_paths; ++p) {
                const std::size_t stop = b.stop_index[p];
                for (std::size_t k = 0; k < n; ++k) {
                    const int bi = sol.bins.locate(b.X(p, k, 0));
                    bidx(p, k) = static_cast<double>(bi);
                    K(p, k + 1) = K(p, k) + (k < stop ? -drift(k, bi) : 0.0);
                }
            }
            sol.member_K_path[m] = std::move(K);
            sol.member_bin_index[m] = std::move(bidx);
            sol.member_stop[m] = b.stop_index;
        }
        sol.member_drift[m] = std::move(drift);
        sol.member_drift_se[m] = std::move(dse);
        sol.member_khat[m] = std::move(khat);
        sol.member_occupancy[m] = std::move(cnt);
    }

    if (!markov_terminal) {
        for (int b = 0; b < B; ++b) {
            const double c = sol.bins.center(b);
            double best = 0.0;
            int best_m = -1;
            for (std::size_t m = 0; m < M; ++m) {
                if (!term_have[m]) continue;
                const double v = reg.eval(term_coeffs[m], &c);
                if (best_m < 0 || v > best) {
                    best = v;
                    best_m = static_cast<int>(m);
                }
            }
            if (best_m >= 0) {
                sol.V(n, b) = best;
                sol.argmax_member[n][b] = best_m;
            }
        }
    }

    bool first = true;
    for (std::size_t m = 0; m < M; ++m) {
        if (!sol.member_ok[m]) continue;
        const double y0 = sol.per_member[m].y0_mean;
        if (first || y0 > sol.v0) {
            sol.v0 = y0;
            sol.v0_se = sol.per_member[m].y0_se;
            sol.argmax_member_0 = m;
            first = false;
        }
    }

    if (!options.keep_member_solutions) {
        for (auto& ms : sol.per_member) {
            ms.Y = Array2D();
            ms.Z = Array3D();
            ms.N_inc = Array2D();
        }
    }
    return sol;
}

TwoBsdeSolution solve_2bsde_hjb(const TwoBsdeProblem& problem, const FamilySimConfig& sim,
                                const TwoBsdeOptions& options) {
    require_one_dimensional(problem.family, "the node-grid dynamic program");
    if (!problem.term.state_fn) {
        throw ConfigError(
            "the node-grid dynamic program needs a state-functional terminal payoff");
    }
    problem.gen.validate_window();
    if (options.bins.n_bins < 3) {
        throw ConfigError("the node-grid dynamic program needs at least 3 bins");
    }

    const MeasureFamily& fam = problem.family;
    const std::size_t M = fam.size();
    const TimeGrid grid = sim.grid;
    const std::size_t n = grid.n_steps;
    const double h = grid.step_h;
    const double x0 = member_x0_first(fam.members[0]);

    TwoBsdeSolution sol;
    sol.mode = "node_grid";
    sol.grid = grid;
    sol.sim = sim;
    sol.member_names.resize(M);
    for (std::size_t m = 0; m < M; ++m) sol.member_names[m] = member_label(fam.members[m], m);
    sol.member_ok.assign(M, true);
    sol.member_errors.assign(M, std::string());

    sol.bins = options.bins;
    if (sol.bins.auto_range) {
        const double s = max_sigma_bound(fam);
        const double span = 5.0 * s * std::sqrt(grid.horizon_cap());
        double lo = x0 - span, hi = x0 + span;
        clamp_domain_to_rule(sim.rule, lo, hi);
        if (!(hi > lo)) throw ConfigError("node-grid domain is empty after rule clamping");
        sol.bins.lo = lo;
        sol.bins.hi = hi;
        // Piecewise-linear value interpolation accumulates a chord bias of
        // roughly n_steps * w^2/6 * V_xx per backward pass.  Tying the node
        // width to a fraction of the smallest one-step diffusion scale keeps
        // the total bias O(sigma^2 * horizon) * kappa^2, independent of the
        // step count, so an auto-ranged grid stays trustworthy as h -> 0.
        const double w_target = 0.25 * min_sigma_bound(fam) * std::sqrt(h);
        if (w_target > 0.0) {
            int adaptive = static_cast<int>(std::ceil((hi - lo) / w_target));
            if (adaptive % 2 == 0) ++adaptive;
            adaptive = std::min(adaptive, 2001);
            sol.bins.n_bins = std::max(sol.bins.n_bins, adaptive);
        }
    }
    if (!(sol.bins.hi > sol.bins.lo)) throw ConfigError("state bins: hi must exceed lo");
    const int B = sol.bins.n_bins;
    const double w = sol.bins.width();
    const auto& g = problem.term.state_fn;

    sol.V = Array2D(n + 1, B, 0.0);
    sol.Z_agg = Array2D(n, B, 0.0);
    sol.argmax_member.assign(n + 1, std::vector<int>(B, -1));

    Vec probe(1);
    for (int b = 0; b < B; ++b) {
        probe[0] = sol.bins.center(b);
        sol.V(n, b) = g(probe);
    }

    // Gauss–Hermite pairs (physicists' convention, 8 points):
    // E[f(N)] = sum_i w_i/sqrt(pi) * (f(sqrt(2) x_i) + f(-sqrt(2) x_i)).
    static const double gh_x[4] = {0.38118699020732211685, 1.15719371244678019472,
                                   1.98165675669584292585, 2.93063742025724401922};
    static const double gh_w[4] = {6.61147012558241291030e-1, 2.07802325814891879543e-1,
                                   1.70779830074134754562e-2, 1.99604072211367619206e-4};
    const double inv_sqrt_pi = 1.0 / std::sqrt(M_PI);
    const double sqrt2 = std::sqrt(2.0);

    // Value read-off at the next time row: absorbed states take the
    // terminal payoff; states beyond the node range extrapolate linearly.
    const auto eval_next = [&](std::size_t k1, double x) -> double {
        Vec xv(1);
        xv[0] = x;
        if (sim.rule.fires(grid.t(k1), xv)) return g(xv);
        const double c0 = sol.bins.center(0);
        const double cL = sol.bins.center(B - 1);
        if (x < c0) {
            const double slope = (sol.V(k1, 1) - sol.V(k1, 0)) / w;
            return sol.V(k1, 0) + slope * (x - c0);
        }
        if (x > cL) {
            const double slope = (sol.V(k1, B - 1) - sol.V(k1, B - 2)) / w;
            return sol.V(k1, B - 1) + slope * (x - cL);
        }
        return interp_row(sol.V, sol.bins, k1, x);
    };

    Vec xv(1), zv(1);
    for (std::size_t kk = n; kk-- > 0;) {
        const double tk = grid.t(kk);
        for (int b = 0; b < B; ++b) {
            const double c = sol.bins.center(b);
            xv[0] = c;
            if (sim.rule.fires(tk, xv)) {
                sol.V(kk, b) = g(xv);
                continue;
            }
            const double z = (eval_next(kk + 1, c + w) - eval_next(kk + 1, c - w)) / (2.0 * w);
            zv[0] = z;
            double best = 0.0;
            int best_m = -1;
            for (std::size_t m = 0; m < M; ++m) {
                const Mat sig = fam.members[m].sigma_at(tk, xv);
                const double s = sig(0, 0);
                double e = 0.0;
                for (int i = 0; i < 4; ++i) {
                    const double dx = s * std::sqrt(h) * sqrt2 * gh_x[i];
                    e += gh_w[i] * (eval_next(kk + 1, c + dx) + eval_next(kk + 1, c - dx));
                }
                e *= inv_sqrt_pi;
                const double cand = e + h * problem.gen.F(tk, xv, e, zv, sig);
                if (best_m < 0 || cand > best) {
                    best = cand;
                    best_m = static_cast<int>(m);
                }
            }
            sol.V(kk, b) = best;
            sol.argmax_member[kk][b] = best_m;
            sol.Z_agg(kk, b) = z;
        }
    }

    sol.v0 = sol.value_at(0, x0);
    sol.v0_se = 0.0;
    const int am0 = sol.argmax_member[0][sol.bins.locate(x0)];
    sol.argmax_member_0 = am0 >= 0 ? static_cast<std::size_t>(am0) : 0;
    return sol;
}

MinimalityReport minimality_check(const TwoBsdeSolution& sol, std::size_t s_index,
                                  std::size_t t_index) {
    if (sol.mode != "sweep") {
        throw ConfigError("minimality check needs a sup-of-solvers sweep solution");
    }
    if (sol.member_K_path.empty() || sol.member_bin_index.empty()) {
        throw ConfigError("minimality check needs compensator tables (set keep_k_tables)");
    }
    const std::size_t n = sol.grid.n_steps;
    if (!(s_index < t_index) || t_index > n) {
        throw ConfigError("minimality check: need s_index < t_index <= n_steps");
    }
    const std::size_t M = sol.member_names.size();
    const int B = sol.bins.n_bins;

    MinimalityReport rep;
    rep.s_index = s_index;
    rep.t_index = t_index;
    rep.bin_centers.resize(B);
    for (int b = 0; b < B; ++b) rep.bin_centers[b] = sol.bins.center(b);
    rep.member_expected_inc = Array2D(M, B, 0.0);
    rep.member_expected_inc_se = Array2D(M, B, 0.0);
    rep.min_over_members.assign(B, 0.0);
    rep.argmin_member.assign(B, -1);
    rep.occupancy_fraction.assign(B, 0.0);
    rep.member_total_inc.assign(M, 0.0);
    rep.member_total_se.assign(M, 0.0);

    Array2D sum(M, B, 0.0), sq(M, B, 0.0), cnt(M, B, 0.0);
    double pooled_alive = 0.0;
    std::vector<double> pooled_bin(B, 0.0);
    for (std::size_t m = 0; m < M; ++m) {
        if (m >= sol.member_ok.size() || !sol.member_ok[m]) continue;
        const Array2D& K = sol.member_K_path[m];
        if (K.empty()) continue;
        const Array2D& bins = sol.member_bin_index[m];
        const auto& stops = sol.member_stop[m];
        double tsum = 0.0, tsq = 0.0;
        const auto n_paths = K.rows;
        for (std::size_t p = 0; p < n_paths; ++p) {
            const double inc = K(p, t_index) - K(p, s_index);
            tsum += inc;
            tsq += inc * inc;
            if (stops[p] > s_index) {
                const int b = static_cast<int>(bins(p, s_index));
                sum(m, b) += inc;
                sq(m, b) += inc * inc;
                cnt(m, b) += 1.0;
                pooled_bin[b] += 1.0;
                pooled_alive += 1.0;
            }
        }
        if (n_paths > 0) {
            const double mean = tsum / static_cast<double>(n_paths);
            const double var =
                std::max(0.0, tsq / static_cast<double>(n_paths) - mean * mean);
            rep.member_total_inc[m] = mean;
            rep.member_total_se[m] = std::sqrt(var / static_cast<double>(n_paths));
        }
    }
    if (pooled_alive <= 0.0) {
        throw ConfigError("minimality check: no path is alive at s_index");
    }

    const double h = sol.grid.step_h;
    bool all_ok = true;
    rep.worst_min = 0.0;
    rep.eps_stat = 0.0;
    for (int b = 0; b < B; ++b) {
        rep.occupancy_fraction[b] = pooled_bin[b] / pooled_alive;
        double best = 0.0, best_se = 0.0;
        int best_m = -1;
        for (std::size_t m = 0; m < M; ++m) {
            if (cnt(m, b) < 1.0) continue;
            const double c = cnt(m, b);
            const double mean = sum(m, b) / c;
            const double var = std::max(0.0, sq(m, b) / c - mean * mean);
            const double se = c > 1.0 ? std::sqrt(var / c) : 0.0;
            rep.member_expected_inc(m, b) = mean;
            rep.member_expected_inc_se(m, b) = se;
            if (c >= 5.0 && (best_m < 0 || mean < best)) {
                best = mean;
                best_se = se;
                best_m = static_cast<int>(m);
            }
        }
        rep.min_over_members[b] = best_m >= 0 ? best : 0.0;
        rep.argmin_member[b] = best_m;
        if (best_m < 0 || rep.occupancy_fraction[b] < 0.01) continue;
        const double slack = 3.0 * best_se + 2.0 * h * (1.0 + std::abs(sol.V(s_index, b)));
        rep.eps_stat = std::max(rep.eps_stat, slack);
        rep.worst_min = std::max(rep.worst_min, best);
        if (best > slack) all_ok = false;
    }
    rep.pass = all_ok;
    return rep;
}

DppReport dpp_check(const TwoBsdeProblem& problem, double t1, const RegressionBasis& basis,
                    const FamilySimConfig& sim, const TwoBsdeOptions& options) {
    const TimeGrid grid = sim.grid;
    const std::size_t n = grid.n_steps;
    const std::size_t k1 = grid.index_of(std::min(t1, grid.horizon_cap()));
    if (k1 == 0 || k1 >= n) {
        throw ConfigError("dynamic-programming check: t1 must lie strictly inside the horizon");
    }

    const TwoBsdeSolution full = solve_2bsde_sweep(problem, basis, sim, options);

    DppReport rep;
    rep.direct = full.v0;
    rep.direct_se = full.v0_se;

    const MeasureFamily& fam = problem.family;
    const std::size_t M = fam.size();
    Regressor reg(basis, 1);
    const auto inner_value = [&](const Vec& x) {
        double best = 0.0;
        bool first = true;
        for (std::size_t m = 0; m < M; ++m) {
            if (!full.member_ok[m]) continue;
            const double v = reg.eval(full.per_member[m].coeffs_Y[k1], x.data());
            if (first || v > best) {
                best = v;
                first = false;
            }
        }
        return best;
    };

    rep.member_outer.assign(M, 0.0);
    const std::size_t k_mid = k1 / 2;  // 0 = outer window too short for bins
    const StateBins& bins = full.bins;
    std::vector<std::vector<Eigen::VectorXd>> outer_coeffs(M);
    std::vector<double> bin_count(static_cast<std::size_t>(bins.n_bins), 0.0);
    double alive_total = 0.0;
    bool first = true;
    double best_se = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
        if (!full.member_ok[m]) continue;
        const PathBundle b = member_bundle(fam, sim, m);
        const std::vector<double> xi = terminal_samples(problem.term, b);
        std::vector<double> tv(b.n_paths);
        for (std::size_t p = 0; p < b.n_paths; ++p) {
            tv[p] = b.stop_index[p] <= k1 ? xi[p] : inner_value(Vec(b.state_at(p, k1)));
        }
        const QvDensity qv = quadratic_variation_density(b);
        const BackwardSolution outer = solve_bsde_window(b, qv, problem.gen, tv, basis,
                                                         options.picard, options.z_mode,
                                                         SolveWindow{0, k1});
        rep.member_outer[m] = outer.y0_mean;
        if (first || outer.y0_mean > rep.two_stage) {
            rep.two_stage = outer.y0_mean;
            best_se = outer.y0_se;
            first = false;
        }
        if (k_mid >= 1) {
            outer_coeffs[m] = outer.coeffs_Y;
            for (std::size_t p = 0; p < b.n_paths; ++p) {
                if (b.stop_index[p] <= k_mid) continue;
                bin_count[static_cast<std::size_t>(bins.locate(b.X(p, k_mid, 0)))] += 1.0;
                alive_total += 1.0;
            }
        }
    }
    if (first) throw SolverError("dynamic-programming check: every outer solve failed");
    rep.two_stage_se = best_se;

    if (k_mid >= 1 && alive_total > 0.0) {
        rep.mid_index = k_mid;
        for (int bi = 0; bi < bins.n_bins; ++bi) {
            const double occ = bin_count[static_cast<std::size_t>(bi)] / alive_total;
            if (occ < options.min_bin_occupancy) continue;
            const Vec x = Vec::Constant(1, bins.center(bi));
            double ts = 0.0;
            bool ts_first = true;
            for (std::size_t m = 0; m < M; ++m) {
                if (outer_coeffs[m].empty() || outer_coeffs[m][k_mid].size() == 0) continue;
                const double v = reg.eval(outer_coeffs[m][k_mid], x.data());
                if (ts_first || v > ts) {
                    ts = v;
                    ts_first = false;
                }
            }
            if (ts_first) continue;
            const double direct = full.value_at(k_mid, bins.center(bi));
            rep.bin_centers.push_back(bins.center(bi));
            rep.bin_direct.push_back(direct);
            rep.bin_two_stage.push_back(ts);
            rep.bin_occupancy.push_back(occ);
            rep.max_bin_rel_gap = std::max(
                rep.max_bin_rel_gap, std::abs(direct - ts) / std::max(1.0, std::abs(direct)));
        }
    }

    rep.abs_gap = std::abs(rep.direct - rep.two_stage);
    rep.rel_gap = rep.abs_gap / std::max(1.0, std::abs(rep.direct));
    const double L = std::max(1.0, problem.gen.lipschitz_L);
    const double slack = 3.0 * std::hypot(rep.direct_se, rep.two_stage_se) +
                         2.0 * grid.step_h * L * (1.0 + std::abs(rep.direct));
    rep.pass = rep.abs_gap <= slack;
    return rep;
}

ComparisonReport twobsde_comparison_check(const TwoBsdeProblem& problem,
                                          const TwoBsdeProblem& problem_prime,
                                          const RegressionBasis& basis,
                                          const FamilySimConfig& sim,
                                          const TwoBsdeOptions& options) {
    if (problem.family.size() != problem_prime.family.size()) {
        throw ConfigError("comparison check: the two volatility menus differ in size");
    }
    const std::size_t M = problem.family.size();
    const TimeGrid grid = sim.grid;
    const std::size_t n = grid.n_steps;

    // Sampled preconditions on each member's paths: ordered terminals
    // pathwise and ordered drivers at random probe points.
    for (std::size_t m = 0; m < M; ++m) {
        const PathBundle b = member_bundle(problem.family, sim, m);
        const std::vector<double> xi = terminal_samples(problem.term, b);
        const std::vector<double> xi_p = terminal_samples(problem_prime.term, b);
        double scale = 1.0;
        for (std::size_t p = 0; p < b.n_paths; ++p) {
            scale = std::max({scale, std::abs(xi[p]), std::abs(xi_p[p])});
        }
        for (std::size_t p = 0; p < b.n_paths; ++p) {
            if (xi[p] > xi_p[p] + 1e-12 * scale) {
                throw ConfigError("comparison check precondition: terminals are not ordered");
            }
        }
        CounterRng rng(CounterRng::derive(0x2b5de0c0ULL, m));
        const std::size_t stride = std::max<std::size_t>(1, b.n_paths / 64);
        Vec zv(1);
        for (std::size_t p = 0; p < b.n_paths; p += stride) {
            const std::size_t stop = b.stop_index[p];
            for (std::size_t j = 0; j < 4; ++j) {
                const std::size_t k = std::min<std::size_t>(j * (n / 4), stop > 0 ? stop - 1 : 0);
                const double y = 4.0 * rng.uniform(p, k, 0) - 2.0;
                zv[0] = 4.0 * rng.uniform(p, k, 1) - 2.0;
                const Vec x(b.state_at(p, k));
                const Mat sig(b.sigma.at(p, k));
                const double f = problem.gen.F(grid.t(k), x, y, zv, sig);
                const double fp = problem_prime.gen.F(grid.t(k), x, y, zv, sig);
                if (f > fp + 1e-9 * std::max(1.0, std::abs(f))) {
                    throw ConfigError("comparison check precondition: drivers are not ordered");
                }
            }
        }
    }

    const TwoBsdeSolution a = solve_2bsde_sweep(problem, basis, sim, options);
    const TwoBsdeSolution b = solve_2bsde_sweep(problem_prime, basis, sim, options);

    const double occ_threshold =
        options.min_bin_occupancy * static_cast<double>(sim.n_paths) * static_cast<double>(M);
    double violation = 0.0;
    double scale = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
        for (int bi = 0; bi < a.bins.n_bins; ++bi) {
            double occ = 0.0;
            for (std::size_t m = 0; m < M; ++m) {
                if (!a.member_occupancy[m].empty()) occ += a.member_occupancy[m](k, bi);
            }
            if (occ < occ_threshold) continue;
            const double c = a.bins.center(bi);
            const double va = a.V(k, bi);
            const double vb = b.value_at(k, c);
            violation = std::max(violation, va - vb);
            scale = std::max({scale, std::abs(va), std::abs(vb)});
        }
    }

    ComparisonReport rep;
    rep.max_violation = violation;
    rep.y0 = a.v0;
    rep.y0_prime = b.v0;
    rep.slack = 3.0 * (a.v0_se + b.v0_se) +
                2.0 * grid.step_h * std::max(1.0, problem.gen.lipschitz_L) * scale;
    rep.pass = violation <= rep.slack;
    return rep;
}

}  // namespace rhbsde
