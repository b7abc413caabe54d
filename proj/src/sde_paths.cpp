#include "rhbsde/sde_paths.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "rhbsde/errors.hpp"
#include "rhbsde/parallel.hpp"
#include "rhbsde/rng.hpp"

namespace rhbsde {

VolatilitySpec VolatilitySpec::scalar_constant(double s, double x0_val, const std::string& label) {
    VolatilitySpec v;
    v.d = 1;
    v.m = 1;
    v.x0 = Vec::Constant(1, x0_val);
    v.sigma_bound = std::abs(s);
    v.constant = true;
    v.const_sigma = Mat::Constant(1, 1, s);
    v.name = label.empty() ? "sigma=" + std::to_string(s) : label;
    return v;
}

VolatilitySpec VolatilitySpec::matrix_constant(const Mat& s, const Vec& x0_vec,
                                               const std::string& label) {
    VolatilitySpec v;
    v.d = static_cast<int>(s.rows());
    v.m = static_cast<int>(s.cols());
    v.x0 = x0_vec.size() > 0 ? x0_vec : Vec::Zero(v.d);
    if (v.x0.size() != v.d) throw ConfigError("VolatilitySpec: x0 dimension mismatch");
    v.sigma_bound = s.operatorNorm();
    v.constant = true;
    v.const_sigma = s;
    v.name = label;
    return v;
}

VolatilitySpec VolatilitySpec::callable(int d, int m, const Vec& x0_vec, double bound,
                                        std::function<Mat(double, const Vec&)> fn,
                                        const std::string& label) {
    VolatilitySpec v;
    v.d = d;
    v.m = m;
    v.x0 = x0_vec.size() > 0 ? x0_vec : Vec::Zero(d);
    if (v.x0.size() != d) throw ConfigError("VolatilitySpec: x0 dimension mismatch");
    v.sigma_bound = bound;
    v.constant = false;
    v.sigma_fn = std::move(fn);
    v.name = label;
    return v;
}

StoppingRule StoppingRule::deterministic(double T) {
    StoppingRule r;
    r.kind = Kind::Deterministic;
    r.time = T;
    return r;
}

StoppingRule StoppingRule::exit_of_box(const Vec& lo, const Vec& hi) {
    if (lo.size() != hi.size()) throw ConfigError("exit_of_box: bound dimension mismatch");
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
        if (!(lo[i] < hi[i])) throw ConfigError("exit_of_box: lower must be below upper");
    }
    StoppingRule r;
    r.kind = Kind::ExitOfBox;
    r.lower = lo;
    r.upper = hi;
    return r;
}

StoppingRule StoppingRule::hitting_level(int comp, double lvl) {
    StoppingRule r;
    r.kind = Kind::HittingLevel;
    r.component = comp;
    r.level = lvl;
    return r;
}

StoppingRule StoppingRule::min_of(std::vector<StoppingRule> rules) {
    if (rules.empty()) throw ConfigError("min_of: needs at least one rule");
    StoppingRule r;
    r.kind = Kind::MinOf;
    r.parts = std::move(rules);
    return r;
}

bool StoppingRule::fires(double t, const Vec& x) const {
    switch (kind) {
        case Kind::Deterministic:
            return t >= time - 1e-12;
        case Kind::ExitOfBox:
            for (Eigen::Index i = 0; i < lower.size(); ++i) {
                if (x[i] <= lower[i] || x[i] >= upper[i]) return true;
            }
            return false;
        case Kind::HittingLevel:
            return x[component] >= level;
        case Kind::MinOf:
            for (const auto& r : parts) {
                if (r.fires(t, x)) return true;
            }
            return false;
    }
    return false;
}

double PathBundle::alive_at_cap_fraction() const {
    if (n_paths == 0) return 0.0;
    std::size_t alive = 0;
    for (auto c : capped) alive += c;
    return static_cast<double>(alive) / static_cast<double>(n_paths);
}

PathBundle simulate_paths(const VolatilitySpec& spec, const StoppingRule& rule,
                          const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed) {
    if (n_paths == 0) throw ConfigError("simulate_paths: n_paths must be positive");
    if (spec.d <= 0 || spec.m <= 0) throw ConfigError("simulate_paths: dimensions must be positive");
    if (!(spec.sigma_bound > 0.0)) throw ConfigError("simulate_paths: sigma_bound must be positive");

    const std::size_t n = grid.n_steps;
    const int d = spec.d, m = spec.m;
    const double h = grid.step_h;
    const double sqrt_h = std::sqrt(h);

    PathBundle b;
    b.grid = grid;
    b.n_paths = n_paths;
    b.d = d;
    b.m = m;
    b.x0 = spec.x0.size() > 0 ? spec.x0 : Vec::Zero(d);
    b.seed = seed;
    b.X = Array3D(n_paths, n + 1, d);
    b.W = Array3D(n_paths, n + 1, m);
    b.stop_index.assign(n_paths, 0);
    b.capped.assign(n_paths, 0);

    b.sigma.constant = spec.constant;
    b.sigma.d = d;
    b.sigma.m = m;
    if (spec.constant) {
        if (spec.const_sigma.operatorNorm() > spec.sigma_bound * (1.0 + 1e-12)) {
            throw ConfigError("simulate_paths: sigma exceeds its stated bound");
        }
        b.sigma.const_value = spec.const_sigma;
    } else {
        b.sigma.values = Array3D(n_paths, n, static_cast<std::size_t>(d) * m);
    }

    const CounterRng rng(seed);
    const Vec x0 = b.x0;
    // Operator-norm bound checked by sampling; the Frobenius norm screens
    // cheaply and the exact norm is only computed on near misses.
    const double bound = spec.sigma_bound * (1.0 + 1e-12);

    // Bridge crossing correction applies to scalar-state barrier rules only.
    const bool bridge_box = rule.bridge && d == 1 && rule.kind == StoppingRule::Kind::ExitOfBox;
    const bool bridge_hit =
        rule.bridge && d == 1 && rule.kind == StoppingRule::Kind::HittingLevel;
    const double const_s2h =
        spec.constant && d == 1 ? spec.const_sigma.row(0).squaredNorm() * h : 0.0;

    parallel_blocks(n_paths, [&](std::size_t lo, std::size_t hi) {
        Vec x(d), dw(m);
        Mat sig;
        for (std::size_t p = lo; p < hi; ++p) {
            x = x0;
            for (int i = 0; i < d; ++i) b.X(p, 0, i) = x[i];
            for (int j = 0; j < m; ++j) b.W(p, 0, j) = 0.0;

            std::size_t stop = n;  // cap unless the rule fires earlier
            bool fired = rule.fires(0.0, x);
            if (fired) stop = 0;

            std::size_t k = 0;
            for (; k < n && !fired; ++k) {
                const double x_prev = x[0];
                for (int j = 0; j < m; ++j) dw[j] = sqrt_h * rng.normal(p, k, j);
                double s2h = const_s2h;
                if (spec.constant) {
                    x.noalias() += spec.const_sigma * dw;
                } else {
                    sig = spec.sigma_fn(grid.t(k), x);
                    if (sig.norm() > bound && sig.operatorNorm() > bound) {
                        throw SolverError("simulate_paths: sigma sample exceeds sigma_bound");
                    }
                    Eigen::Map<Mat>(b.sigma.values.at(p, k), d, m) = sig;
                    x.noalias() += sig * dw;
                    if (d == 1) s2h = sig.row(0).squaredNorm() * h;
                }
                if (rule.fires(grid.t(k + 1), x)) {
                    stop = k + 1;
                    fired = true;
                } else if ((bridge_box || bridge_hit) && s2h > 0.0) {
                    // Both endpoints are inside: stop anyway with the bridge
                    // crossing probability and land on the crossed barrier.
                    const double a = x_prev, bb = x[0];
                    double p_lo = 0.0, p_hi = 0.0, lo_lvl = 0.0, hi_lvl = 0.0;
                    if (bridge_box) {
                        lo_lvl = rule.lower[0];
                        hi_lvl = rule.upper[0];
                        p_lo = std::exp(-2.0 * (a - lo_lvl) * (bb - lo_lvl) / s2h);
                        p_hi = std::exp(-2.0 * (hi_lvl - a) * (hi_lvl - bb) / s2h);
                    } else {
                        hi_lvl = rule.level;
                        p_hi = std::exp(-2.0 * (hi_lvl - a) * (hi_lvl - bb) / s2h);
                    }
                    const double u = rng.uniform(p, k, static_cast<std::uint64_t>(m));
                    if (u < p_lo) {
                        x[0] = lo_lvl;
                        stop = k + 1;
                        fired = true;
                    } else if (u < p_lo + p_hi) {
                        x[0] = hi_lvl;
                        stop = k + 1;
                        fired = true;
                    }
                }
                for (int i = 0; i < d; ++i) b.X(p, k + 1, i) = x[i];
                for (int j = 0; j < m; ++j) b.W(p, k + 1, j) = b.W(p, k, j) + dw[j];
            }
            // Freeze past the stop so X[., j] = X_{t_j ^ tau} for every j.
            for (std::size_t j = (fired ? stop : n) + 1; j <= n; ++j) {
                for (int i = 0; i < d; ++i) b.X(p, j, i) = b.X(p, stop, i);
                for (int jj = 0; jj < m; ++jj) b.W(p, j, jj) = b.W(p, stop, jj);
            }
            if (!spec.constant) {
                // Frozen steps carry a zero diffusion sample.
                for (std::size_t j = stop; j < n; ++j) {
                    double* dst = b.sigma.values.at(p, j);
                    for (int ij = 0; ij < d * m; ++ij) dst[ij] = 0.0;
                }
            }
            b.stop_index[p] = static_cast<std::uint32_t>(stop);
            b.capped[p] = fired ? 0 : 1;
        }
    });
    return b;
}

Mat spectral_pinv(const Mat& a, double eig_cutoff) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.transpose()));
    const Vec& lam = es.eigenvalues();
    const double lam_max = lam.cwiseAbs().maxCoeff();
    const double cutoff = eig_cutoff > 0.0 ? eig_cutoff : 1e-10 * lam_max;
    Vec inv = Vec::Zero(lam.size());
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        if (lam[i] > cutoff) inv[i] = 1.0 / lam[i];
    }
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

QvDensity quadratic_variation_density(const PathBundle& bundle, double eig_cutoff) {
    if (eig_cutoff < 0.0) throw ConfigError("quadratic_variation_density: negative cutoff");
    QvDensity q;
    q.constant = bundle.sigma.constant;
    q.d = bundle.d;
    if (q.constant) {
        q.const_a = bundle.sigma.const_value * bundle.sigma.const_value.transpose();
        q.const_a_pinv = spectral_pinv(q.const_a, eig_cutoff);
        return q;
    }
    const std::size_t n = bundle.grid.n_steps;
    const int d = bundle.d;
    q.a = Array3D(bundle.n_paths, n, static_cast<std::size_t>(d) * d);
    q.a_pinv = Array3D(bundle.n_paths, n, static_cast<std::size_t>(d) * d);
    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            const std::size_t stop = bundle.stop_index[p];
            for (std::size_t k = 0; k < n; ++k) {
                Mat aa;
                if (k < stop) {
                    const auto sig = bundle.sigma.at(p, k);
                    aa = sig * sig.transpose();
                } else {
                    aa = Mat::Zero(d, d);
                }
                Eigen::Map<Mat>(q.a.at(p, k), d, d) = aa;
                Eigen::Map<Mat>(q.a_pinv.at(p, k), d, d) = spectral_pinv(aa, eig_cutoff);
            }
        }
    });
    return q;
}

PathBundle truncate_horizon(const PathBundle& bundle, double n) {
    const std::size_t cut = bundle.grid.index_of(n);
    PathBundle out = bundle;
    for (std::size_t p = 0; p < out.n_paths; ++p) {
        if (out.stop_index[p] <= cut) continue;
        out.stop_index[p] = static_cast<std::uint32_t>(cut);
        out.capped[p] = 1;  // truncation, not a rule firing
        for (std::size_t j = cut + 1; j <= out.grid.n_steps; ++j) {
            for (int i = 0; i < out.d; ++i) out.X(p, j, i) = out.X(p, cut, i);
            for (int jj = 0; jj < out.m; ++jj) out.W(p, j, jj) = out.W(p, cut, jj);
        }
        if (!out.sigma.constant) {
            for (std::size_t j = cut; j < out.grid.n_steps; ++j) {
                double* dst = out.sigma.values.at(p, j);
                for (int ij = 0; ij < out.d * out.m; ++ij) dst[ij] = 0.0;
            }
        }
    }
    return out;
}

}  // namespace rhbsde
