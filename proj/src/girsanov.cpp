#include "rhbsde/girsanov.hpp"

#include <cmath>

#include "rhbsde/errors.hpp"
#include "rhbsde/parallel.hpp"
#include "rhbsde/rng.hpp"

namespace rhbsde {

LambdaPolicy LambdaPolicy::zero(int m) {
    LambdaPolicy p;
    p.name = "zero";
    p.fn = [m](double, const Vec&) { return Vec::Zero(m); };
    return p;
}

LambdaPolicy LambdaPolicy::constant(const Vec& lam, const std::string& label) {
    LambdaPolicy p;
    p.name = label.empty() ? "const|" + std::to_string(lam.norm()) : label;
    Vec v = lam;
    p.fn = [v](double, const Vec&) { return v; };
    return p;
}

DriftControlSet::DriftControlSet(double L, std::vector<LambdaPolicy> lambdas, int m)
    : bound_L(L), policies(std::move(lambdas)) {
    if (L < 0.0) throw ConfigError("DriftControlSet: bound must be nonnegative");
    bool has_zero = false;
    for (const auto& p : policies) {
        if (p.name == "zero") has_zero = true;
    }
    if (!has_zero) policies.insert(policies.begin(), LambdaPolicy::zero(m));
}

DensityProcess girsanov_density(const PathBundle& bundle, const LambdaPolicy& policy,
                                double bound_L) {
    const std::size_t n = bundle.grid.n_steps;
    const double h = bundle.grid.step_h;
    DensityProcess out;
    out.policy_name = policy.name;
    out.D = Array2D(bundle.n_paths, n + 1, 1.0);
    const double bound = bound_L * (1.0 + 1e-12);

    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        Vec x(bundle.d), lam(bundle.m);
        for (std::size_t p = lo; p < hi; ++p) {
            const std::size_t stop = bundle.stop_index[p];
            double logd = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                if (k < stop) {
                    for (int i = 0; i < bundle.d; ++i) x[i] = bundle.X(p, k, i);
                    lam = policy.fn(bundle.grid.t(k), x);
                    const double lam2 = lam.squaredNorm();
                    if (lam2 > bound * bound) {
                        throw SolverError("girsanov_density: |lambda| exceeds the control bound");
                    }
                    double dot = 0.0;
                    for (int j = 0; j < bundle.m; ++j) {
                        dot += lam[j] * (bundle.W(p, k + 1, j) - bundle.W(p, k, j));
                    }
                    logd += dot - 0.5 * lam2 * h;
                }
                out.D(p, k + 1) = std::exp(logd);
            }
        }
    });
    return out;
}

void weighted_mean_se(const std::vector<double>& values, const std::vector<double>& weights,
                      double& mean, double& se) {
    const std::size_t n = values.size();
    const std::size_t n_blocks = (n + kBlockSize - 1) / kBlockSize;
    std::vector<double> s1(n_blocks, 0.0), s2(n_blocks, 0.0);
    parallel_blocks(n, [&](std::size_t lo, std::size_t hi) {
        const std::size_t b = lo / kBlockSize;
        double a1 = 0.0, a2 = 0.0;
        for (std::size_t p = lo; p < hi; ++p) {
            const double v = weights.empty() ? values[p] : values[p] * weights[p];
            a1 += v;
            a2 += v * v;
        }
        s1[b] = a1;
        s2[b] = a2;
    });
    double t1 = 0.0, t2 = 0.0;
    for (std::size_t b = 0; b < n_blocks; ++b) {
        t1 += s1[b];
        t2 += s2[b];
    }
    mean = t1 / static_cast<double>(n);
    const double var = std::max(0.0, t2 / static_cast<double>(n) - mean * mean);
    se = std::sqrt(var / static_cast<double>(n));
}

std::vector<DensityProcess> density_family(const PathBundle& bundle,
                                           const DriftControlSet& controls) {
    std::vector<DensityProcess> out;
    // A default-constructed (empty) control set means "no tilting": the
    // family degenerates to the zero tilt and every dominated expectation
    // reduces to the plain sample mean.
    if (controls.policies.empty()) {
        out.push_back(girsanov_density(bundle, LambdaPolicy::zero(bundle.m), 0.0));
        return out;
    }
    out.reserve(controls.size());
    for (const auto& pol : controls.policies) {
        out.push_back(girsanov_density(bundle, pol, controls.bound_L));
    }
    return out;
}

DominatedExpectation dominated_expectation(const PathBundle& bundle,
                                           const std::vector<double>& payoff,
                                           const std::vector<DensityProcess>& densities) {
    if (payoff.size() != bundle.n_paths) {
        throw ConfigError("dominated_expectation: payoff size mismatch");
    }
    if (densities.empty()) throw ConfigError("dominated_expectation: empty control set");
    DominatedExpectation out;
    out.per_control.reserve(densities.size());
    std::vector<double> w(bundle.n_paths);
    bool first = true;
    for (std::size_t c = 0; c < densities.size(); ++c) {
        for (std::size_t p = 0; p < bundle.n_paths; ++p) {
            w[p] = densities[c].at_stop(bundle, p);
        }
        double mean = 0.0, se = 0.0;
        weighted_mean_se(payoff, w, mean, se);
        out.per_control.push_back(mean);
        if (first || mean > out.value) {
            out.value = mean;
            out.std_error = se;
            out.argmax = c;
            out.argmax_name = densities[c].policy_name;
            first = false;
        }
    }
    return out;
}

DominatedExpectation dominated_expectation(const PathBundle& bundle,
                                           const std::vector<double>& payoff,
                                           const DriftControlSet& controls) {
    return dominated_expectation(bundle, payoff, density_family(bundle, controls));
}

FamilyExpectation family_expectation(const std::vector<VolatilitySpec>& family,
                                     const std::function<double(const StoppedPathView&)>& payoff,
                                     const DriftControlSet& controls,
                                     const FamilySimConfig& sim) {
    if (family.empty()) throw ConfigError("family_expectation: empty family");
    FamilyExpectation out;
    bool first = true;
    for (std::size_t i = 0; i < family.size(); ++i) {
        const std::uint64_t seed =
            sim.common_seed ? sim.seed : CounterRng::derive(sim.seed, i);
        const PathBundle b = simulate_paths(family[i], sim.rule, sim.grid, sim.n_paths, seed);
        std::vector<double> pay(b.n_paths);
        parallel_blocks(b.n_paths, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t p = lo; p < hi; ++p) pay[p] = payoff(StoppedPathView{&b, p});
        });
        const DominatedExpectation de = dominated_expectation(b, pay, controls);
        out.per_member.push_back(de.value);
        if (first || de.value > out.value) {
            out.value = de.value;
            out.std_error = de.std_error;
            out.argmax_member = i;
            out.argmax_member_name = family[i].name;
            first = false;
        }
    }
    return out;
}

FamilyExpectation family_expectation(const MeasureFamily& family,
                                     const std::function<double(const StoppedPathView&)>& payoff,
                                     const DriftControlSet& controls,
                                     const FamilySimConfig& sim) {
    return family_expectation(family.members, payoff, controls, sim);
}

}  // namespace rhbsde
