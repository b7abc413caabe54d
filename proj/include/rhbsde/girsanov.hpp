#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rhbsde/arrays.hpp"
#include "rhbsde/sde_paths.hpp"

namespace rhbsde {

// Feedback drift tilt: a bounded map (t, x) -> R^m.
struct LambdaPolicy {
    std::string name;
    std::function<Vec(double t, const Vec& x)> fn;

    static LambdaPolicy zero(int m);
    static LambdaPolicy constant(const Vec& lam, const std::string& label = "");
};

// Finite set of drift tilts with a common bound L on |lambda|.  The zero
// tilt is always a member: the constructor inserts it if absent, so the
// induced sup-expectation dominates the plain mean by construction.
struct DriftControlSet {
    double bound_L = 0.0;
    std::vector<LambdaPolicy> policies;

    DriftControlSet() = default;
    DriftControlSet(double L, std::vector<LambdaPolicy> lambdas, int m);

    std::size_t size() const { return policies.size(); }
};

// Stochastic exponential along each path: D_0 = 1 and
// D_{k+1} = D_k * exp(lambda_k . dW_k - 0.5 |lambda_k|^2 h), frozen after
// the stop (dW = 0 there).  Mean 1 at every index by construction.
struct DensityProcess {
    Array2D D;  // n_paths x (n_steps+1)
    std::string policy_name;

    double at_stop(const PathBundle& b, std::size_t p) const {
        return D(p, b.stop_index[p]);
    }
};

// Result of a sup-over-tilts expectation: the achieving tilt index, the
// weighted mean there, and its standard error.
struct DominatedExpectation {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t argmax = 0;           // index into the control set
    std::string argmax_name;
    std::vector<double> per_control;  // weighted mean per tilt, set order
};

DensityProcess girsanov_density(const PathBundle& bundle, const LambdaPolicy& policy,
                                double bound_L);

// sup over the control set of E[D_stop * payoff]; payoff is one value per
// path (measurable at the stop).  Exact maximum over the finite set.
DominatedExpectation dominated_expectation(const PathBundle& bundle,
                                           const std::vector<double>& payoff,
                                           const DriftControlSet& controls);

// As above but with precomputed densities (reused across many functionals).
DominatedExpectation dominated_expectation(const PathBundle& bundle,
                                           const std::vector<double>& payoff,
                                           const std::vector<DensityProcess>& densities);

std::vector<DensityProcess> density_family(const PathBundle& bundle,
                                           const DriftControlSet& controls);

// Finite menu of volatility members standing in for the non-dominated
// family.  With the flag set, members are screened by sampling the
// driver-at-zero along their paths and rejecting non-finite values.
struct MeasureFamily {
    std::vector<VolatilitySpec> members;
    bool generator_finiteness_check = false;

    MeasureFamily() = default;
    explicit MeasureFamily(std::vector<VolatilitySpec> m, bool screen = false)
        : members(std::move(m)), generator_finiteness_check(screen) {}

    std::size_t size() const { return members.size(); }
};

// sup over volatility-family members of the dominated expectation: each
// member is simulated (common seed by default so the sup is over common
// random numbers), the payoff evaluated pathwise, then tilted.
struct FamilyExpectation {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t argmax_member = 0;
    std::string argmax_member_name;
    std::vector<double> per_member;
};

struct FamilySimConfig {
    TimeGrid grid;
    StoppingRule rule;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    bool common_seed = true;  // false derives an independent seed per member
};

FamilyExpectation family_expectation(const std::vector<VolatilitySpec>& family,
                                     const std::function<double(const StoppedPathView&)>& payoff,
                                     const DriftControlSet& controls,
                                     const FamilySimConfig& sim);

FamilyExpectation family_expectation(const MeasureFamily& family,
                                     const std::function<double(const StoppedPathView&)>& payoff,
                                     const DriftControlSet& controls,
                                     const FamilySimConfig& sim);

// Mean and standard error of weights[p] * values[p] over paths; block-wise
// deterministic reduction.
void weighted_mean_se(const std::vector<double>& values, const std::vector<double>& weights,
                      double& mean, double& se);

}  // namespace rhbsde
