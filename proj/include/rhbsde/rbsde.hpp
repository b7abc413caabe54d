#pragma once

#include <string>
#include <vector>

#include "rhbsde/bsde.hpp"
#include "rhbsde/generator.hpp"
#include "rhbsde/girsanov.hpp"
#include "rhbsde/regression.hpp"
#include "rhbsde/sde_paths.hpp"

namespace rhbsde {

// Backward solution held above a lower barrier by a minimal nondecreasing
// push K.  K(p, 0) = 0; the lift applied at t_k is K(p, k+1) - K(p, k),
// zero at and after the stop.  The per-step scheme reflects exactly, so
// (Y_k - S_k) * lift_k = 0 identically; skorokhod_residual reports the
// sampled mean of sum_k min(1, (Y_k - S_k)^+) * lift_k.
struct ReflectedSolution : BackwardSolution {
    Array2D K;
    std::vector<double> skorokhod_path;  // per-path complementarity sums
    double skorokhod_residual = 0.0;
    double binding_fraction = 0.0;       // alive steps with a positive lift

    // Horizon-truncation diagnostics (filled by solve_rbsde).
    std::vector<double> rung_n;          // deduped ladder actually run
    std::vector<double> rung_distance;   // successive weighted sup-norm gaps
    std::vector<Array2D> rung_Y;         // per-rung Y (keep_solutions only)
    bool truncation_converged = true;
};

struct RbsdeOptions {
    std::vector<double> ladder = {1.0, 2.0, 4.0, 8.0, 16.0};
    double tol = 1e-2;          // relative gap between consecutive rungs
    double norm_p = 2.0;        // exponent of the rung-distance norm
    double norm_alpha = 0.0;    // exponential weight of that norm
    bool keep_solutions = false;   // keep every rung; disables early exit
    bool require_convergence = true;  // throw if the ladder never settles
};

// Optimal-stopping value for the discounted driver f(y) = -mu * y: backward
// dynamic programming on hat-quantities e^{-mu t} Y against the discounted
// barrier, then undiscounted.  Exact per-step complementarity.
ReflectedSolution snell_envelope(const PathBundle& bundle, double discount_mu,
                                 const TerminalSpec& term, const ObstacleSpec& obstacle,
                                 const RegressionBasis& basis,
                                 const QvDensity* qv = nullptr);

// One finite-window reflected backward induction with a general driver and
// pinned per-path terminal values (the building block of solve_rbsde).
ReflectedSolution solve_rbsde_window(const PathBundle& bundle, const QvDensity& qv,
                                     const GeneratorSpec& gen,
                                     const std::vector<double>& terminal_values,
                                     const ObstacleSpec& obstacle, const RegressionBasis& basis,
                                     const PicardOptions& picard, ZMode z_mode,
                                     SolveWindow window);

// Full random-horizon reflected solve in two stages: (1) the discounted
// optimal-stopping solution supplies values beyond each truncation time;
// (2) per truncation-ladder rung, a finite-window reflected solve with the
// true driver runs up to the rung and is stitched to stage one after it.
// Rungs advance until the weighted gap between consecutive composites is
// below tol (or the ladder is exhausted).
ReflectedSolution solve_rbsde(const PathBundle& bundle, const GeneratorSpec& gen,
                              const TerminalSpec& term, const ObstacleSpec& obstacle,
                              const RegressionBasis& basis, const PicardOptions& picard = {},
                              const RbsdeOptions& options = {}, const QvDensity* qv = nullptr,
                              ZMode z_mode = ZMode::CovariationX);

// Sampled mean over paths of sum_k min(1, (Y_k - S_k)^+) * lift_k.
double skorokhod_residual(const ReflectedSolution& sol);

// Ordered data (xi <= xi', f <= f', S <= S', sampled and verified) must
// produce ordered solutions up to statistical + O(h) slack.
ComparisonReport rbsde_comparison_check(const PathBundle& bundle, const GeneratorSpec& gen,
                                        const TerminalSpec& term, const ObstacleSpec& obstacle,
                                        const GeneratorSpec& gen_prime,
                                        const TerminalSpec& term_prime,
                                        const ObstacleSpec& obstacle_prime,
                                        const RegressionBasis& basis,
                                        const PicardOptions& picard = {},
                                        const RbsdeOptions& options = {});

// Perturbation sweep under a common barrier: solves the base problem and
// the eps-interpolated problems (xi + eps*dxi, f + eps*df) for each eps,
// reporting the weighted solution distances against the data distances and
// the fitted decay exponent in eps (theory predicts order >= 1/2).
struct RbsdeStabilityReport {
    std::vector<double> eps_values;
    std::vector<double> dY_norm;       // weighted sup-norm of delta Y per eps
    std::vector<double> dZ_norm;       // weighted integral norm of delta Z
    std::vector<double> dK_norm;       // weighted total-variation of delta K
    std::vector<double> delta_xi;      // terminal data distance per eps
    std::vector<double> delta_f;       // driver data distance per eps
    double exponent = 0.0;             // log-log slope of dY_norm vs eps
    double eta = 0.0, p = 0.0;
    bool pass = false;                 // exponent >= 0.48 and decreasing
};

RbsdeStabilityReport rbsde_stability_check(const PathBundle& bundle, const GeneratorSpec& gen,
                                           const TerminalSpec& term,
                                           const ObstacleSpec& obstacle,
                                           const ObstacleSpec& obstacle_prime,
                                           double xi_shift, double f_shift,
                                           const RegressionBasis& basis, double eta, double p,
                                           const DriftControlSet& controls,
                                           const std::vector<double>& eps_values = {0.1, 0.01,
                                                                                    0.001},
                                           const PicardOptions& picard = {},
                                           const RbsdeOptions& options = {});

}  // namespace rhbsde
