#pragma once

#include <string>
#include <vector>

#include "rhbsde/bsde.hpp"
#include "rhbsde/generator.hpp"
#include "rhbsde/girsanov.hpp"
#include "rhbsde/regression.hpp"
#include "rhbsde/sde_paths.hpp"

namespace rhbsde {

// Value function over a volatility menu: everything the sup-of-solvers and
// node-grid dynamic program need to exchange.
struct TwoBsdeProblem {
    MeasureFamily family;
    GeneratorSpec gen;       // the driver sees each member's sigma
    TerminalSpec term;
    DriftControlSet controls;  // tilt set used by norm/slack estimates
};

// Uniform state bins (first component) shared by value surfaces, drift
// tables and the node-grid mode.
struct StateBins {
    int n_bins = 21;
    double lo = 0.0, hi = 0.0;
    bool auto_range = true;  // take the sampled min/max, slightly padded

    double center(int b) const { return lo + (b + 0.5) * (hi - lo) / n_bins; }
    double width() const { return (hi - lo) / n_bins; }
    int locate(double x) const;
};

struct TwoBsdeOptions {
    StateBins bins;
    PicardOptions picard;
    ZMode z_mode = ZMode::CovariationX;
    bool keep_member_solutions = false;  // retain per-member path arrays
    bool keep_k_tables = false;          // retain per-path compensator sums
    double min_bin_occupancy = 0.01;     // fraction below which bins are skipped
};

struct TwoBsdeSolution {
    std::string mode;  // "sweep" or "node_grid"
    StateBins bins;
    TimeGrid grid;
    std::vector<std::string> member_names;

    Array2D V;                     // (n_steps+1) x n_bins value surface
    Array2D Z_agg;                 // n_steps x n_bins, argmax member's slope
    std::vector<std::vector<int>> argmax_member;  // (n_steps+1) x n_bins

    std::vector<BackwardSolution> per_member;     // arrays stripped by default
    std::vector<bool> member_ok;                  // solver success per member
    std::vector<std::string> member_errors;

    // Drift tables of the per-member residual U along member paths:
    // member_drift[m](k, b) is the sampled mean one-step increment of U in
    // bin b (supermartingale direction: should be <= 0 + noise), and
    // member_khat is its clamped negation (the compensator increment).
    std::vector<Array2D> member_drift;
    std::vector<Array2D> member_drift_se;
    std::vector<Array2D> member_khat;
    std::vector<Array2D> member_occupancy;        // path counts per (k, b)

    // Per-path compensator accumulations (running sums of the *unclamped*
    // negative bin drift, so conditional means over paths are unbiased
    // estimates of expected compensator increments even where the true
    // increment is zero), plus the bin index of each (path, step) state and
    // the per-path stop indices (keep_k_tables only); conditional-increment
    // checks read these instead of re-simulating.
    std::vector<Array2D> member_K_path;
    std::vector<Array2D> member_bin_index;
    std::vector<std::vector<std::uint32_t>> member_stop;

    double v0 = 0.0;
    double v0_se = 0.0;
    std::size_t argmax_member_0 = 0;

    FamilySimConfig sim;  // enough to re-simulate member bundles exactly

    double value_at(std::size_t k, double x) const;  // linear interp of V
};

// Empirical certificate of the vanishing-tail requirement: the sup-member
// survival mass 1{tau >= n} must decrease toward zero along the ladder.
struct TailCertificate {
    std::vector<double> n_values;
    std::vector<double> survival;  // max over members of mean 1{tau >= n}
    bool pass = false;             // nonincreasing and small at the end
};

TailCertificate twobsde_tail_certificate(const TwoBsdeProblem& problem,
                                         const FamilySimConfig& sim,
                                         const std::vector<double>& ladder = {1.0, 2.0, 4.0,
                                                                              8.0, 16.0});

// One BSDE per member on common random numbers; V = pointwise max of the
// member value surfaces on shared bins; U-residual drift tables extracted
// along each member's own paths.
TwoBsdeSolution solve_2bsde_sweep(const TwoBsdeProblem& problem, const RegressionBasis& basis,
                                  const FamilySimConfig& sim, const TwoBsdeOptions& options = {});

// Node-grid dynamic program maximizing over the menu pointwise in state
// (Markov data only): cross-checks the sweep and quantifies what a finite
// member menu misses when the optimal volatility is state-dependent.
TwoBsdeSolution solve_2bsde_hjb(const TwoBsdeProblem& problem, const FamilySimConfig& sim,
                                const TwoBsdeOptions& options = {});

// Minimality of the compensator: at (s, t) and each occupied bin at s, the
// minimum over members of E[K_t - K_s | bin] must vanish up to noise.
struct MinimalityReport {
    std::size_t s_index = 0, t_index = 0;
    std::vector<double> bin_centers;
    Array2D member_expected_inc;          // n_members x n_bins
    Array2D member_expected_inc_se;       // matching standard errors
    std::vector<double> min_over_members;  // per bin
    std::vector<int> argmin_member;        // per bin
    std::vector<double> occupancy_fraction;
    std::vector<double> member_total_inc;  // unconditional E[K_t - K_s]
    std::vector<double> member_total_se;
    double eps_stat = 0.0;                // slack actually applied
    double worst_min = 0.0;               // max over checked bins of the min
    bool pass = false;
};

MinimalityReport minimality_check(const TwoBsdeSolution& sol, std::size_t s_index,
                                  std::size_t t_index);

// Dynamic programming: direct value vs the two-stage composition through an
// intermediate time.
struct DppReport {
    double direct = 0.0;
    double two_stage = 0.0;
    double direct_se = 0.0;
    double two_stage_se = 0.0;
    std::vector<double> member_outer;  // outer value per member
    double abs_gap = 0.0;
    double rel_gap = 0.0;
    // Surface agreement inside the outer window: direct vs re-solved values
    // per occupied state bin at the window midpoint.
    std::size_t mid_index = 0;
    std::vector<double> bin_centers;
    std::vector<double> bin_direct;
    std::vector<double> bin_two_stage;
    std::vector<double> bin_occupancy;
    double max_bin_rel_gap = 0.0;  // over bins meeting the occupancy floor
    bool pass = false;  // within 3 combined SE (callers may tighten)
};

DppReport dpp_check(const TwoBsdeProblem& problem, double t1, const RegressionBasis& basis,
                    const FamilySimConfig& sim, const TwoBsdeOptions& options = {});

// Ordered data => ordered value surfaces (max is monotone, so the sweep
// inherits the member-level comparison).
ComparisonReport twobsde_comparison_check(const TwoBsdeProblem& problem,
                                          const TwoBsdeProblem& problem_prime,
                                          const RegressionBasis& basis,
                                          const FamilySimConfig& sim,
                                          const TwoBsdeOptions& options = {});

}  // namespace rhbsde
