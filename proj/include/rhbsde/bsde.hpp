#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rhbsde/generator.hpp"
#include "rhbsde/girsanov.hpp"
#include "rhbsde/norms.hpp"
#include "rhbsde/regression.hpp"
#include "rhbsde/sde_paths.hpp"

namespace rhbsde {

// How Z is read off the regression: from the covariation target
// dY * dX / h multiplied by the generalized inverse of a, or (Markov
// shortcut) from Y_{k+1} * dW / h adjusted by sigma.
enum class ZMode { CovariationX, BrownianW };

struct PicardOptions {
    int max_iters = 50;
    double tol = 1e-6;     // relative to 1 + sup |Y|
    bool implicit_y = false;  // per-step Newton in y instead of frozen-y sweeps
    int newton_max = 20;
    double newton_tol = 1e-12;
};

struct RegressionReport {
    std::string basis_kind;
    int basis_size = 0;
    double max_cond = 1.0;
    int min_rank = 0;
    std::string z_mode;
};

// Backward solution sampled along the bundle.  Y has a column per grid
// node; Z per step (zero at and after the stop); N_inc holds the realized
// orthogonal-residual increments (diagnostic; conditionally centered).
// coeffs_Y[k] / coeffs_Z[k] are the fitted state functions, so the solution
// can be evaluated at arbitrary states (value surfaces, tower terminals).
struct BackwardSolution {
    Array2D Y;
    Array3D Z;
    Array2D N_inc;
    std::vector<Eigen::VectorXd> coeffs_Y;  // size n_steps (index = step)
    std::vector<Eigen::MatrixXd> coeffs_Z;  // basis_size x d per step
    int picard_iters = 0;
    std::vector<double> sweep_distances;    // successive sup-norm changes
    RegressionReport regression;
    double y0_mean = 0.0;
    double y0_se = 0.0;
    double alive_at_cap = 0.0;

    double eval_Y(const Regressor& reg, std::size_t k, const Vec& x) const;
};

// Window solve: backward induction over [k_lo, k_hi] with per-path terminal
// values pinned at min(stop, k_hi).  The public solve uses the full window
// with terminal xi; tower checks reuse inner windows.
struct SolveWindow {
    std::size_t k_lo = 0;
    std::size_t k_hi = 0;  // 0 = full horizon
};

BackwardSolution solve_bsde(const PathBundle& bundle, const QvDensity& qv,
                            const GeneratorSpec& gen, const TerminalSpec& term,
                            const RegressionBasis& basis, const PicardOptions& picard = {},
                            ZMode z_mode = ZMode::CovariationX);

BackwardSolution solve_bsde_window(const PathBundle& bundle, const QvDensity& qv,
                                   const GeneratorSpec& gen,
                                   const std::vector<double>& terminal_values,
                                   const RegressionBasis& basis, const PicardOptions& picard,
                                   ZMode z_mode, SolveWindow window);

// Standalone Z read-off for a given Y process (one regression sweep).
Array3D estimate_z(const PathBundle& bundle, const QvDensity& qv, const Array2D& Y,
                   const RegressionBasis& basis, ZMode z_mode = ZMode::CovariationX,
                   RegressionReport* report = nullptr);

// Windowed variant used by the reflected solver and tower checks; coeffs_out
// (when given) receives the per-step pre-adjustment regression coefficients.
Array3D estimate_z_window(const PathBundle& bundle, const QvDensity& qv, const Array2D& Y,
                          const RegressionBasis& basis, ZMode z_mode, std::size_t k_lo,
                          std::size_t k_hi, RegressionReport* report = nullptr,
                          std::vector<Eigen::MatrixXd>* coeffs_out = nullptr);

// ---- structural checks -------------------------------------------------

// Scaling structure of the a-priori estimate: the solution norms on the
// left against the data norms on the right, re-run after doubling the data;
// the ratio must stay within a stable factor.
struct AprioriReport {
    double lhs = 0.0;           // ||Y||_D^p + ||Z||_H^p (+ N diagnostic excluded)
    double rhs = 0.0;           // ||xi||^p + (integrated driver-at-zero norm)^p
    double ratio = 0.0;
    double ratio_doubled = 0.0;
    double eta = 0.0, p = 0.0;
    bool pass = false;
};

AprioriReport apriori_check(const PathBundle& bundle, const QvDensity& qv,
                            const GeneratorSpec& gen, const TerminalSpec& term,
                            const RegressionBasis& basis, double eta, double p,
                            const DriftControlSet& controls, const PicardOptions& picard = {});

/// Ordered data produce ordered solutions: for xi <= xi' and F <= F', the
// positive part of Y - Y' must vanish up to statistical + O(h) slack.
struct ComparisonReport {
    double max_violation = 0.0;  // max over paths and steps of (Y - Y')^+
    double slack = 0.0;
    double y0 = 0.0, y0_prime = 0.0;
    bool pass = false;
};

ComparisonReport comparison_check(const PathBundle& bundle, const QvDensity& qv,
                                  const GeneratorSpec& gen, const TerminalSpec& term,
                                  const GeneratorSpec& gen_prime, const TerminalSpec& term_prime,
                                  const RegressionBasis& basis, const PicardOptions& picard = {});

/// Continuity in the data: distance between two solutions measured in the
// weighted path norm against the data distance; optionally across two
// horizons (tau vs tau truncated at time n) with the terminal-mismatch
// term evaluated under the tilt family.
struct StabilityReport {
    double lhs = 0.0;          // ||dY||_D at eta, exponent p
    double rhs = 0.0;          // data distance combination
    double ratio = 0.0;        // lhs / max(rhs, tiny)
    double terminal_mismatch = 0.0;
    double eta = 0.0, p = 0.0;
};

StabilityReport stability_check(const PathBundle& bundle, const QvDensity& qv,
                                const GeneratorSpec& gen, const TerminalSpec& term,
                                const GeneratorSpec& gen_prime, const TerminalSpec& term_prime,
                                const RegressionBasis& basis, double eta, double p,
                                const DriftControlSet& controls,
                                std::optional<double> horizon_prime = std::nullopt,
                                const PicardOptions& picard = {});

/// Hitting-time counterexample: under a fixed exponential weight the
// truncated data moment explodes along n, while the tilt-based norm of the
// same payoff stays bounded.  Reports both sequences.
struct DivergenceReport {
    std::vector<double> n_values;
    std::vector<double> weighted_moment;   // E[e^{2 L^2 (tau ^ n)} xi^2]
    std::vector<double> tilted_norm_sq;    // sup-over-tilts E[D xi^2]
    double min_growth_factor = 0.0;        // successive weighted-moment ratios
    double max_tilted_variation = 0.0;     // relative spread of tilted norms
    double survival_fraction = 0.0;        // alive at the simulation cap
    bool pass = false;                     // growth >= 2 and variation < 20%
};

DivergenceReport example_divergence(double L, const std::vector<double>& n_list,
                                    const TimeGrid& grid, std::size_t n_paths,
                                    std::uint64_t seed);

/// Pathwise occupation-style inequality for |X|:
// |X_k| - |X_0| >= sum_{j<k} sgn(X_j) dX_j for every path and index, with
// sgn(0) = 0; the gap is the accumulated local-time proxy.
struct TanakaReport {
    double violation_fraction = 0.0;  // paths violating beyond the slack
    double max_violation = 0.0;
    double mean_final_gap = 0.0;      // average accumulated gap at the stop
    bool pass = false;
};

TanakaReport tanaka_check(const PathBundle& bundle, int component = 0, double slack = 0.0);

}  // namespace rhbsde
