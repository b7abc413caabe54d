#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rhbsde/arrays.hpp"
#include "rhbsde/time_grid.hpp"

namespace rhbsde {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Diffusion coefficient of a driftless Ito process dX = sigma(t, X) dW,
// X_0 = x0.  d = state dimension, m = driving Brownian dimension.
struct VolatilitySpec {
    int d = 1;
    int m = 1;
    Vec x0;            // initial state; defaults to the origin
    double sigma_bound = 0.0;  // uniform bound on the operator norm
    bool constant = false;
    Mat const_sigma;   // used when constant
    std::function<Mat(double t, const Vec& x)> sigma_fn;  // used otherwise
    std::string name;  // label carried into reports (family member id)

    static VolatilitySpec scalar_constant(double s, double x0_val = 0.0,
                                          const std::string& label = "");
    static VolatilitySpec matrix_constant(const Mat& s, const Vec& x0_vec,
                                          const std::string& label = "");
    static VolatilitySpec callable(int d, int m, const Vec& x0_vec, double bound,
                                   std::function<Mat(double, const Vec&)> fn,
                                   const std::string& label = "");

    Mat sigma_at(double t, const Vec& x) const { return constant ? const_sigma : sigma_fn(t, x); }
};

// First grid time a path is considered stopped.  Decisions at t_k use only
// values up to t_k (nonanticipative); every rule is truncated at the cap.
struct StoppingRule {
    enum class Kind { Deterministic, ExitOfBox, HittingLevel, MinOf };

    Kind kind = Kind::Deterministic;
    double time = 1.0;            // Deterministic
    Vec lower, upper;             // ExitOfBox: stop once X leaves (lower, upper)
    int component = 0;            // HittingLevel
    double level = 1.0;           // HittingLevel: stop once X[component] >= level
    std::vector<StoppingRule> parts;  // MinOf

    // Brownian-bridge crossing correction for one-dimensional ExitOfBox /
    // HittingLevel rules.  Plain grid monitoring misses excursions between
    // grid points and overstates exit times by O(sigma * sqrt(h)); with the
    // correction, a path whose endpoints straddle no barrier still stops at
    // the next grid index with the bridge crossing probability
    // exp(-2 d_k d_{k+1} / (sigma^2 h)), and the stopped state is projected
    // onto the crossed barrier.  Ignored for multi-dimensional states and
    // for MinOf composites (those keep plain grid detection).
    bool bridge = true;

    static StoppingRule deterministic(double T);
    static StoppingRule exit_of_box(const Vec& lo, const Vec& hi);
    static StoppingRule hitting_level(int comp, double lvl);
    static StoppingRule min_of(std::vector<StoppingRule> rules);

    bool fires(double t, const Vec& x) const;
};

// Per-(path, step) diffusion samples.  Constant specs store one matrix; the
// varying case stores n_paths x n_steps matrices of shape d x m.
struct SigmaSamples {
    bool constant = true;
    int d = 1, m = 1;
    Mat const_value;
    Array3D values;  // rows = paths, cols = steps, depth = d*m

    Eigen::Map<const Mat> at(std::size_t p, std::size_t k) const {
        if (constant) return {const_value.data(), const_value.rows(), const_value.cols()};
        return {values.at(p, k), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m)};
    }
};

// Simulated ensemble.  Invariants: X[.,0,.] = x0 and W[.,0,.] = 0; both
// arrays are frozen (constant) at indices past stop_index; stop_index is in
// [0, n_steps]; capped[p] = 1 when the rule never fired and the horizon cap
// stopped the path.
struct PathBundle {
    TimeGrid grid;
    std::size_t n_paths = 0;
    int d = 1, m = 1;
    Vec x0;
    std::uint64_t seed = 0;
    Array3D X;  // n_paths x (n_steps+1) x d
    Array3D W;  // n_paths x (n_steps+1) x m
    std::vector<std::uint32_t> stop_index;
    std::vector<std::uint8_t> capped;
    SigmaSamples sigma;

    double stop_time(std::size_t p) const { return grid.t(stop_index[p]); }
    double alive_at_cap_fraction() const;

    // State at time t on the stopped path: because arrays freeze at the
    // stop, reading index_of(t) yields X_{t ^ tau} exactly.
    Eigen::Map<const Vec> state_at(std::size_t p, std::size_t k) const {
        return {X.at(p, k), static_cast<Eigen::Index>(d)};
    }
};

// Read-only view of one stopped path; terminal payoffs consume this.
struct StoppedPathView {
    const PathBundle* bundle = nullptr;
    std::size_t p = 0;

    const TimeGrid& grid() const { return bundle->grid; }
    std::size_t stop_index() const { return bundle->stop_index[p]; }
    double stop_time() const { return bundle->stop_time(p); }
    bool capped() const { return bundle->capped[p] != 0; }
    Eigen::Map<const Vec> state(std::size_t k) const { return bundle->state_at(p, k); }
    Eigen::Map<const Vec> state_at_stop() const { return bundle->state_at(p, stop_index()); }
    // X at t ^ tau; valid for any t up to the cap.
    Eigen::Map<const Vec> state_at_time(double t) const {
        return bundle->state_at(p, bundle->grid.index_of(t));
    }
};

// Quadratic-variation density a = sigma sigma^T per (path, step) and its
// spectral generalized inverse: eigenvalues at or below the cutoff invert
// to zero.  A cutoff of 0 selects the default 1e-10 * (largest eigenvalue),
// applied per matrix.
struct QvDensity {
    bool constant = true;
    int d = 1;
    Mat const_a, const_a_pinv;
    Array3D a;       // depth d*d
    Array3D a_pinv;  // depth d*d

    Eigen::Map<const Mat> a_at(std::size_t p, std::size_t k) const {
        if (constant) return {const_a.data(), const_a.rows(), const_a.cols()};
        return {a.at(p, k), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)};
    }
    Eigen::Map<const Mat> pinv_at(std::size_t p, std::size_t k) const {
        if (constant) return {const_a_pinv.data(), const_a_pinv.rows(), const_a_pinv.cols()};
        return {a_pinv.at(p, k), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)};
    }
};

// Euler scheme for dX = sigma dW with per-path counter-derived streams;
// results are independent of shard count and bit-reproducible for a seed.
PathBundle simulate_paths(const VolatilitySpec& spec, const StoppingRule& rule,
                          const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed);

QvDensity quadratic_variation_density(const PathBundle& bundle, double eig_cutoff = 0.0);

// Caps every stop index at time `n`; values past the new stop re-freeze so
// the bundle invariant is preserved.
PathBundle truncate_horizon(const PathBundle& bundle, double n);

// Spectral pseudo-inverse used for QV densities (shared with regression
// internals): symmetric part eigendecomposition with relative cutoff.
Mat spectral_pinv(const Mat& a, double eig_cutoff);

}  // namespace rhbsde
