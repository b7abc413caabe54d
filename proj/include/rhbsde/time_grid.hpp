#pragma once

#include <cmath>
#include <cstddef>

#include "rhbsde/errors.hpp"

namespace rhbsde {

// Uniform grid t_k = k*h, k = 0..n_steps.  horizon_cap() = h*n_steps is the
// largest time any path can reach; stopping rules are truncated there.
struct TimeGrid {
    double step_h = 0.0;
    std::size_t n_steps = 0;

    TimeGrid() = default;
    TimeGrid(double h, std::size_t n) : step_h(h), n_steps(n) {
        if (!(h > 0.0)) throw ConfigError("TimeGrid: step_h must be positive");
        if (n == 0) throw ConfigError("TimeGrid: n_steps must be positive");
    }

    double t(std::size_t k) const { return step_h * static_cast<double>(k); }
    double horizon_cap() const { return step_h * static_cast<double>(n_steps); }

    // Nearest grid index for a time value; the time must sit on the grid up
    // to round-off (callers pass times like truncation levels n*1.0).
    std::size_t index_of(double time) const {
        if (time < -1e-12) throw ConfigError("TimeGrid: negative time");
        const double r = time / step_h;
        const auto k = static_cast<std::size_t>(std::llround(r));
        if (k > n_steps) throw ConfigError("TimeGrid: time beyond horizon cap");
        return k;
    }
};

}  // namespace rhbsde
