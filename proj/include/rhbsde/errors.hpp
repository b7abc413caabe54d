#pragma once

#include <stdexcept>
#include <string>

namespace rhbsde {

// Invalid user input: malformed config, parameter outside its admissible
// window, inconsistent dimensions.  CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure inside a solver: divergent Picard loop, singular
// regression, Newton stall.  Carries enough text to diagnose the run.
struct SolverError : std::runtime_error {
    explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

// A named check evaluated to fail.  CLI maps this to exit code 1.
struct CheckFailure : std::runtime_error {
    explicit CheckFailure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rhbsde
