#pragma once

#include <string>
#include <vector>

#include "rhbsde/config.hpp"

namespace rhbsde {

// Catalog entry for one named check: what it asserts and the tolerance it
// applies when the config supplies no override.
struct CheckInfo {
    std::string name;
    std::string description;
    std::string default_tolerance;
};

// Every check the runner knows, in display order.
const std::vector<CheckInfo>& check_catalog();

struct CheckOutcome {
    std::string name;
    bool pass = false;
    Json report;  // full typed report plus the effective parameters
};

// Runs one named check against the configured problem.  Simulation and
// solves are derived from the config (primary member for single-measure
// checks, the whole family for second-order ones).  Unknown names or
// invalid parameters raise ConfigError; statistical failures come back as
// pass = false with the report attached.
CheckOutcome run_check(const ExperimentConfig& cfg, const CheckRequest& req);

// Runs cfg.checks in order and returns every outcome (no early exit).
std::vector<CheckOutcome> run_checks(const ExperimentConfig& cfg);

}  // namespace rhbsde
