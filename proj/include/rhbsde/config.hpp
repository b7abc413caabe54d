#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rhbsde/io.hpp"
#include "rhbsde/rbsde.hpp"
#include "rhbsde/twobsde.hpp"

namespace rhbsde {

inline constexpr const char* kLibraryVersion = "1.0.0";
inline constexpr int kConfigVersion = 1;

// One named check with its raw parameter object; resolution happens in the
// check registry.
struct CheckRequest {
    std::string name;
    Json params;
};

// A fully resolved experiment: problem data, numerics, requested outputs
// and checks.  `resolved` echoes every effective setting (defaults applied)
// and is embedded into the run manifest, so an artifact directory can be
// regenerated from its manifest alone.
struct ExperimentConfig {
    int version = kConfigVersion;
    std::string mode = "bsde";  // simulate | bsde | rbsde | 2bsde

    GeneratorSpec gen;
    TerminalSpec term;
    ObstacleSpec obstacle = ObstacleSpec::unconstrained();
    StoppingRule rule;
    MeasureFamily family;  // >= 1 member; single-measure modes use members[0]
    DriftControlSet controls;

    TimeGrid grid{1.0, 1};
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    RegressionBasis basis;
    PicardOptions picard;
    ZMode z_mode = ZMode::CovariationX;
    RbsdeOptions rbsde;
    TwoBsdeOptions twobsde;
    int threads = 0;
    double norm_eta = 0.0;  // window-validated defaults for norm-based checks
    double norm_p = 2.0;

    std::vector<std::pair<std::string, std::string>> outputs;  // slot -> filename
    std::string sweep_axis;  // empty = no sweep section
    std::vector<double> sweep_values;
    std::vector<CheckRequest> checks;

    Json resolved;

    const VolatilitySpec& primary_vol() const { return family.members.front(); }
    FamilySimConfig sim_config() const {
        FamilySimConfig s;
        s.grid = grid;
        s.rule = rule;
        s.n_paths = n_paths;
        s.seed = seed;
        return s;
    }
};

// Parses and validates; collects every violated admissibility window into
// one ConfigError so a bad file is fixed in one pass.
ExperimentConfig parse_config(const Json& j);
ExperimentConfig load_config_file(const std::string& path);

// FNV-1a over the canonical serialization; manifest identity.
std::string config_hash(const Json& resolved);

// {library_version, config_version, config_hash, seed, config}.
Json make_manifest(const ExperimentConfig& cfg);

}  // namespace rhbsde
