#pragma once

#include <cstddef>
#include <string>

#include "json.hpp"
#include "rhbsde/bsde.hpp"
#include "rhbsde/norms.hpp"
#include "rhbsde/rbsde.hpp"
#include "rhbsde/sde_paths.hpp"
#include "rhbsde/twobsde.hpp"

namespace rhbsde {

// Insertion-ordered JSON: equal inputs serialize to byte-identical files.
using Json = nlohmann::ordered_json;

void write_text_file(const std::string& path, const std::string& content);

// Fixed layout (two-space indent, '\n' separators, trailing newline).
void write_json_file(const std::string& path, const Json& j);

// ---- report serializers (summaries; never the path arrays) --------------
Json json_of(const NormReport& r);
Json json_of(const DoobReport& r);
Json json_of(const RegressionReport& r);
Json json_of(const BackwardSolution& sol);
Json json_of(const ReflectedSolution& sol);
Json json_of(const AprioriReport& r);
Json json_of(const ComparisonReport& r);
Json json_of(const StabilityReport& r);
Json json_of(const RbsdeStabilityReport& r);
Json json_of(const DivergenceReport& r);
Json json_of(const TanakaReport& r);
Json json_of(const TwoBsdeSolution& sol);
Json json_of(const MinimalityReport& r);
Json json_of(const DppReport& r);
Json json_of(const TailCertificate& r);

// ---- bundle snapshots ----------------------------------------------------
// Flat little-endian binary layout (documented in the README): magic
// "RHBN", format version, dimensions, grid step, seed, x0, the sigma
// samples, then the X / W arrays, stop indices and cap flags, all
// row-major.  load_bundle rejects wrong magic, version, or truncation.
void save_bundle(const PathBundle& bundle, const std::string& path);
PathBundle load_bundle(const std::string& path);

// Long-format CSV (path, step, t, X..., W..., stopped flag); intended for
// small instances — max_paths = 0 writes every path.
void write_bundle_csv(const PathBundle& bundle, const std::string& path,
                      std::size_t max_paths = 0);

// ---- solution exports ----------------------------------------------------
// Bin-averaged surfaces on the first state component:
//   t, bin, center, n_y, y_mean, n_z, z_mean            (plain)
//   ... plus dk_mean, binding_fraction                   (reflected)
void write_solution_csv(const PathBundle& bundle, const BackwardSolution& sol,
                        const StateBins& bins, const std::string& path);
void write_reflected_csv(const PathBundle& bundle, const ReflectedSolution& sol,
                         const StateBins& bins, const std::string& path);

// Value-surface table: t, bin, center, V, argmax_member, Z (Z blank on the
// terminal row).
void write_value_surface_csv(const TwoBsdeSolution& sol, const std::string& path);

}  // namespace rhbsde
