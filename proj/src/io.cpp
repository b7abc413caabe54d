#include "rhbsde/io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "rhbsde/errors.hpp"

namespace rhbsde {

namespace {

// Shortest-exact decimal for CSV cells; round-trips a double and is stable
// across runs of one build.
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void put_bytes(std::ofstream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put_pod(std::ofstream& out, T v) {
    put_bytes(out, &v, sizeof(T));
}

void get_bytes(std::ifstream& in, void* p, std::size_t n, const std::string& path) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw ConfigError("bundle file truncated: " + path);
    }
}

template <typename T>
T get_pod(std::ifstream& in, const std::string& path) {
    T v{};
    get_bytes(in, &v, sizeof(T), path);
    return v;
}

constexpr std::uint32_t kBundleVersion = 1;

Json json_of_rungs(const ReflectedSolution& sol) {
    Json j = Json::object();
    j["rung_n"] = sol.rung_n;
    j["rung_distance"] = sol.rung_distance;
    j["truncation_converged"] = sol.truncation_converged;
    return j;
}

}  // namespace

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ConfigError("write failed: " + path);
}

void write_json_file(const std::string& path, const Json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

Json json_of(const NormReport& r) {
    Json j = Json::object();
    j["norm_kind"] = r.norm_kind;
    j["p"] = r.p;
    j["alpha"] = r.alpha;
    j["value"] = r.value;
    j["std_error"] = r.std_error;
    j["mean_power"] = r.mean_power;
    j["argmax_control"] = r.argmax_control;
    return j;
}

Json json_of(const DoobReport& r) {
    Json j = Json::object();
    j["lhs"] = r.lhs;
    j["rhs"] = r.rhs;
    j["lhs_se"] = r.lhs_se;
    j["rhs_se"] = r.rhs_se;
    j["slack"] = r.slack;
    j["pass"] = r.pass;
    return j;
}

Json json_of(const RegressionReport& r) {
    Json j = Json::object();
    j["basis_kind"] = r.basis_kind;
    j["basis_size"] = r.basis_size;
    j["max_cond"] = r.max_cond;
    j["min_rank"] = r.min_rank;
    j["z_mode"] = r.z_mode;
    return j;
}

Json json_of(const BackwardSolution& sol) {
    Json j = Json::object();
    j["y0_mean"] = sol.y0_mean;
    j["y0_se"] = sol.y0_se;
    j["picard_iters"] = sol.picard_iters;
    j["sweep_distances"] = sol.sweep_distances;
    j["alive_at_cap"] = sol.alive_at_cap;
    j["regression"] = json_of(sol.regression);
    return j;
}

Json json_of(const ReflectedSolution& sol) {
    Json j = json_of(static_cast<const BackwardSolution&>(sol));
    j["skorokhod_residual"] = sol.skorokhod_residual;
    j["binding_fraction"] = sol.binding_fraction;
    j["truncation"] = json_of_rungs(sol);
    return j;
}

Json json_of(const AprioriReport& r) {
    Json j = Json::object();
    j["lhs"] = r.lhs;
    j["rhs"] = r.rhs;
    j["ratio"] = r.ratio;
    j["ratio_doubled"] = r.ratio_doubled;
    j["eta"] = r.eta;
    j["p"] = r.p;
    j["pass"] = r.pass;
    return j;
}

Json json_of(const ComparisonReport& r) {
    Json j = Json::object();
    j["max_violation"] = r.max_violation;
    j["slack"] = r.slack;
    j["y0"] = r.y0;
    j["y0_prime"] = r.y0_prime;
    j["pass"] = r.pass;
    return j;
}

Json json_of(const StabilityReport& r) {
    Json j = Json::object();
    j["lhs"] = r.lhs;
    j["rhs"] = r.rhs;
    j["ratio"] = r.ratio;
    j["terminal_mismatch"] = r.terminal_mismatch;
    j["eta"] = r.eta;
    j["p"] = r.p;
    return j;
}

Json json_of(const RbsdeStabilityReport& r) {
    Json j = Json::object();
    j["eps_values"] = r.eps_values;
    j["dY_norm"] = r.dY_norm;
    j["dZ_norm"] = r.dZ_norm;
    j["dK_norm"] = r.dK_norm;
    j["delta_xi"] = r.delta_xi;
    j["delta_f"] = r.delta_f;
    j["exponent"] = r.exponent;
    j["eta"] = r.eta;
    j["p"] = r.p;
    j["pass"] = r.pass;
    return j;
}

Json json_of(const DivergenceReport& r) {
    Json j = Json::object();
    j["n_values"] = r.n_values;
    j["weighted_moment"] = r.weighted_moment;
    j["tilted_norm_sq"] = r.tilted_norm_sq;
    j["min_growth_factor"] = r.min_growth_factor;
    j["max_tilted_variation"] = r.max_tilted_variation;
    j["survival_fraction"] = r.survival_fraction;
    j["pass"] = r.pass;
    return j;
}

Json json_of(const TanakaReport& r) {
    Json j = Json::object();
    j["violation_fraction"] = r.violation_fraction;
    j["max_violation"] = r.max_violation;
    j["mean_final_gap"] = r.mean_final_gap;
    j["pass"] = r.pass;
    return j;
}

Json json_of(const TwoBsdeSolution& sol) {
    Json j = Json::object();
    j["mode"] = sol.mode;
    j["v0"] = sol.v0;
    j["v0_se"] = sol.v0_se;
    j["argmax_member_0"] = sol.argmax_member_0;
    j["member_names"] = sol.member_names;
    Json ok = Json::array();
    for (std::size_t m = 0; m < sol.member_ok.size(); ++m) {
        ok.push_back(static_cast<bool>(sol.member_ok[m]));
    }
    j["member_ok"] = ok;
    j["member_errors"] = sol.member_errors;
    Json member_y0 = Json::array();
    for (const auto& ms : sol.per_member) member_y0.push_back(ms.y0_mean);
    j["member_y0"] = member_y0;
    Json bins = Json::object();
    bins["n_bins"] = sol.bins.n_bins;
    bins["lo"] = sol.bins.lo;
    bins["hi"] = sol.bins.hi;
    j["bins"] = bins;
    return j;
}

Json json_of(const MinimalityReport& r) {
    Json j = Json::object();
    j["s_index"] = r.s_index;
    j["t_index"] = r.t_index;
    j["bin_centers"] = r.bin_centers;
    j["min_over_members"] = r.min_over_members;
    j["argmin_member"] = r.argmin_member;
    j["occupancy_fraction"] = r.occupancy_fraction;
    j["member_total_inc"] = r.member_total_inc;
    j["member_total_se"] = r.member_total_se;
    j["eps_stat"] = r.eps_stat;
    j["worst_min"] = r.worst_min;
    j["pass"] = r.pass;
    return j;
}

Json json_of(const DppReport& r) {
    Json j = Json::object();
    j["direct"] = r.direct;
    j["two_stage"] = r.two_stage;
    j["direct_se"] = r.direct_se;
    j["two_stage_se"] = r.two_stage_se;
    j["member_outer"] = r.member_outer;
    j["abs_gap"] = r.abs_gap;
    j["rel_gap"] = r.rel_gap;
    j["mid_index"] = r.mid_index;
    j["bin_centers"] = r.bin_centers;
    j["bin_direct"] = r.bin_direct;
    j["bin_two_stage"] = r.bin_two_stage;
    j["bin_occupancy"] = r.bin_occupancy;
    j["max_bin_rel_gap"] = r.max_bin_rel_gap;
    j["pass"] = r.pass;
    return j;
}

Json json_of(const TailCertificate& r) {
    Json j = Json::object();
    j["n_values"] = r.n_values;
    j["survival"] = r.survival;
    j["pass"] = r.pass;
    return j;
}

void save_bundle(const PathBundle& bundle, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    put_bytes(out, "RHBN", 4);
    put_pod<std::uint32_t>(out, kBundleVersion);
    put_pod<std::uint64_t>(out, bundle.n_paths);
    put_pod<std::uint64_t>(out, bundle.grid.n_steps);
    put_pod<std::uint32_t>(out, static_cast<std::uint32_t>(bundle.d));
    put_pod<std::uint32_t>(out, static_cast<std::uint32_t>(bundle.m));
    put_pod<double>(out, bundle.grid.step_h);
    put_pod<std::uint64_t>(out, bundle.seed);
    for (int c = 0; c < bundle.d; ++c) put_pod<double>(out, bundle.x0[c]);
    put_pod<std::uint8_t>(out, bundle.sigma.constant ? 1 : 0);
    if (bundle.sigma.constant) {
        for (int r = 0; r < bundle.d; ++r) {
            for (int c = 0; c < bundle.m; ++c) put_pod<double>(out, bundle.sigma.const_value(r, c));
        }
    } else {
        put_bytes(out, bundle.sigma.values.data.data(),
                  bundle.sigma.values.data.size() * sizeof(double));
    }
    put_bytes(out, bundle.X.data.data(), bundle.X.data.size() * sizeof(double));
    put_bytes(out, bundle.W.data.data(), bundle.W.data.size() * sizeof(double));
    put_bytes(out, bundle.stop_index.data(), bundle.stop_index.size() * sizeof(std::uint32_t));
    put_bytes(out, bundle.capped.data(), bundle.capped.size() * sizeof(std::uint8_t));
    if (!out) throw ConfigError("write failed: " + path);
}

PathBundle load_bundle(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open: " + path);
    char magic[4];
    get_bytes(in, magic, 4, path);
    if (std::memcmp(magic, "RHBN", 4) != 0) {
        throw ConfigError("not a bundle file (bad magic): " + path);
    }
    const auto version = get_pod<std::uint32_t>(in, path);
    if (version != kBundleVersion) {
        throw ConfigError("unsupported bundle version " + std::to_string(version) + ": " + path);
    }
    const auto n_paths = get_pod<std::uint64_t>(in, path);
    const auto n_steps = get_pod<std::uint64_t>(in, path);
    const auto d = static_cast<int>(get_pod<std::uint32_t>(in, path));
    const auto m = static_cast<int>(get_pod<std::uint32_t>(in, path));
    const auto h = get_pod<double>(in, path);
    const auto seed = get_pod<std::uint64_t>(in, path);
    if (n_paths == 0 || n_steps == 0 || d <= 0 || m <= 0 || !(h > 0.0)) {
        throw ConfigError("bundle header invalid: " + path);
    }

    PathBundle b;
    b.grid = TimeGrid(h, n_steps);
    b.n_paths = n_paths;
    b.d = d;
    b.m = m;
    b.seed = seed;
    b.x0 = Vec(d);
    for (int c = 0; c < d; ++c) b.x0[c] = get_pod<double>(in, path);
    const auto constant = get_pod<std::uint8_t>(in, path);
    b.sigma.constant = constant != 0;
    b.sigma.d = d;
    b.sigma.m = m;
    if (b.sigma.constant) {
        b.sigma.const_value = Mat(d, m);
        for (int r = 0; r < d; ++r) {
            for (int c = 0; c < m; ++c) b.sigma.const_value(r, c) = get_pod<double>(in, path);
        }
    } else {
        b.sigma.values = Array3D(n_paths, n_steps, static_cast<std::size_t>(d) * m);
        get_bytes(in, b.sigma.values.data.data(), b.sigma.values.data.size() * sizeof(double),
                  path);
    }
    b.X = Array3D(n_paths, n_steps + 1, d);
    get_bytes(in, b.X.data.data(), b.X.data.size() * sizeof(double), path);
    b.W = Array3D(n_paths, n_steps + 1, m);
    get_bytes(in, b.W.data.data(), b.W.data.size() * sizeof(double), path);
    b.stop_index.resize(n_paths);
    get_bytes(in, b.stop_index.data(), n_paths * sizeof(std::uint32_t), path);
    b.capped.resize(n_paths);
    get_bytes(in, b.capped.data(), n_paths * sizeof(std::uint8_t), path);
    for (std::size_t p = 0; p < n_paths; ++p) {
        if (b.stop_index[p] > n_steps) {
            throw ConfigError("bundle stop index out of range: " + path);
        }
    }
    return b;
}

void write_bundle_csv(const PathBundle& bundle, const std::string& path,
                      std::size_t max_paths) {
    std::string out;
    out += "path,step,t";
    for (int c = 0; c < bundle.d; ++c) out += ",x" + std::to_string(c);
    for (int c = 0; c < bundle.m; ++c) out += ",w" + std::to_string(c);
    out += ",stopped\n";
    const std::size_t limit =
        max_paths == 0 ? bundle.n_paths : std::min(max_paths, bundle.n_paths);
    for (std::size_t p = 0; p < limit; ++p) {
        for (std::size_t k = 0; k <= bundle.grid.n_steps; ++k) {
            out += std::to_string(p) + ',' + std::to_string(k) + ',' + fmt(bundle.grid.t(k));
            for (int c = 0; c < bundle.d; ++c) out += ',' + fmt(bundle.X(p, k, c));
            for (int c = 0; c < bundle.m; ++c) out += ',' + fmt(bundle.W(p, k, c));
            out += k >= bundle.stop_index[p] ? ",1\n" : ",0\n";
        }
    }
    write_text_file(path, out);
}

namespace {

// Common body of the solution exports; emits the reflected extras only
// when dK data is supplied.
void write_binned_csv(const PathBundle& bundle, const BackwardSolution& sol,
                      const Array2D* K, const StateBins& bins, const std::string& path) {
    const std::size_t n = bundle.grid.n_steps;
    std::string out = K ? "t,bin,center,n_y,y_mean,n_z,z_mean,dk_mean,binding_fraction\n"
                        : "t,bin,center,n_y,y_mean,n_z,z_mean\n";
    for (std::size_t k = 0; k <= n; ++k) {
        std::vector<double> ysum(bins.n_bins, 0.0), yn(bins.n_bins, 0.0);
        std::vector<double> zsum(bins.n_bins, 0.0), zn(bins.n_bins, 0.0);
        std::vector<double> ksum(bins.n_bins, 0.0), kbind(bins.n_bins, 0.0);
        for (std::size_t p = 0; p < bundle.n_paths; ++p) {
            if (bundle.stop_index[p] < k) continue;
            const int b = bins.locate(bundle.X(p, k, 0));
            ysum[b] += sol.Y(p, k);
            yn[b] += 1.0;
            if (k < n && bundle.stop_index[p] > k) {
                zsum[b] += sol.Z(p, k, 0);
                zn[b] += 1.0;
                if (K) {
                    const double dk = (*K)(p, k + 1) - (*K)(p, k);
                    ksum[b] += dk;
                    if (dk > 0.0) kbind[b] += 1.0;
                }
            }
        }
        for (int b = 0; b < bins.n_bins; ++b) {
            if (yn[b] == 0.0) continue;
            out += fmt(bundle.grid.t(k)) + ',' + std::to_string(b) + ',' + fmt(bins.center(b));
            out += ',' + fmt(yn[b]) + ',' + fmt(ysum[b] / yn[b]);
            out += ',' + fmt(zn[b]) + ',' + fmt(zn[b] > 0.0 ? zsum[b] / zn[b] : 0.0);
            if (K) {
                out += ',' + fmt(zn[b] > 0.0 ? ksum[b] / zn[b] : 0.0);
                out += ',' + fmt(zn[b] > 0.0 ? kbind[b] / zn[b] : 0.0);
            }
            out += '\n';
        }
    }
    write_text_file(path, out);
}

}  // namespace

void write_solution_csv(const PathBundle& bundle, const BackwardSolution& sol,
                        const StateBins& bins, const std::string& path) {
    if (sol.Y.empty()) throw ConfigError("solution export: Y samples are not retained");
    write_binned_csv(bundle, sol, nullptr, bins, path);
}

void write_reflected_csv(const PathBundle& bundle, const ReflectedSolution& sol,
                         const StateBins& bins, const std::string& path) {
    if (sol.Y.empty() || sol.K.empty()) {
        throw ConfigError("solution export: arrays are not retained");
    }
    write_binned_csv(bundle, sol, &sol.K, bins, path);
}

void write_value_surface_csv(const TwoBsdeSolution& sol, const std::string& path) {
    const std::size_t n = sol.grid.n_steps;
    std::string out = "t,bin,center,V,argmax_member,Z\n";
    for (std::size_t k = 0; k <= n; ++k) {
        for (int b = 0; b < sol.bins.n_bins; ++b) {
            out += fmt(sol.grid.t(k)) + ',' + std::to_string(b) + ',' + fmt(sol.bins.center(b));
            out += ',' + fmt(sol.V(k, b));
            out += ',' + std::to_string(sol.argmax_member[k][b]);
            out += k < n ? ',' + fmt(sol.Z_agg(k, b)) : std::string(",");
            out += '\n';
        }
    }
    write_text_file(path, out);
}

}  // namespace rhbsde
