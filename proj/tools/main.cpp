#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rhbsde/checks.hpp"
#include "rhbsde/config.hpp"
#include "rhbsde/errors.hpp"
#include "rhbsde/io.hpp"
#include "rhbsde/parallel.hpp"

namespace fs = std::filesystem;
using namespace rhbsde;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::string format = "json";
    std::int64_t seed = -1;   // -1 = keep config seed
    int threads = -1;         // -1 = config / env / hardware
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "experiment config file (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", args.out_dir, "artifact directory (default: out)");
    sub->add_option("--seed", args.seed, "override the config seed")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--threads", args.threads, "worker threads (0 = hardware concurrency)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--format", args.format,
                    "table artifacts: csv also writes the default table for the mode")
        ->check(CLI::IsMember({"csv", "json"}));
}

ExperimentConfig load_with_overrides(const CommonArgs& args) {
    ExperimentConfig cfg = load_config_file(args.config_path);
    if (args.seed >= 0) {
        cfg.seed = static_cast<std::uint64_t>(args.seed);
        cfg.resolved["numerics"]["seed"] = cfg.seed;
    }
    if (args.threads >= 0) {
        set_thread_count(args.threads);
    } else if (cfg.threads > 0 && std::getenv("RHBSDE_THREADS") == nullptr) {
        set_thread_count(cfg.threads);  // env keeps precedence over the config
    }
    return cfg;
}

// Output-slot resolution: the config may name a file per slot; otherwise
// each mode writes its defaults.
class Artifacts {
  public:
    Artifacts(const ExperimentConfig& cfg, std::string out_dir)
        : out_dir_(std::move(out_dir)) {
        for (const auto& [slot, filename] : cfg.outputs) slots_[slot] = filename;
        fs::create_directories(out_dir_);
    }

    bool wants(const std::string& slot) const { return slots_.count(slot) > 0; }

    std::string path(const std::string& slot, const std::string& default_name) const {
        auto it = slots_.find(slot);
        const std::string name = it == slots_.end() ? default_name : it->second;
        return (fs::path(out_dir_) / name).string();
    }

    void note(const std::string& what, const std::string& file) {
        std::cout << "  wrote " << what << ": " << file << "\n";
    }

  private:
    std::string out_dir_;
    std::map<std::string, std::string> slots_;
};

StateBins resolve_bins(const StateBins& bins, const PathBundle& bundle) {
    if (!bins.auto_range) return bins;
    double lo = bundle.X(0, 0, 0), hi = lo;
    for (std::size_t p = 0; p < bundle.n_paths; ++p) {
        for (std::size_t k = 0; k <= bundle.grid.n_steps; ++k) {
            lo = std::min(lo, bundle.X(p, k, 0));
            hi = std::max(hi, bundle.X(p, k, 0));
        }
    }
    StateBins out = bins;
    out.auto_range = false;
    if (!(hi > lo)) {
        out.lo = lo - 0.5;
        out.hi = hi + 0.5;
    } else {
        const double pad = 1e-9 + 0.005 * (hi - lo);
        out.lo = lo - pad;
        out.hi = hi + pad;
    }
    return out;
}

Json bundle_summary(const PathBundle& bundle) {
    double mean_stop = 0.0, capped = 0.0;
    for (std::size_t p = 0; p < bundle.n_paths; ++p) {
        mean_stop += bundle.grid.t(bundle.stop_index[p]);
        capped += bundle.capped[p] ? 1.0 : 0.0;
    }
    const double np = static_cast<double>(std::max<std::size_t>(1, bundle.n_paths));
    Json j;
    j["n_paths"] = bundle.n_paths;
    j["n_steps"] = bundle.grid.n_steps;
    j["step_h"] = bundle.grid.step_h;
    j["horizon_cap"] = bundle.grid.horizon_cap();
    j["state_dim"] = bundle.d;
    j["noise_dim"] = bundle.m;
    j["seed"] = bundle.seed;
    j["mean_stop_time"] = mean_stop / np;
    j["capped_fraction"] = capped / np;
    return j;
}

Json norms_report(const PathBundle& bundle, const BackwardSolution& sol, const Array2D* K,
                  const ExperimentConfig& cfg) {
    NormParams params{cfg.norm_p, cfg.norm_eta};
    std::vector<DensityProcess> densities;
    const std::vector<DensityProcess>* dp = nullptr;
    if (cfg.controls.size() > 0) {
        densities = density_family(bundle, cfg.controls);
        dp = &densities;
    }
    Json j;
    j["params"] = {{"p", params.p}, {"alpha", params.alpha}, {"n_tilts", cfg.controls.size()}};
    j["Y"] = json_of(norm_D(bundle, sol.Y, params, dp));
    j["Z"] = json_of(norm_H(bundle, sol.Z, params, dp));
    if (K) {
        Array2D dK(bundle.n_paths, bundle.grid.n_steps);
        for (std::size_t p = 0; p < bundle.n_paths; ++p)
            for (std::size_t k = 0; k < bundle.grid.n_steps; ++k)
                dK(p, k) = (*K)(p, k + 1) - (*K)(p, k);
        j["K"] = json_of(norm_K(bundle, dK, params, dp));
    }
    return j;
}

// Runs the checks section; returns false when any check failed.
bool run_check_section(const ExperimentConfig& cfg, Artifacts& artifacts) {
    if (cfg.checks.empty()) return true;
    std::vector<CheckOutcome> outcomes = run_checks(cfg);
    bool all_pass = true;
    Json list = Json::array();
    for (const CheckOutcome& o : outcomes) {
        all_pass = all_pass && o.pass;
        std::cout << "  check " << o.name << ": " << (o.pass ? "PASS" : "FAIL") << "\n";
        Json entry;
        entry["name"] = o.name;
        entry["pass"] = o.pass;
        entry["report"] = o.report;
        list.push_back(entry);
    }
    Json j;
    j["all_pass"] = all_pass;
    j["checks"] = list;
    const std::string path = artifacts.path("checks_json", "checks.json");
    write_json_file(path, j);
    artifacts.note("check reports", path);
    return all_pass;
}

void write_manifest(const ExperimentConfig& cfg, Artifacts& artifacts) {
    const std::string path = artifacts.path("manifest", "manifest.json");
    write_json_file(path, make_manifest(cfg));
    artifacts.note("manifest", path);
}

int run_simulate(const ExperimentConfig& cfg, const CommonArgs& args) {
    Artifacts artifacts(cfg, args.out_dir);
    write_manifest(cfg, artifacts);
    PathBundle bundle = simulate_paths(cfg.primary_vol(), cfg.rule, cfg.grid, cfg.n_paths,
                                       cfg.seed);
    Json summary = bundle_summary(bundle);
    const std::string sp = artifacts.path("summary_json", "summary.json");
    write_json_file(sp, summary);
    artifacts.note("summary", sp);
    {
        const std::string bp = artifacts.path("bundle_bin", "bundle.bin");
        save_bundle(bundle, bp);
        artifacts.note("path bundle", bp);
    }
    if (args.format == "csv" || artifacts.wants("bundle_csv")) {
        const std::string cp = artifacts.path("bundle_csv", "bundle.csv");
        write_bundle_csv(bundle, cp);
        artifacts.note("bundle table", cp);
    }
    std::cout << "simulated " << bundle.n_paths << " paths, mean stop time "
              << summary["mean_stop_time"].get<double>() << ", capped fraction "
              << summary["capped_fraction"].get<double>() << "\n";
    return run_check_section(cfg, artifacts) ? 0 : 1;
}

int run_solve(const ExperimentConfig& cfg, const CommonArgs& args, const std::string& mode) {
    Artifacts artifacts(cfg, args.out_dir);
    write_manifest(cfg, artifacts);
    PathBundle bundle = simulate_paths(cfg.primary_vol(), cfg.rule, cfg.grid, cfg.n_paths,
                                       cfg.seed);
    Json summary;
    if (mode == "bsde") {
        QvDensity qv = quadratic_variation_density(bundle);
        BackwardSolution sol = solve_bsde(bundle, qv, cfg.gen, cfg.term, cfg.basis, cfg.picard,
                                          cfg.z_mode);
        summary = json_of(sol);
        std::cout << "Y0 = " << sol.y0_mean << " +/- " << sol.y0_se << "  (picard iters "
                  << sol.picard_iters << ")\n";
        if (args.format == "csv" || artifacts.wants("solution_csv")) {
            const std::string cp = artifacts.path("solution_csv", "solution.csv");
            write_solution_csv(bundle, sol, resolve_bins(cfg.twobsde.bins, bundle), cp);
            artifacts.note("solution table", cp);
        }
        if (artifacts.wants("norms_json")) {
            const std::string np = artifacts.path("norms_json", "norms.json");
            write_json_file(np, norms_report(bundle, sol, nullptr, cfg));
            artifacts.note("norm estimates", np);
        }
    } else if (mode == "rbsde") {
        QvDensity qv = quadratic_variation_density(bundle);
        ReflectedSolution sol = solve_rbsde(bundle, cfg.gen, cfg.term, cfg.obstacle, cfg.basis,
                                            cfg.picard, cfg.rbsde, &qv, cfg.z_mode);
        summary = json_of(sol);
        std::cout << "Y0 = " << sol.y0_mean << " +/- " << sol.y0_se
                  << "  (skorokhod residual " << sol.skorokhod_residual
                  << ", binding fraction " << sol.binding_fraction << ")\n";
        if (args.format == "csv" || artifacts.wants("solution_csv")) {
            const std::string cp = artifacts.path("solution_csv", "solution.csv");
            write_reflected_csv(bundle, sol, resolve_bins(cfg.twobsde.bins, bundle), cp);
            artifacts.note("solution table", cp);
        }
        if (artifacts.wants("norms_json")) {
            const std::string np = artifacts.path("norms_json", "norms.json");
            write_json_file(np, norms_report(bundle, sol, &sol.K, cfg));
            artifacts.note("norm estimates", np);
        }
    } else {  // 2bsde
        TwoBsdeProblem problem{cfg.family, cfg.gen, cfg.term, cfg.controls};
        TwoBsdeSolution sol = solve_2bsde_sweep(problem, cfg.basis, cfg.sim_config(),
                                                cfg.twobsde);
        summary = json_of(sol);
        std::cout << "V0 = " << sol.v0 << " +/- " << sol.v0_se << "  (argmax member "
                  << (sol.argmax_member_0 >= 0
                          ? sol.member_names[static_cast<std::size_t>(sol.argmax_member_0)]
                          : std::string("none"))
                  << ")\n";
        if (args.format == "csv" || artifacts.wants("surface_csv")) {
            const std::string cp = artifacts.path("surface_csv", "surface.csv");
            write_value_surface_csv(sol, cp);
            artifacts.note("value surface", cp);
        }
    }
    if (artifacts.wants("bundle_bin")) {
        const std::string bp = artifacts.path("bundle_bin", "bundle.bin");
        save_bundle(bundle, bp);
        artifacts.note("path bundle", bp);
    }
    if (artifacts.wants("bundle_csv")) {
        const std::string bp = artifacts.path("bundle_csv", "bundle.csv");
        write_bundle_csv(bundle, bp);
        artifacts.note("bundle table", bp);
    }
    const std::string sp = artifacts.path("summary_json", "summary.json");
    write_json_file(sp, summary);
    artifacts.note("summary", sp);
    return run_check_section(cfg, artifacts) ? 0 : 1;
}

int run_check_cmd(const ExperimentConfig& cfg, const CommonArgs& args) {
    Artifacts artifacts(cfg, args.out_dir);
    write_manifest(cfg, artifacts);
    if (cfg.checks.empty()) {
        std::cout << "no checks declared in the config\n";
        return 0;
    }
    return run_check_section(cfg, artifacts) ? 0 : 1;
}

double solve_y0(const ExperimentConfig& cfg) {
    if (cfg.mode == "2bsde") {
        TwoBsdeProblem problem{cfg.family, cfg.gen, cfg.term, cfg.controls};
        return solve_2bsde_sweep(problem, cfg.basis, cfg.sim_config(), cfg.twobsde).v0;
    }
    PathBundle bundle = simulate_paths(cfg.primary_vol(), cfg.rule, cfg.grid, cfg.n_paths,
                                       cfg.seed);
    QvDensity qv = quadratic_variation_density(bundle);
    if (cfg.mode == "rbsde") {
        return solve_rbsde(bundle, cfg.gen, cfg.term, cfg.obstacle, cfg.basis, cfg.picard,
                           cfg.rbsde, &qv, cfg.z_mode)
            .y0_mean;
    }
    return solve_bsde(bundle, qv, cfg.gen, cfg.term, cfg.basis, cfg.picard, cfg.z_mode)
        .y0_mean;
}

ExperimentConfig sweep_variant(const ExperimentConfig& base, const std::string& axis,
                               double value) {
    ExperimentConfig cfg = base;
    if (axis == "h") {
        if (!(value > 0.0)) throw ConfigError("sweep: h values must be positive");
        const double cap = base.grid.horizon_cap();
        const double steps = cap / value;
        const auto n = static_cast<std::size_t>(std::llround(steps));
        if (n == 0 || std::abs(steps - static_cast<double>(n)) > 1e-9 * steps)
            throw ConfigError("sweep: h must divide the horizon cap");
        cfg.grid = TimeGrid(value, n);
    } else if (axis == "n_paths") {
        if (!(value >= 2.0)) throw ConfigError("sweep: n_paths values must be >= 2");
        cfg.n_paths = static_cast<std::size_t>(value);
    } else if (axis == "truncation_n") {
        if (!(value > 0.0)) throw ConfigError("sweep: truncation_n values must be positive");
        cfg.rbsde.ladder = {value};
        cfg.rbsde.require_convergence = false;
        if (cfg.mode != "rbsde")
            throw ConfigError("sweep: truncation_n applies to rbsde mode only");
    } else if (axis == "basis_degree") {
        const int deg = static_cast<int>(value);
        if (deg < 1) throw ConfigError("sweep: basis_degree values must be >= 1");
        if (cfg.basis.kind == RegressionBasis::Kind::Polynomial)
            cfg.basis.degree = deg;
        else
            cfg.basis.bins = deg;
    } else {
        throw ConfigError("sweep: unknown axis '" + axis + "'");
    }
    return cfg;
}

int run_sweep(const ExperimentConfig& cfg, const CommonArgs& args) {
    if (cfg.sweep_axis.empty() || cfg.sweep_values.size() < 2)
        throw ConfigError("sweep: config needs a sweep section with an axis and >= 2 values");
    Artifacts artifacts(cfg, args.out_dir);
    write_manifest(cfg, artifacts);
    const std::string& axis = cfg.sweep_axis;

    // The finest value is the reference: smallest h, largest anything else.
    std::vector<double> values = cfg.sweep_values;
    std::sort(values.begin(), values.end());
    if (axis != "h") std::reverse(values.begin(), values.end());
    const double ref_value = values.front();

    std::vector<double> y0(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        y0[i] = solve_y0(sweep_variant(cfg, axis, values[i]));
        std::cout << "  " << axis << " = " << values[i] << "  ->  Y0 = " << y0[i]
                  << (i == 0 ? "  (reference)" : "") << "\n";
    }

    std::vector<double> lx, ly;  // log-log regression of error vs axis value
    std::string csv = "axis,value,y0,error_vs_reference\n";
    Json rows = Json::array();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double err = (i == 0) ? 0.0 : std::abs(y0[i] - y0[0]);
        csv += axis + ',' + std::to_string(values[i]) + ',' + std::to_string(y0[i]) + ',' +
               std::to_string(err) + '\n';
        rows.push_back({{"value", values[i]}, {"y0", y0[i]}, {"error", err}});
        if (i > 0 && err > 0.0) {
            lx.push_back(std::log(values[i]));
            ly.push_back(std::log(err));
        }
    }
    double order = 0.0;
    if (lx.size() >= 2) {
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            mx += lx[i];
            my += ly[i];
        }
        mx /= static_cast<double>(lx.size());
        my /= static_cast<double>(lx.size());
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            num += (lx[i] - mx) * (ly[i] - my);
            den += (lx[i] - mx) * (lx[i] - mx);
        }
        order = den > 0.0 ? num / den : 0.0;
    }
    Json j;
    j["axis"] = axis;
    j["reference_value"] = ref_value;
    j["rows"] = rows;
    j["fitted_order"] = order;
    const std::string jp = artifacts.path("sweep_json", "sweep.json");
    write_json_file(jp, j);
    artifacts.note("sweep report", jp);
    const std::string cp = artifacts.path("sweep_csv", "sweep.csv");
    write_text_file(cp, csv);
    artifacts.note("sweep table", cp);
    std::cout << "fitted empirical order in " << axis << ": " << order << "\n";
    return 0;
}

int print_catalog() {
    std::cout << "named checks:\n";
    for (const CheckInfo& info : check_catalog()) {
        std::cout << "\n" << info.name << "\n";
        std::cout << "  what:      " << info.description << "\n";
        std::cout << "  tolerance: " << info.default_tolerance << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte-Carlo solvers for backward SDEs with random horizons"};
    app.require_subcommand(1);
    CommonArgs args;

    CLI::App* c_sim = app.add_subcommand("simulate", "simulate a path bundle and export it");
    CLI::App* c_bsde = app.add_subcommand("solve-bsde", "regression solve of the backward equation");
    CLI::App* c_rbsde = app.add_subcommand("solve-rbsde", "reflected solve above the obstacle");
    CLI::App* c_2bsde = app.add_subcommand("solve-2bsde", "robust solve over the volatility family");
    CLI::App* c_check = app.add_subcommand("check", "run the config's named checks only");
    CLI::App* c_sweep = app.add_subcommand("sweep", "convergence sweep along the config's axis");
    app.add_subcommand("list-checks", "print the catalog of named checks");
    for (CLI::App* sub : {c_sim, c_bsde, c_rbsde, c_2bsde, c_check, c_sweep})
        add_common(sub, args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("list-checks")) return print_catalog();
        ExperimentConfig cfg = load_with_overrides(args);
        if (app.got_subcommand("simulate")) return run_simulate(cfg, args);
        if (app.got_subcommand("solve-bsde")) {
            cfg.mode = "bsde";
            return run_solve(cfg, args, "bsde");
        }
        if (app.got_subcommand("solve-rbsde")) {
            cfg.mode = "rbsde";
            return run_solve(cfg, args, "rbsde");
        }
        if (app.got_subcommand("solve-2bsde")) {
            cfg.mode = "2bsde";
            return run_solve(cfg, args, "2bsde");
        }
        if (app.got_subcommand("check")) return run_check_cmd(cfg, args);
        if (app.got_subcommand("sweep")) return run_sweep(cfg, args);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const CheckFailure& e) {
        std::cerr << "check failure: " << e.what() << "\n";
        return 1;
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
