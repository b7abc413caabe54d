#include "rhbsde/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rhbsde/errors.hpp"

namespace rhbsde {
namespace {

// ---- parameter helpers ---------------------------------------------------

double p_num(const Json& params, const char* key, double dflt) {
    if (!params.is_object() || !params.contains(key)) return dflt;
    const Json& v = params.at(key);
    if (!v.is_number())
        throw ConfigError(std::string("check parameter '") + key + "' must be a number");
    return v.get<double>();
}

int p_int(const Json& params, const char* key, int dflt) {
    if (!params.is_object() || !params.contains(key)) return dflt;
    const Json& v = params.at(key);
    if (!v.is_number_integer())
        throw ConfigError(std::string("check parameter '") + key + "' must be an integer");
    return v.get<int>();
}

std::vector<double> p_vec(const Json& params, const char* key, std::vector<double> dflt) {
    if (!params.is_object() || !params.contains(key)) return dflt;
    const Json& v = params.at(key);
    if (!v.is_array() || v.empty())
        throw ConfigError(std::string("check parameter '") + key +
                          "' must be a non-empty array of numbers");
    std::vector<double> out;
    for (const Json& e : v) {
        if (!e.is_number())
            throw ConfigError(std::string("check parameter '") + key +
                              "' must contain only numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

// ---- data-shift helpers (ordered perturbations for comparison checks) ----

GeneratorSpec shift_generator(const GeneratorSpec& gen, double c) {
    if (c == 0.0) return gen;
    GeneratorSpec out = gen;  // constants are unchanged by an additive shift
    out.F = [inner = gen.F, c](double t, const Vec& x, double y, const Vec& z,
                               const Mat& sigma) { return inner(t, x, y, z, sigma) + c; };
    out.name = gen.name.empty() ? "shifted" : gen.name + "+shift";
    return out;
}

TerminalSpec shift_terminal(const TerminalSpec& term, double c) {
    if (c == 0.0) return term;
    TerminalSpec out;
    out.xi = [inner = term.xi, c](const StoppedPathView& view) { return inner(view) + c; };
    out.name = term.name.empty() ? "shifted" : term.name + "+shift";
    if (term.state_fn)
        out.state_fn = [g = term.state_fn, c](const Vec& x) { return g(x) + c; };
    return out;
}

ObstacleSpec shift_obstacle(const ObstacleSpec& obs, double c) {
    if (!obs.constrained || c == 0.0) return obs;
    ObstacleSpec out = obs;
    out.S = [inner = obs.S, c](double t, const Vec& x) { return inner(t, x) + c; };
    out.name = obs.name.empty() ? "shifted" : obs.name + "+shift";
    return out;
}

void require_nonnegative(double v, const char* what) {
    if (!(v >= 0.0))
        throw ConfigError(std::string(what) +
                          " must be >= 0 (ordered-data checks shift upward only)");
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Json params_echo(const Json& params) { return params.is_object() ? params : Json::object(); }

TwoBsdeProblem family_problem(const ExperimentConfig& cfg) {
    return TwoBsdeProblem{cfg.family, cfg.gen, cfg.term, cfg.controls};
}

// ---- individual checks ---------------------------------------------------

CheckOutcome check_apriori(const ExperimentConfig& cfg, const Json& params) {
    const double eta = p_num(params, "eta", cfg.norm_eta);
    const double p = p_num(params, "p", cfg.norm_p);
    validate_norm_window(cfg.gen, eta, p);
    PathBundle bundle = simulate_paths(cfg.primary_vol(), cfg.rule, cfg.grid, cfg.n_paths,
                                       cfg.seed);
    QvDensity qv = quadratic_variation_density(bundle);
    AprioriReport rep = apriori_check(bundle, qv, cfg.gen, cfg.term, cfg.basis, eta, p,
                                      cfg.controls, cfg.picard);
    return {"apriori", rep.pass, json_of(rep)};
}

CheckOutcome check_comparison_bsde(const ExperimentConfig& cfg, const Json& params) {
    const double xi_shift = p_num(params, "xi_shift", 0.1);
    const double f_shift = p_num(params, "f_shift", 0.1);
    require_nonnegative(xi_shift, "xi_shift");
    require_nonnegative(f_shift, "f_shift");
    PathBundle bundle = simulate_paths(cfg.primary_vol(), cfg.rule, cfg.grid, cfg.n_paths,
                                       cfg.seed);
    QvDensity qv = quadratic_variation_density(bundle);
    ComparisonReport rep = comparison_check(bundle, qv, cfg.gen, cfg.term,
                                            shift_generator(cfg.gen, f_shift),
                                            shift_terminal(cfg.term, xi_shift), cfg.basis,
                                            cfg.picard);
    Json j = json_of(rep);
    j["xi_shift"] = xi_shift;
    j["f_shift"] = f_shift;
    return {"comparison_bsde", rep.pass, j};
}

CheckOutcome check_stability_bsde(const ExperimentConfig& cfg, const Json& params) {
    const double xi_shift = p_num(params, "xi_shift", 0.01);
    const double f_shift = p_num(params, "f_shift", 0.0);
    const double eta = p_num(params, "eta", cfg.norm_eta);
    const double p = p_num(params, "p", cfg.norm_p);
    const double max_ratio = p_num(params, "max_ratio", 50.0);
    validate_norm_window(cfg.gen, eta, p);
    std::optional<double> horizon_prime;
    if (params.is_object() && params.contains("horizon_prime"))
        horizon_prime = p_num(params, "horizon_prime", 0.0);
    PathBundle bundle = simulate_paths(cfg.primary_vol(), cfg.rule, cfg.grid, cfg.n_paths,
                                       cfg.seed);
    QvDensity qv = quadratic_variation_density(bundle);
    StabilityReport rep = stability_check(bundle, qv, cfg.gen, cfg.term,
                                          shift_generator(cfg.gen, f_shift),
                                          shift_terminal(cfg.term, xi_shift), cfg.basis, eta, p,
                                          cfg.controls, horizon_prime, cfg.picard);
    const bool pass = rep.lhs <= 1e-12 ||
                      (std::isfinite(rep.ratio) && rep.ratio <= max_ratio);
    Json j = json_of(rep);
    j["max_ratio"] = max_ratio;
    j["pass"] = pass;
    return {"stability_bsde", pass, j};
}

CheckOutcome check_divergence(const ExperimentConfig& cfg, const Json& params) {
    const double L = p_num(params, "L", 1.0);
    const std::vector<double> n_list = p_vec(params, "n_list", {1.0, 2.0, 4.0});
    DivergenceReport rep = example_divergence(L, n_list, cfg.grid, cfg.n_paths, cfg.seed);
    return {"divergence_example", rep.pass, json_of(rep)};
}

CheckOutcome check_tanaka(const ExperimentConfig& cfg, const Json& params) {
    const int component = p_int(params, "component", 0);
    const double slack = p_num(params, "slack", 0.0);
    PathBundle bundle = simulate_paths(cfg.primary_vol(), cfg.rule, cfg.grid, cfg.n_paths,
                                       cfg.seed);
    TanakaReport rep = tanaka_check(bundle, component, slack);
    return {"tanaka", rep.pass, json_of(rep)};
}

CheckOutcome check_doob(const ExperimentConfig& cfg, const Json& params) {
    const double p = p_num(params, "p", 2.0);
    const double q = p_num(params, "q", 4.0);
    const int component = p_int(params, "component", 0);
    PathBundle bundle = simulate_paths(cfg.primary_vol(), cfg.rule, cfg.grid, cfg.n_paths,
                                       cfg.seed);
    if (component < 0 || component >= bundle.d)
        throw ConfigError("doob: component out of range for the state dimension");
    Array2D M(bundle.n_paths, bundle.grid.n_steps + 1);
    for (std::size_t pth = 0; pth < bundle.n_paths; ++pth)
        for (std::size_t k = 0; k <= bundle.grid.n_steps; ++k)
            M(pth, k) = bundle.X(pth, k, static_cast<std::size_t>(component));
    DoobReport rep;
    if (cfg.controls.size() > 0) {
        std::vector<DensityProcess> densities = density_family(bundle, cfg.controls);
        rep = doob_check(bundle, M, p, q, &densities);
    } else {
        rep = doob_check(bundle, M, p, q, nullptr);
    }
    Json j = json_of(rep);
    j["p"] = p;
    j["q"] = q;
    j["n_tilts"] = cfg.controls.size();
    return {"doob", rep.pass, j};
}

CheckOutcome check_skorokhod(const ExperimentConfig& cfg, const Json& params) {
    const double tol_rel = p_num(params, "tol_rel", 1e-3);
    PathBundle bundle = simulate_paths(cfg.primary_vol(), cfg.rule, cfg.grid, cfg.n_paths,
                                       cfg.seed);
    QvDensity qv = quadratic_variation_density(bundle);
    ReflectedSolution sol = solve_rbsde(bundle, cfg.gen, cfg.term, cfg.obstacle, cfg.basis,
                                        cfg.picard, cfg.rbsde, &qv, cfg.z_mode);
    double k_scale = 0.0;
    for (std::size_t pth = 0; pth < bundle.n_paths; ++pth)
        k_scale += sol.K(pth, bundle.grid.n_steps);
    k_scale /= static_cast<double>(std::max<std::size_t>(1, bundle.n_paths));
    const double bound = (k_scale > 0.0) ? tol_rel * k_scale : 1e-12;
    const bool pass = sol.skorokhod_residual <= bound;
    Json j;
    j["residual"] = sol.skorokhod_residual;
    j["mean_total_variation_K"] = k_scale;
    j["bound"] = bound;
    j["tol_rel"] = tol_rel;
    j["binding_fraction"] = sol.binding_fraction;
    j["y0"] = sol.y0_mean;
    j["pass"] = pass;
    return {"skorokhod", pass, j};
}

CheckOutcome check_unconstrained_reduction(const ExperimentConfig& cfg, const Json& params) {
    const double tol = p_num(params, "tol", 1e-8);
    PathBundle bundle = simulate_paths(cfg.primary_vol(), cfg.rule, cfg.grid, cfg.n_paths,
                                       cfg.seed);
    QvDensity qv = quadratic_variation_density(bundle);
    BackwardSolution plain = solve_bsde(bundle, qv, cfg.gen, cfg.term, cfg.basis, cfg.picard,
                                        cfg.z_mode);
    ReflectedSolution refl = solve_rbsde(bundle, cfg.gen, cfg.term,
                                         ObstacleSpec::unconstrained(), cfg.basis, cfg.picard,
                                         cfg.rbsde, &qv, cfg.z_mode);
    double max_diff = 0.0, max_abs = 0.0, max_k = 0.0;
    for (std::size_t pth = 0; pth < bundle.n_paths; ++pth) {
        for (std::size_t k = 0; k <= bundle.grid.n_steps; ++k) {
            max_diff = std::max(max_diff, std::abs(plain.Y(pth, k) - refl.Y(pth, k)));
            max_abs = std::max(max_abs, std::abs(plain.Y(pth, k)));
            max_k = std::max(max_k, refl.K(pth, k));
        }
    }
    const double bound = tol * (1.0 + max_abs);
    const bool pass = max_diff <= bound && max_k <= bound;
    Json j;
    j["max_y_difference"] = max_diff;
    j["max_k"] = max_k;
    j["bound"] = bound;
    j["y0_bsde"] = plain.y0_mean;
    j["y0_rbsde"] = refl.y0_mean;
    j["pass"] = pass;
    return {"unconstrained_reduction", pass, j};
}

CheckOutcome check_comparison_rbsde(const ExperimentConfig& cfg, const Json& params) {
    const double xi_shift = p_num(params, "xi_shift", 0.1);
    const double f_shift = p_num(params, "f_shift", 0.1);
    const double obstacle_shift = p_num(params, "obstacle_shift", 0.0);
    require_nonnegative(xi_shift, "xi_shift");
    require_nonnegative(f_shift, "f_shift");
    require_nonnegative(obstacle_shift, "obstacle_shift");
    PathBundle bundle = simulate_paths(cfg.primary_vol(), cfg.rule, cfg.grid, cfg.n_paths,
                                       cfg.seed);
    ComparisonReport rep = rbsde_comparison_check(
        bundle, cfg.gen, cfg.term, cfg.obstacle, shift_generator(cfg.gen, f_shift),
        shift_terminal(cfg.term, xi_shift), shift_obstacle(cfg.obstacle, obstacle_shift),
        cfg.basis, cfg.picard, cfg.rbsde);
    Json j = json_of(rep);
    j["xi_shift"] = xi_shift;
    j["f_shift"] = f_shift;
    j["obstacle_shift"] = obstacle_shift;
    return {"comparison_rbsde", rep.pass, j};
}

CheckOutcome check_stability_rbsde(const ExperimentConfig& cfg, const Json& params) {
    const double xi_shift = p_num(params, "xi_shift", 1.0);
    const double f_shift = p_num(params, "f_shift", 1.0);
    const double eta = p_num(params, "eta", cfg.norm_eta);
    const double p = p_num(params, "p", cfg.norm_p);
    const std::vector<double> eps_values = p_vec(params, "eps", {0.1, 0.01, 0.001});
    validate_norm_window(cfg.gen, eta, p);
    PathBundle bundle = simulate_paths(cfg.primary_vol(), cfg.rule, cfg.grid, cfg.n_paths,
                                       cfg.seed);
    RbsdeStabilityReport rep = rbsde_stability_check(bundle, cfg.gen, cfg.term, cfg.obstacle,
                                                     cfg.obstacle, xi_shift, f_shift, cfg.basis,
                                                     eta, p, cfg.controls, eps_values,
                                                     cfg.picard, cfg.rbsde);
    return {"stability_rbsde", rep.pass, json_of(rep)};
}

CheckOutcome check_truncation_ladder(const ExperimentConfig& cfg, const Json& params) {
    const double headroom = p_num(params, "headroom", 1.1);
    PathBundle bundle = simulate_paths(cfg.primary_vol(), cfg.rule, cfg.grid, cfg.n_paths,
                                       cfg.seed);
    QvDensity qv = quadratic_variation_density(bundle);
    RbsdeOptions options = cfg.rbsde;
    options.keep_solutions = true;
    options.require_convergence = false;
    ReflectedSolution sol = solve_rbsde(bundle, cfg.gen, cfg.term, cfg.obstacle, cfg.basis,
                                        cfg.picard, options, &qv, cfg.z_mode);
    bool decreasing = true;
    for (std::size_t i = 1; i < sol.rung_distance.size(); ++i)
        if (sol.rung_distance[i] > headroom * sol.rung_distance[i - 1]) decreasing = false;
    const bool pass = sol.truncation_converged || decreasing;
    Json j;
    j["rung_n"] = sol.rung_n;
    j["rung_distance"] = sol.rung_distance;
    j["converged"] = sol.truncation_converged;
    j["headroom"] = headroom;
    j["y0"] = sol.y0_mean;
    j["pass"] = pass;
    return {"truncation_ladder", pass, j};
}

CheckOutcome check_comparison_2bsde(const ExperimentConfig& cfg, const Json& params) {
    const double xi_shift = p_num(params, "xi_shift", 0.1);
    const double f_shift = p_num(params, "f_shift", 0.1);
    require_nonnegative(xi_shift, "xi_shift");
    require_nonnegative(f_shift, "f_shift");
    TwoBsdeProblem base = family_problem(cfg);
    TwoBsdeProblem upper{cfg.family, shift_generator(cfg.gen, f_shift),
                         shift_terminal(cfg.term, xi_shift), cfg.controls};
    ComparisonReport rep = twobsde_comparison_check(base, upper, cfg.basis, cfg.sim_config(),
                                                    cfg.twobsde);
    Json j = json_of(rep);
    j["xi_shift"] = xi_shift;
    j["f_shift"] = f_shift;
    return {"comparison_2bsde", rep.pass, j};
}

CheckOutcome check_dpp(const ExperimentConfig& cfg, const Json& params) {
    const double t1 = p_num(params, "t1", 0.5 * cfg.grid.horizon_cap());
    DppReport rep = dpp_check(family_problem(cfg), t1, cfg.basis, cfg.sim_config(),
                              cfg.twobsde);
    bool pass = rep.pass;
    Json j = json_of(rep);
    j["t1"] = t1;
    if (params.is_object() && params.contains("rel_tol")) {
        const double rel_tol = p_num(params, "rel_tol", 0.0);
        pass = pass && rep.rel_gap <= rel_tol;
        j["rel_tol"] = rel_tol;
        j["pass"] = pass;
    }
    return {"dpp", pass, j};
}

CheckOutcome check_minimality(const ExperimentConfig& cfg, const Json& params) {
    const double cap = cfg.grid.horizon_cap();
    const double s = p_num(params, "s", 0.25 * cap);
    const double t = p_num(params, "t", 0.5 * cap);
    const std::size_t s_idx = cfg.grid.index_of(s);
    const std::size_t t_idx = cfg.grid.index_of(t);
    if (!(s_idx < t_idx))
        throw ConfigError("minimality: s must map to an earlier grid index than t");
    TwoBsdeOptions options = cfg.twobsde;
    options.keep_k_tables = true;
    TwoBsdeSolution sol = solve_2bsde_sweep(family_problem(cfg), cfg.basis, cfg.sim_config(),
                                            options);
    MinimalityReport rep = minimality_check(sol, s_idx, t_idx);
    Json j = json_of(rep);
    j["s"] = s;
    j["t"] = t;
    return {"minimality", rep.pass, j};
}

CheckOutcome check_tail_certificate(const ExperimentConfig& cfg, const Json& params) {
    const std::vector<double> ladder = p_vec(params, "ladder", {1.0, 2.0, 4.0, 8.0, 16.0});
    TailCertificate rep = twobsde_tail_certificate(family_problem(cfg), cfg.sim_config(),
                                                   ladder);
    return {"tail_certificate", rep.pass, json_of(rep)};
}

CheckOutcome check_picard(const ExperimentConfig& cfg, const Json& params) {
    const double tol = p_num(params, "median_ratio", 0.5);
    const double guard = cfg.grid.step_h *
                         (cfg.gen.lipschitz_L + std::abs(cfg.gen.monotone_mu));
    if (!(guard < 0.5))
        throw ConfigError("picard_contraction requires h*(L+|mu|) < 0.5; got " +
                          std::to_string(guard));
    PathBundle bundle = simulate_paths(cfg.primary_vol(), cfg.rule, cfg.grid, cfg.n_paths,
                                       cfg.seed);
    QvDensity qv = quadratic_variation_density(bundle);
    PicardOptions picard = cfg.picard;
    picard.implicit_y = false;  // the contraction claim is about plain sweeps
    picard.tol = 1e-13;
    picard.max_iters = std::max(picard.max_iters, 12);
    BackwardSolution sol = solve_bsde(bundle, qv, cfg.gen, cfg.term, cfg.basis, picard,
                                      cfg.z_mode);
    std::vector<double> ratios;
    for (std::size_t i = 1; i < sol.sweep_distances.size(); ++i)
        if (sol.sweep_distances[i - 1] > 1e-14)
            ratios.push_back(sol.sweep_distances[i] / sol.sweep_distances[i - 1]);
    const double med = median_of(ratios);
    const bool pass = ratios.empty() ? true : med < tol;
    Json j;
    j["guard_hL"] = guard;
    j["sweep_distances"] = sol.sweep_distances;
    j["ratios"] = ratios;
    j["median_ratio"] = med;
    j["tolerance"] = tol;
    j["iterations"] = sol.picard_iters;
    j["pass"] = pass;
    return {"picard_contraction", pass, j};
}

using CheckFn = CheckOutcome (*)(const ExperimentConfig&, const Json&);

struct CheckEntry {
    CheckInfo info;
    CheckFn run;
};

const std::vector<CheckEntry>& registry() {
    static const std::vector<CheckEntry> entries = {
        {{"apriori",
          "Solution energy is bounded by the data: the weighted norms of (Y, Z) against the "
          "terminal and driver norms keep a stable ratio when the data are doubled.",
          "ratio stable within a factor 2 under doubling; params eta, p"},
         check_apriori},
        {{"comparison_bsde",
          "Ordered data give ordered solutions: shifting the terminal and driver upward may "
          "not push the solution down anywhere.",
          "positive-part violations <= 3 SE + 2hL scale; params xi_shift, f_shift"},
         check_comparison_bsde},
        {{"stability_bsde",
          "Continuity in the data: the weighted distance between the base and the perturbed "
          "solution stays proportional to the data distance.",
          "lhs/rhs ratio <= max_ratio (default 50); params xi_shift, f_shift, eta, p, "
          "horizon_prime"},
         check_stability_bsde},
        {{"stability_rbsde",
          "Reflected continuity in the data under a common barrier: solution distances decay "
          "with the perturbation size at the predicted square-root rate.",
          "fitted decay exponent >= 0.48 and decreasing distances; params xi_shift, f_shift, "
          "eps"},
         check_stability_rbsde},
        {{"comparison_rbsde",
          "Ordered reflected data (terminal, driver, and barrier shifted upward together) "
          "give ordered reflected solutions.",
          "positive-part violations <= 3 SE + 2hL scale; params xi_shift, f_shift, "
          "obstacle_shift"},
         check_comparison_rbsde},
        {{"skorokhod",
          "Minimal reflection: the push K acts only where the solution touches the barrier, "
          "so the sampled complementarity residual is tiny relative to the total push.",
          "residual <= tol_rel * mean total variation of K (default tol_rel 1e-3)"},
         check_skorokhod},
        {{"unconstrained_reduction",
          "Removing the barrier reduces the reflected solver to the plain one: K vanishes "
          "and the two solutions coincide path by path.",
          "max |Y_reflected - Y_plain| and max K <= tol * (1 + sup|Y|), tol default 1e-8"},
         check_unconstrained_reduction},
        {{"truncation_ladder",
          "Horizon truncation converges: successive weighted gaps between composite "
          "solutions along the truncation ladder shrink.",
          "ladder converged, or gaps nonincreasing within a 1.1 headroom factor"},
         check_truncation_ladder},
        {{"doob",
          "Maximal inequality: the weighted mean of the running maximum of |M|^p is "
          "controlled by the terminal moment of order q, uniformly over the tilt family.",
          "lhs <= q/(q-p) * rhs^(p/q) + 3 combined SE; params p (2), q (4), component"},
         check_doob},
        {{"tanaka",
          "Pathwise occupation inequality: |X| minus its initial value dominates the "
          "sign-weighted increments on every path, with a nonnegative accumulated gap.",
          "violating fraction 0 beyond the slack (default slack 0)"},
         check_tanaka},
        {{"divergence_example",
          "Exponential weights overweight slow exits: the weighted moment of a hitting-time "
          "payoff blows up along the truncation ladder while the tilt-based norm stays flat.",
          ">= 2x growth per rung and < 20% variation of the tilted norm; params L, n_list"},
         check_divergence},
        {{"picard_contraction",
          "Fixed-point sweeps contract: successive sweep distances shrink geometrically "
          "whenever the step size times the driver constants is below one half.",
          "median successive ratio < 0.5 (requires h*(L+|mu|) < 0.5)"},
         check_picard},
        {{"comparison_2bsde",
          "Ordered data give ordered robust values: shifting terminal and driver upward may "
          "not push the family-maximum value surface down on occupied bins.",
          "positive-part violations <= 3 SE + 2hL scale; params xi_shift, f_shift"},
         check_comparison_2bsde},
        {{"dpp",
          "Dynamic programming: solving to an intermediate time with the continuation value "
          "as terminal data reproduces the direct robust value.",
          "gap <= 3 combined SE + O(h) slack; params t1, optional rel_tol"},
         check_dpp},
        {{"minimality",
          "Minimal compensator: per state bin, the smallest expected K-increment over the "
          "family members vanishes up to noise, so no member is pushed more than needed.",
          "min expected increment <= 3 SE + O(h) slack on bins with >= 1% occupancy; "
          "params s, t"},
         check_minimality},
        {{"tail_certificate",
          "Vanishing tails: the worst-case (over members and tilts) weighted survival mass "
          "beyond the truncation horizon decreases along the ladder and ends small.",
          "survival nonincreasing and final value <= 0.2; params ladder"},
         check_tail_certificate},
    };
    return entries;
}

}  // namespace

const std::vector<CheckInfo>& check_catalog() {
    static const std::vector<CheckInfo> catalog = [] {
        std::vector<CheckInfo> out;
        for (const CheckEntry& e : registry()) out.push_back(e.info);
        return out;
    }();
    return catalog;
}

CheckOutcome run_check(const ExperimentConfig& cfg, const CheckRequest& req) {
    for (const CheckEntry& e : registry()) {
        if (e.info.name != req.name) continue;
        CheckOutcome out = e.run(cfg, req.params);
        if (!out.report.contains("pass")) out.report["pass"] = out.pass;
        if (req.params.is_object() && !req.params.empty())
            out.report["params"] = params_echo(req.params);
        return out;
    }
    std::string known;
    for (const CheckEntry& e : registry()) {
        if (!known.empty()) known += ", ";
        known += e.info.name;
    }
    throw ConfigError("unknown check '" + req.name + "'; known checks: " + known);
}

std::vector<CheckOutcome> run_checks(const ExperimentConfig& cfg) {
    std::vector<CheckOutcome> out;
    out.reserve(cfg.checks.size());
    for (const CheckRequest& req : cfg.checks) out.push_back(run_check(cfg, req));
    return out;
}

}  // namespace rhbsde
