#include "rhbsde/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "rhbsde/errors.hpp"

namespace rhbsde {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ConfigError("config: " + msg); }

const Json& need(const Json& j, const char* key, const char* where) {
    const auto it = j.find(key);
    if (it == j.end()) fail(std::string(where) + ": missing required key '" + key + "'");
    return *it;
}

double num_or(const Json& j, const char* key, double fallback) {
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_number()) fail(std::string("'") + key + "' must be a number");
    return it->get<double>();
}

bool bool_or(const Json& j, const char* key, bool fallback) {
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_boolean()) fail(std::string("'") + key + "' must be a boolean");
    return it->get<bool>();
}

std::string str_or(const Json& j, const char* key, const std::string& fallback) {
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_string()) fail(std::string("'") + key + "' must be a string");
    return it->get<std::string>();
}

Vec vec_of(const Json& j, int d, const char* what) {
    Vec v(d);
    if (j.is_number()) {
        v.setConstant(j.get<double>());
        return v;
    }
    if (!j.is_array() || static_cast<int>(j.size()) != d) {
        fail(std::string(what) + " must be a number or an array of length " + std::to_string(d));
    }
    for (int i = 0; i < d; ++i) v[i] = j[i].get<double>();
    return v;
}

std::vector<double> list_of(const Json& j, const char* what) {
    if (!j.is_array() || j.empty()) fail(std::string(what) + " must be a nonempty array");
    std::vector<double> out;
    for (const auto& e : j) {
        if (!e.is_number()) fail(std::string(what) + " entries must be numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

GeneratorSpec parse_generator(const Json& j) {
    const std::string kind = str_or(j, "kind", "zero");
    GeneratorSpec g;
    if (kind == "zero") {
        g = GeneratorSpec::affine_scalar(0.0, 0.0, 0.0, "zero");
    } else if (kind == "constant") {
        g = GeneratorSpec::affine_scalar(0.0, 0.0, num_or(j, "value", 0.0), "constant");
    } else if (kind == "affine") {
        g = GeneratorSpec::affine_scalar(num_or(j, "a", 0.0), num_or(j, "b", 0.0),
                                         num_or(j, "c", 0.0), str_or(j, "name", "affine"));
    } else {
        fail("generator kind '" + kind + "' unknown (zero | constant | affine)");
    }
    g.weight_rho = num_or(j, "weight_rho", std::max(0.0, -g.monotone_mu) + 0.5);
    g.moment_q = num_or(j, "moment_q", 4.0);
    return g;
}

TerminalSpec parse_terminal(const Json& j) {
    const std::string kind = str_or(j, "kind", "constant");
    if (kind == "constant") {
        return TerminalSpec::constant(num_or(j, "value", 0.0));
    }
    const int comp = static_cast<int>(num_or(j, "component", 0.0));
    if (kind == "state_linear") {
        const double scale = num_or(j, "scale", 1.0);
        const double offset = num_or(j, "offset", 0.0);
        return TerminalSpec::state_functional(
            [scale, offset, comp](const Vec& x) { return scale * x[comp] + offset; },
            "state_linear");
    }
    if (kind == "state_square") {
        const double scale = num_or(j, "scale", 1.0);
        const double offset = num_or(j, "offset", 0.0);
        return TerminalSpec::state_functional(
            [scale, offset, comp](const Vec& x) { return scale * x[comp] * x[comp] + offset; },
            "state_square");
    }
    if (kind == "put") {
        const double strike = num_or(j, "strike", 1.0);
        return TerminalSpec::state_functional(
            [strike, comp](const Vec& x) { return std::max(0.0, strike - x[comp]); }, "put");
    }
    if (kind == "abs_at_time") {
        const double t0 = num_or(j, "t0", 1.0);
        return TerminalSpec::path_functional(
            [t0, comp](const StoppedPathView& v) {
                const double t = std::min(t0, v.grid().horizon_cap());
                return std::abs(v.state_at_time(t)[comp]);
            },
            "abs_at_time");
    }
    fail("terminal kind '" + kind +
         "' unknown (constant | state_linear | state_square | put | abs_at_time)");
}

ObstacleSpec parse_obstacle(const Json& j) {
    const std::string kind = str_or(j, "kind", "none");
    ObstacleSpec o = ObstacleSpec::unconstrained();
    if (kind == "none") {
        // keep unconstrained
    } else if (kind == "constant") {
        const double v = num_or(j, "value", 0.0);
        o = ObstacleSpec::of([v](double, const Vec&) { return v; }, "constant");
    } else if (kind == "put") {
        const double strike = num_or(j, "strike", 1.0);
        const int comp = static_cast<int>(num_or(j, "component", 0.0));
        o = ObstacleSpec::of(
            [strike, comp](double, const Vec& x) { return std::max(0.0, strike - x[comp]); },
            "put");
    } else if (kind == "state_linear") {
        const double scale = num_or(j, "scale", 1.0);
        const double offset = num_or(j, "offset", 0.0);
        const int comp = static_cast<int>(num_or(j, "component", 0.0));
        o = ObstacleSpec::of(
            [scale, offset, comp](double, const Vec& x) { return scale * x[comp] + offset; },
            "state_linear");
    } else {
        fail("obstacle kind '" + kind + "' unknown (none | constant | put | state_linear)");
    }
    if (j.contains("certificate")) {
        const Json& c = j["certificate"];
        o.has_certificate = true;
        o.plus_rho = num_or(c, "rho", 0.0);
        o.plus_q = num_or(c, "q", 2.0);
    }
    return o;
}

StoppingRule parse_stopping(const Json& j, int d) {
    const std::string kind = str_or(j, "kind", "deterministic");
    if (kind == "deterministic") return StoppingRule::deterministic(num_or(j, "time", 1.0));
    if (kind == "exit_of_box") {
        return StoppingRule::exit_of_box(vec_of(need(j, "lo", "stopping"), d, "stopping.lo"),
                                         vec_of(need(j, "hi", "stopping"), d, "stopping.hi"));
    }
    if (kind == "hitting_level") {
        return StoppingRule::hitting_level(static_cast<int>(num_or(j, "component", 0.0)),
                                           num_or(j, "level", 1.0));
    }
    if (kind == "min_of") {
        const Json& parts = need(j, "parts", "stopping");
        if (!parts.is_array() || parts.empty()) fail("stopping.parts must be a nonempty array");
        std::vector<StoppingRule> rules;
        for (const auto& p : parts) rules.push_back(parse_stopping(p, d));
        return StoppingRule::min_of(std::move(rules));
    }
    fail("stopping kind '" + kind +
         "' unknown (deterministic | exit_of_box | hitting_level | min_of)");
}

VolatilitySpec parse_member(const Json& j, std::size_t index) {
    const std::string name = str_or(j, "name", "member" + std::to_string(index));
    if (j.contains("sigma_matrix")) {
        const Json& rows = j["sigma_matrix"];
        if (!rows.is_array() || rows.empty() || !rows[0].is_array() || rows[0].empty()) {
            fail("volatility.sigma_matrix must be a nonempty array of rows");
        }
        const int d = static_cast<int>(rows.size());
        const int m = static_cast<int>(rows[0].size());
        Mat s(d, m);
        for (int r = 0; r < d; ++r) {
            if (static_cast<int>(rows[r].size()) != m) fail("sigma_matrix rows differ in length");
            for (int c = 0; c < m; ++c) s(r, c) = rows[r][c].get<double>();
        }
        Vec x0 = j.contains("x0") ? vec_of(j["x0"], d, "volatility.x0") : Vec(Vec::Zero(d));
        return VolatilitySpec::matrix_constant(s, x0, name);
    }
    const double s = num_or(j, "sigma", 1.0);
    const double x0 = num_or(j, "x0", 0.0);
    return VolatilitySpec::scalar_constant(s, x0, name);
}

MeasureFamily parse_family(const Json& problem) {
    MeasureFamily fam;
    if (problem.contains("family")) {
        const Json& f = problem["family"];
        const Json& members = need(f, "members", "family");
        if (!members.is_array() || members.empty()) fail("family.members must be nonempty");
        std::size_t i = 0;
        for (const auto& mj : members) fam.members.push_back(parse_member(mj, i++));
        fam.generator_finiteness_check = bool_or(f, "screen", false);
    } else if (problem.contains("volatility")) {
        fam.members.push_back(parse_member(problem["volatility"], 0));
    } else {
        fam.members.push_back(VolatilitySpec::scalar_constant(1.0, 0.0, "member0"));
    }
    return fam;
}

DriftControlSet parse_controls(const Json& j, int m) {
    const double bound = num_or(j, "bound", 0.0);
    std::vector<LambdaPolicy> policies;
    if (j.contains("lambdas")) {
        const Json& ls = j["lambdas"];
        if (!ls.is_array()) fail("controls.lambdas must be an array");
        std::size_t i = 0;
        for (const auto& e : ls) {
            policies.push_back(
                LambdaPolicy::constant(vec_of(e, m, "controls.lambdas entry"),
                                       "lambda" + std::to_string(i++)));
        }
    }
    return DriftControlSet(bound, std::move(policies), m);
}

RegressionBasis parse_basis(const Json& j, int d) {
    const std::string kind = str_or(j, "kind", "polynomial");
    if (kind == "polynomial") {
        // lo/hi accept a scalar (replicated) or an array of length d.
        const Vec lo =
            j.contains("lo") ? vec_of(j["lo"], d, "basis.lo") : Vec(Vec::Constant(d, -10.0));
        const Vec hi =
            j.contains("hi") ? vec_of(j["hi"], d, "basis.hi") : Vec(Vec::Constant(d, 10.0));
        return RegressionBasis::polynomial(static_cast<int>(num_or(j, "degree", 3.0)), lo, hi);
    }
    const double lo_s = num_or(j, "lo", -10.0);
    const double hi_s = num_or(j, "hi", 10.0);
    if (kind == "piecewise_linear") {
        return RegressionBasis::piecewise_linear(static_cast<int>(num_or(j, "bins", 20.0)),
                                                 lo_s, hi_s);
    }
    if (kind == "indicator_bins") {
        return RegressionBasis::indicator_bins(static_cast<int>(num_or(j, "bins", 20.0)), lo_s,
                                               hi_s);
    }
    fail("basis kind '" + kind + "' unknown (polynomial | piecewise_linear | indicator_bins)");
}

const std::set<std::string>& known_output_slots() {
    static const std::set<std::string> slots = {
        "summary_json", "solution_csv", "surface_csv", "bundle_bin",
        "bundle_csv",   "checks_json",  "norms_json",
    };
    return slots;
}

Json basis_json(const RegressionBasis& b) {
    Json j = Json::object();
    switch (b.kind) {
        case RegressionBasis::Kind::Polynomial:
            j["kind"] = "polynomial";
            j["degree"] = b.degree;
            break;
        case RegressionBasis::Kind::PiecewiseLinear:
            j["kind"] = "piecewise_linear";
            j["bins"] = b.bins;
            break;
        case RegressionBasis::Kind::IndicatorBins:
            j["kind"] = "indicator_bins";
            j["bins"] = b.bins;
            break;
    }
    j["lo"] = std::vector<double>(b.lo.data(), b.lo.data() + b.lo.size());
    j["hi"] = std::vector<double>(b.hi.data(), b.hi.data() + b.hi.size());
    return j;
}

Json stopping_json(const StoppingRule& r) {
    Json j = Json::object();
    switch (r.kind) {
        case StoppingRule::Kind::Deterministic:
            j["kind"] = "deterministic";
            j["time"] = r.time;
            break;
        case StoppingRule::Kind::ExitOfBox:
            j["kind"] = "exit_of_box";
            j["lo"] = std::vector<double>(r.lower.data(), r.lower.data() + r.lower.size());
            j["hi"] = std::vector<double>(r.upper.data(), r.upper.data() + r.upper.size());
            break;
        case StoppingRule::Kind::HittingLevel:
            j["kind"] = "hitting_level";
            j["component"] = r.component;
            j["level"] = r.level;
            break;
        case StoppingRule::Kind::MinOf: {
            j["kind"] = "min_of";
            Json parts = Json::array();
            for (const auto& p : r.parts) parts.push_back(stopping_json(p));
            j["parts"] = parts;
            break;
        }
    }
    return j;
}

}  // namespace

ExperimentConfig parse_config(const Json& root) {
    if (!root.is_object()) fail("top level must be a JSON object");
    ExperimentConfig cfg;
    cfg.version = static_cast<int>(num_or(root, "version", 1.0));
    if (cfg.version != kConfigVersion) {
        fail("unsupported config version " + std::to_string(cfg.version));
    }
    cfg.mode = str_or(root, "mode", "bsde");
    if (cfg.mode != "simulate" && cfg.mode != "bsde" && cfg.mode != "rbsde" &&
        cfg.mode != "2bsde") {
        fail("mode '" + cfg.mode + "' unknown (simulate | bsde | rbsde | 2bsde)");
    }

    const Json& problem = need(root, "problem", "config");
    cfg.family = parse_family(problem);
    const int d = cfg.family.members.front().d;
    const int m_dim = cfg.family.members.front().m;
    for (const auto& mem : cfg.family.members) {
        if (mem.d != d || mem.m != m_dim) fail("family members disagree on dimensions");
    }
    cfg.gen = problem.contains("generator") ? parse_generator(problem["generator"])
                                            : parse_generator(Json::object());
    cfg.term = problem.contains("terminal") ? parse_terminal(problem["terminal"])
                                            : TerminalSpec::constant(0.0);
    cfg.obstacle = problem.contains("obstacle") ? parse_obstacle(problem["obstacle"])
                                                : ObstacleSpec::unconstrained();
    cfg.rule = problem.contains("stopping") ? parse_stopping(problem["stopping"], d)
                                            : StoppingRule::deterministic(1.0);
    cfg.controls = problem.contains("controls") ? parse_controls(problem["controls"], m_dim)
                                                : DriftControlSet();

    const Json& num = need(root, "numerics", "config");
    const double n_steps = num_or(num, "n_steps", 0.0);
    if (!(n_steps >= 1.0)) fail("numerics.n_steps is required and must be >= 1");
    double h = num_or(num, "step_h", 0.0);
    if (h <= 0.0 && num.contains("horizon")) {
        h = num_or(num, "horizon", 0.0) / n_steps;
    }
    if (!(h > 0.0)) fail("numerics.step_h (or horizon) is required and must be positive");
    cfg.grid = TimeGrid(h, static_cast<std::size_t>(n_steps));
    const double n_paths = num_or(num, "n_paths", 0.0);
    if (!(n_paths >= 1.0)) fail("numerics.n_paths is required and must be >= 1");
    cfg.n_paths = static_cast<std::size_t>(n_paths);
    if (!num.contains("seed")) fail("numerics.seed is required (no nondeterministic default)");
    cfg.seed = num["seed"].get<std::uint64_t>();
    cfg.basis = num.contains("basis") ? parse_basis(num["basis"], d)
                                      : RegressionBasis::polynomial(3, Vec::Constant(d, -10.0),
                                                                    Vec::Constant(d, 10.0));
    if (num.contains("picard")) {
        const Json& p = num["picard"];
        cfg.picard.max_iters = static_cast<int>(num_or(p, "max_iters", 50.0));
        cfg.picard.tol = num_or(p, "tol", 1e-6);
        cfg.picard.implicit_y = bool_or(p, "implicit_y", false);
        cfg.picard.newton_max = static_cast<int>(num_or(p, "newton_max", 20.0));
        cfg.picard.newton_tol = num_or(p, "newton_tol", 1e-12);
    }
    const std::string zm = str_or(num, "z_mode", "covariation_x");
    if (zm == "covariation_x") {
        cfg.z_mode = ZMode::CovariationX;
    } else if (zm == "brownian_w") {
        cfg.z_mode = ZMode::BrownianW;
    } else {
        fail("z_mode '" + zm + "' unknown (covariation_x | brownian_w)");
    }
    if (num.contains("truncation_ladder")) {
        cfg.rbsde.ladder = list_of(num["truncation_ladder"], "numerics.truncation_ladder");
    }
    cfg.rbsde.tol = num_or(num, "truncation_tol", cfg.rbsde.tol);
    cfg.rbsde.keep_solutions = bool_or(num, "keep_truncation_solutions", false);
    cfg.rbsde.require_convergence = bool_or(num, "require_truncation_convergence", true);
    if (num.contains("bins")) {
        const Json& b = num["bins"];
        cfg.twobsde.bins.n_bins = static_cast<int>(num_or(b, "n_bins", 21.0));
        if (b.contains("lo") && b.contains("hi")) {
            cfg.twobsde.bins.lo = num_or(b, "lo", 0.0);
            cfg.twobsde.bins.hi = num_or(b, "hi", 0.0);
            cfg.twobsde.bins.auto_range = false;
        }
    }
    cfg.twobsde.picard = cfg.picard;
    cfg.twobsde.z_mode = cfg.z_mode;
    cfg.twobsde.keep_member_solutions = bool_or(num, "keep_member_solutions", false);
    cfg.twobsde.keep_k_tables = bool_or(num, "keep_k_tables", false);
    cfg.twobsde.min_bin_occupancy = num_or(num, "min_bin_occupancy", 0.01);
    cfg.threads = static_cast<int>(num_or(num, "threads", 0.0));
    cfg.norm_eta = num_or(num, "norm_eta", 0.0);
    cfg.norm_p = num_or(num, "norm_p", 2.0);

    if (root.contains("outputs")) {
        const Json& out = root["outputs"];
        if (!out.is_object()) fail("outputs must be an object of slot -> filename");
        for (const auto& [slot, fname] : out.items()) {
            if (!known_output_slots().count(slot)) {
                std::string valid;
                for (const auto& s : known_output_slots()) valid += s + " ";
                fail("outputs slot '" + slot + "' unknown (valid: " + valid + ")");
            }
            if (!fname.is_string()) fail("outputs." + slot + " must be a filename string");
            cfg.outputs.emplace_back(slot, fname.get<std::string>());
        }
    }
    if (root.contains("checks")) {
        const Json& checks = root["checks"];
        if (!checks.is_array()) fail("checks must be an array");
        for (const auto& c : checks) {
            CheckRequest req;
            if (c.is_string()) {
                req.name = c.get<std::string>();
                req.params = Json::object();
            } else if (c.is_object()) {
                req.name = str_or(c, "name", "");
                if (req.name.empty()) fail("check entry missing 'name'");
                req.params = c;
            } else {
                fail("check entries must be names or objects");
            }
            cfg.checks.push_back(std::move(req));
        }
    }
    if (root.contains("sweep")) {
        const Json& s = root["sweep"];
        cfg.sweep_axis = str_or(s, "axis", "");
        if (cfg.sweep_axis != "h" && cfg.sweep_axis != "n_paths" &&
            cfg.sweep_axis != "truncation_n" && cfg.sweep_axis != "basis_degree") {
            fail("sweep.axis must be one of h | n_paths | truncation_n | basis_degree");
        }
        cfg.sweep_values = list_of(need(s, "values", "sweep"), "sweep.values");
    }

    // Admissibility windows: collect every violation, then fail once.
    std::vector<std::string> violations;
    if (!(cfg.gen.moment_q > 1.0)) {
        violations.push_back("moment_q must exceed 1 (got " + std::to_string(cfg.gen.moment_q) +
                             ")");
    }
    if (!(cfg.gen.weight_rho > -cfg.gen.monotone_mu)) {
        violations.push_back("weight_rho must exceed -monotone_mu (rho=" +
                             std::to_string(cfg.gen.weight_rho) +
                             ", mu=" + std::to_string(cfg.gen.monotone_mu) + ")");
    }
    if (cfg.norm_eta < -cfg.gen.monotone_mu || !(cfg.norm_eta < cfg.gen.weight_rho)) {
        violations.push_back("norm_eta must lie in [-monotone_mu, weight_rho) (eta=" +
                             std::to_string(cfg.norm_eta) +
                             ", mu=" + std::to_string(cfg.gen.monotone_mu) +
                             ", rho=" + std::to_string(cfg.gen.weight_rho) + ")");
    }
    if (!(cfg.norm_p > 1.0 && cfg.norm_p < cfg.gen.moment_q)) {
        violations.push_back("norm_p must lie in (1, moment_q) (p=" +
                             std::to_string(cfg.norm_p) +
                             ", q=" + std::to_string(cfg.gen.moment_q) + ")");
    }
    if (cfg.gen.lipschitz_L < 0.0) violations.push_back("lipschitz_L must be nonnegative");
    if (!violations.empty()) {
        std::string msg = "config validation failed:";
        for (const auto& v : violations) msg += "\n  - " + v;
        throw ConfigError(msg);
    }

    // Canonical echo of every effective setting (manifest identity).
    Json r = Json::object();
    r["version"] = cfg.version;
    r["mode"] = cfg.mode;
    Json pj = Json::object();
    {
        Json gj = Json::object();
        gj["name"] = cfg.gen.name;
        gj["lipschitz_L"] = cfg.gen.lipschitz_L;
        gj["monotone_mu"] = cfg.gen.monotone_mu;
        gj["weight_rho"] = cfg.gen.weight_rho;
        gj["moment_q"] = cfg.gen.moment_q;
        pj["generator"] = gj;
        pj["terminal"] = cfg.term.name;
        pj["obstacle"] = cfg.obstacle.name;
        pj["stopping"] = stopping_json(cfg.rule);
        Json fj = Json::array();
        for (const auto& mem : cfg.family.members) {
            Json mj = Json::object();
            mj["name"] = mem.name;
            mj["d"] = mem.d;
            mj["m"] = mem.m;
            mj["x0"] = std::vector<double>(mem.x0.data(), mem.x0.data() + mem.x0.size());
            mj["sigma_bound"] = mem.sigma_bound;
            fj.push_back(mj);
        }
        pj["family"] = fj;
        pj["screen_members"] = cfg.family.generator_finiteness_check;
        Json cj = Json::object();
        cj["bound"] = cfg.controls.bound_L;
        Json names = Json::array();
        for (const auto& pol : cfg.controls.policies) names.push_back(pol.name);
        cj["policies"] = names;
        pj["controls"] = cj;
    }
    r["problem"] = pj;
    Json nj = Json::object();
    nj["step_h"] = cfg.grid.step_h;
    nj["n_steps"] = cfg.grid.n_steps;
    nj["n_paths"] = cfg.n_paths;
    nj["seed"] = cfg.seed;
    nj["basis"] = basis_json(cfg.basis);
    Json pic = Json::object();
    pic["max_iters"] = cfg.picard.max_iters;
    pic["tol"] = cfg.picard.tol;
    pic["implicit_y"] = cfg.picard.implicit_y;
    nj["picard"] = pic;
    nj["z_mode"] = zm;
    nj["truncation_ladder"] = cfg.rbsde.ladder;
    nj["truncation_tol"] = cfg.rbsde.tol;
    Json bj = Json::object();
    bj["n_bins"] = cfg.twobsde.bins.n_bins;
    bj["auto_range"] = cfg.twobsde.bins.auto_range;
    if (!cfg.twobsde.bins.auto_range) {
        bj["lo"] = cfg.twobsde.bins.lo;
        bj["hi"] = cfg.twobsde.bins.hi;
    }
    nj["bins"] = bj;
    nj["threads"] = cfg.threads;
    nj["norm_eta"] = cfg.norm_eta;
    nj["norm_p"] = cfg.norm_p;
    r["numerics"] = nj;
    Json oj = Json::object();
    for (const auto& [slot, fname] : cfg.outputs) oj[slot] = fname;
    r["outputs"] = oj;
    Json ckj = Json::array();
    for (const auto& c : cfg.checks) {
        Json e = c.params.is_object() ? c.params : Json::object();
        e["name"] = c.name;
        ckj.push_back(e);
    }
    r["checks"] = ckj;
    if (!cfg.sweep_axis.empty()) {
        Json sj = Json::object();
        sj["axis"] = cfg.sweep_axis;
        sj["values"] = cfg.sweep_values;
        r["sweep"] = sj;
    }
    cfg.resolved = std::move(r);
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    Json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return parse_config(j);
}

std::string config_hash(const Json& resolved) {
    const std::string s = resolved.dump();
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (const unsigned char c : s) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

Json make_manifest(const ExperimentConfig& cfg) {
    Json j = Json::object();
    j["library_version"] = kLibraryVersion;
    j["config_version"] = cfg.version;
    j["config_hash"] = config_hash(cfg.resolved);
    j["seed"] = cfg.seed;
    j["config"] = cfg.resolved;
    return j;
}

}  // namespace rhbsde
