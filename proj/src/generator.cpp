#include "rhbsde/generator.hpp"

#include <cmath>
#include <limits>

#include "rhbsde/errors.hpp"
#include "rhbsde/rng.hpp"

namespace rhbsde {

GeneratorSpec GeneratorSpec::affine(double a, const Vec& b, double c, const std::string& label) {
    GeneratorSpec g;
    Vec bb = b;
    g.F = [a, bb, c](double, const Vec&, double y, const Vec& z, const Mat& sigma) {
        return a * y + bb.dot(sigma.transpose() * z) + c;
    };
    g.lipschitz_L = std::max(std::abs(a), bb.norm());
    g.monotone_mu = -a;
    g.weight_rho = std::max(0.0, a) + 0.5;  // default admissible choice
    g.moment_q = 2.0;
    g.name = label.empty() ? "affine" : label;
    return g;
}

GeneratorSpec GeneratorSpec::affine_scalar(double a, double b, double c,
                                           const std::string& label) {
    return affine(a, Vec::Constant(1, b), c, label);
}

void GeneratorSpec::validate_window() const {
    if (!(weight_rho > -monotone_mu)) {
        throw ConfigError("generator window: weight_rho must exceed -monotone_mu (rho=" +
                          std::to_string(weight_rho) + ", mu=" + std::to_string(monotone_mu) +
                          ")");
    }
    if (!(moment_q > 1.0)) {
        throw ConfigError("generator window: moment_q must exceed 1");
    }
    if (lipschitz_L < 0.0) throw ConfigError("generator window: negative Lipschitz constant");
}

void validate_norm_window(const GeneratorSpec& gen, double eta, double p) {
    gen.validate_window();
    if (eta < -gen.monotone_mu) {
        throw ConfigError("norm window: eta below -monotone_mu");
    }
    if (!(eta < gen.weight_rho)) {
        throw ConfigError("norm window: eta must lie strictly below weight_rho");
    }
    if (!(p > 1.0 && p < gen.moment_q)) {
        throw ConfigError("norm window: p must lie in (1, moment_q)");
    }
}

void validate_generator(const GeneratorSpec& gen, const PathBundle& bundle,
                        std::size_t n_probes, std::uint64_t seed) {
    const CounterRng rng(seed);
    const double L = gen.lipschitz_L * (1.0 + 1e-9) + 1e-12;
    const double mu = gen.monotone_mu;
    Vec z1(bundle.d), z2(bundle.d), x(bundle.d);
    for (std::size_t i = 0; i < n_probes; ++i) {
        const std::size_t p = static_cast<std::size_t>(rng.uniform(i, 0, 0) * bundle.n_paths) %
                              bundle.n_paths;
        const std::size_t k =
            static_cast<std::size_t>(rng.uniform(i, 1, 0) * bundle.grid.n_steps) %
            std::max<std::size_t>(bundle.stop_index[p], 1);
        for (int j = 0; j < bundle.d; ++j) x[j] = bundle.X(p, k, j);
        const Mat sigma = Mat(bundle.sigma.at(p, k));
        const double t = bundle.grid.t(k);
        const double y1 = 4.0 * rng.normal(i, 2, 0);
        const double y2 = 4.0 * rng.normal(i, 3, 0);
        for (int j = 0; j < bundle.d; ++j) {
            z1[j] = 2.0 * rng.normal(i, 4, j);
            z2[j] = 2.0 * rng.normal(i, 5, j);
        }
        const double f11 = gen.F(t, x, y1, z1, sigma);
        const double f22 = gen.F(t, x, y2, z2, sigma);
        const double gap = std::abs(y1 - y2) + (sigma.transpose() * (z1 - z2)).norm();
        if (std::abs(f11 - f22) > L * gap) {
            throw ConfigError("generator probe: Lipschitz constant violated");
        }
        const double f12 = gen.F(t, x, y1, z2, sigma);
        const double lhs = (y1 - y2) * (f12 - f22);
        const double rhs = -mu * (y1 - y2) * (y1 - y2);
        if (lhs > rhs + 1e-9 * (1.0 + std::abs(rhs))) {
            throw ConfigError("generator probe: monotonicity constant violated");
        }
    }
}

TerminalSpec TerminalSpec::constant(double c) {
    TerminalSpec t;
    t.xi = [c](const StoppedPathView&) { return c; };
    t.name = "const=" + std::to_string(c);
    return t;
}

TerminalSpec TerminalSpec::state_functional(std::function<double(const Vec&)> g,
                                            const std::string& label) {
    TerminalSpec t;
    auto gg = std::move(g);
    t.xi = [gg](const StoppedPathView& v) { return gg(v.state_at_stop()); };
    t.state_fn = gg;
    t.name = label;
    return t;
}

TerminalSpec TerminalSpec::path_functional(std::function<double(const StoppedPathView&)> f,
                                           const std::string& label) {
    TerminalSpec t;
    t.xi = std::move(f);
    t.name = label;
    return t;
}

ObstacleSpec ObstacleSpec::unconstrained() {
    ObstacleSpec o;
    o.constrained = false;
    o.name = "none";
    return o;
}

ObstacleSpec ObstacleSpec::of(std::function<double(double, const Vec&)> s,
                              const std::string& label) {
    ObstacleSpec o;
    o.constrained = true;
    o.S = std::move(s);
    o.name = label;
    return o;
}

}  // namespace rhbsde
