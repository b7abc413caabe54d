#include "rhbsde/norms.hpp"

#include <cmath>

#include "rhbsde/errors.hpp"
#include "rhbsde/parallel.hpp"

namespace rhbsde {

namespace {

// Shared tail: average the per-path functional (optionally tilted), take
// the p-th root, delta-method the standard error through the root.
NormReport finish(const std::string& kind, const PathBundle& bundle,
                  const std::vector<double>& per_path, const NormParams& params,
                  const std::vector<DensityProcess>* densities) {
    NormReport rep;
    rep.norm_kind = kind;
    rep.p = params.p;
    rep.alpha = params.alpha;
    double mean = 0.0, se = 0.0;
    if (densities && !densities->empty()) {
        const DominatedExpectation de = dominated_expectation(bundle, per_path, *densities);
        mean = de.value;
        se = de.std_error;
        rep.argmax_control = de.argmax_name;
    } else {
        weighted_mean_se(per_path, {}, mean, se);
    }
    rep.mean_power = mean;
    if (mean <= 0.0) {
        rep.value = 0.0;
        rep.std_error = 0.0;
        return rep;
    }
    rep.value = std::pow(mean, 1.0 / params.p);
    rep.std_error = se * rep.value / (params.p * mean);
    return rep;
}

void require_p(const NormParams& params) {
    if (!(params.p > 1.0)) throw ConfigError("norm: exponent p must exceed 1");
}

}  // namespace

NormReport norm_D(const PathBundle& bundle, const Array2D& Y, const NormParams& params,
                  const std::vector<DensityProcess>* densities) {
    require_p(params);
    if (Y.rows != bundle.n_paths || Y.cols != bundle.grid.n_steps + 1) {
        throw ConfigError("norm_D: Y shape mismatch");
    }
    std::vector<double> per_path(bundle.n_paths);
    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            const std::size_t stop = bundle.stop_index[p];
            double sup = 0.0;
            for (std::size_t k = 0; k <= stop; ++k) {
                const double v = std::abs(std::exp(params.alpha * bundle.grid.t(k)) * Y(p, k));
                if (v > sup) sup = v;
            }
            per_path[p] = std::pow(sup, params.p);
        }
    });
    return finish("D", bundle, per_path, params, densities);
}

NormReport norm_H(const PathBundle& bundle, const Array3D& Z, const NormParams& params,
                  const std::vector<DensityProcess>* densities) {
    require_p(params);
    if (Z.rows != bundle.n_paths || Z.depth != static_cast<std::size_t>(bundle.d)) {
        throw ConfigError("norm_H: Z shape mismatch");
    }
    const double h = bundle.grid.step_h;
    std::vector<double> per_path(bundle.n_paths);
    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        Vec z(bundle.d);
        for (std::size_t p = lo; p < hi; ++p) {
            const std::size_t stop = bundle.stop_index[p];
            double acc = 0.0;
            for (std::size_t k = 0; k < stop; ++k) {
                for (int i = 0; i < bundle.d; ++i) z[i] = Z(p, k, i);
                const auto sig = bundle.sigma.at(p, k);
                const double w = std::exp(params.alpha * bundle.grid.t(k));
                acc += w * w * (sig.transpose() * z).squaredNorm() * h;
            }
            per_path[p] = std::pow(acc, 0.5 * params.p);
        }
    });
    return finish("H", bundle, per_path, params, densities);
}

NormReport norm_K(const PathBundle& bundle, const Array2D& dK, const NormParams& params,
                  const std::vector<DensityProcess>* densities) {
    require_p(params);
    if (dK.rows != bundle.n_paths) throw ConfigError("norm_K: dK shape mismatch");
    std::vector<double> per_path(bundle.n_paths);
    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            const std::size_t stop =
                std::min<std::size_t>(bundle.stop_index[p], dK.cols);
            double acc = 0.0;
            for (std::size_t k = 0; k < stop; ++k) {
                const double inc = dK(p, k);
                if (inc < -1e-12) throw SolverError("norm_K: decreasing K increment");
                acc += std::exp(params.alpha * bundle.grid.t(k)) * std::max(inc, 0.0);
            }
            per_path[p] = std::pow(acc, params.p);
        }
    });
    return finish("K", bundle, per_path, params, densities);
}

DoobReport doob_check(const PathBundle& bundle, const Array2D& M, double p, double q,
                      const std::vector<DensityProcess>* densities) {
    if (!(p > 0.0) || !(q > p)) throw ConfigError("doob_check: need 0 < p < q");
    std::vector<double> sup_p(bundle.n_paths), term_q(bundle.n_paths);
    parallel_blocks(bundle.n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t pp = lo; pp < hi; ++pp) {
            const std::size_t stop = bundle.stop_index[pp];
            double sup = 0.0;
            for (std::size_t k = 0; k <= stop; ++k) {
                sup = std::max(sup, std::abs(M(pp, k)));
            }
            sup_p[pp] = std::pow(sup, p);
            term_q[pp] = std::pow(std::abs(M(pp, stop)), q);
        }
    });
    double lhs, lhs_se, mq, mq_se;
    if (densities && !densities->empty()) {
        const auto a = dominated_expectation(bundle, sup_p, *densities);
        const auto b = dominated_expectation(bundle, term_q, *densities);
        lhs = a.value;
        lhs_se = a.std_error;
        mq = b.value;
        mq_se = b.std_error;
    } else {
        weighted_mean_se(sup_p, {}, lhs, lhs_se);
        weighted_mean_se(term_q, {}, mq, mq_se);
    }
    DoobReport rep;
    rep.lhs = lhs;
    rep.lhs_se = lhs_se;
    const double c = q / (q - p);
    rep.rhs = c * std::pow(mq, p / q);
    rep.rhs_se = mq > 0.0 ? c * (p / q) * std::pow(mq, p / q - 1.0) * mq_se : 0.0;
    rep.slack = 3.0 * std::sqrt(rep.lhs_se * rep.lhs_se + rep.rhs_se * rep.rhs_se);
    rep.pass = rep.lhs <= rep.rhs + rep.slack;
    return rep;
}

}  // namespace rhbsde
