#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rhbsde/girsanov.hpp"
#include "rhbsde/sde_paths.hpp"

namespace rhbsde {

// Exponent p > 1 (except the maximal-inequality check, which allows any
// 0 < p < q) and exponential weight alpha applied as e^{alpha t}.
struct NormParams {
    double p = 2.0;
    double alpha = 0.0;
};

// One estimated norm: value = (sup-over-tilts weighted mean)^(1/p); the
// standard error is mapped through the root by the delta method.
struct NormReport {
    std::string norm_kind;
    double p = 0.0;
    double alpha = 0.0;
    double value = 0.0;
    double std_error = 0.0;
    double mean_power = 0.0;      // the p-th power mean before the root
    std::string argmax_control;   // empty when no tilts were supplied
};

// sup_{k <= stop} |e^{alpha t_k} Y_k|^p, averaged (tilted when densities
// are given), then the p-th root.
NormReport norm_D(const PathBundle& bundle, const Array2D& Y, const NormParams& params,
                  const std::vector<DensityProcess>* densities = nullptr);

// (sum_{k < stop} |e^{alpha t_k} sigma_k^T Z_k|^2 h)^(p/2) averaged, rooted.
NormReport norm_H(const PathBundle& bundle, const Array3D& Z, const NormParams& params,
                  const std::vector<DensityProcess>* densities = nullptr);

// (sum_{k < stop} e^{alpha t_k} dK_k)^p averaged, rooted.  dK must be
// nonnegative (checked).
NormReport norm_K(const PathBundle& bundle, const Array2D& dK, const NormParams& params,
                  const std::vector<DensityProcess>* densities = nullptr);

// Maximal-inequality check for a per-path process M (paths x steps+1),
// martingale under at least one tilt in the set:
//   sup-mean of sup_{k<=stop}|M_k|^p  <=  q/(q-p) * (sup-mean |M_stop|^q)^(p/q)
// with additive slack of three combined standard errors.
struct DoobReport {
    double lhs = 0.0, rhs = 0.0;
    double lhs_se = 0.0, rhs_se = 0.0;
    double slack = 0.0;
    bool pass = false;
};

DoobReport doob_check(const PathBundle& bundle, const Array2D& M, double p, double q,
                      const std::vector<DensityProcess>* densities = nullptr);

}  // namespace rhbsde
