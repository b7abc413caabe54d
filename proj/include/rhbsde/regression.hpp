#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "rhbsde/sde_paths.hpp"

namespace rhbsde {

// Finite-dimensional family used for conditional expectations.  All kinds
// work on states normalized into the domain box; basis values are bounded
// on the box.  One spatial dimension for bins and hats; polynomials accept
// any d (total-degree monomials).
struct RegressionBasis {
    enum class Kind { Polynomial, PiecewiseLinear, IndicatorBins };

    Kind kind = Kind::Polynomial;
    int degree = 3;   // Polynomial
    int bins = 20;    // PiecewiseLinear node count - 1 / IndicatorBins cells
    Vec lo, hi;       // domain box, one entry per state dimension

    static RegressionBasis polynomial(int degree, const Vec& lo, const Vec& hi);
    static RegressionBasis piecewise_linear(int bins, double lo, double hi);
    static RegressionBasis indicator_bins(int bins, double lo, double hi);

    int size(int d) const;                    // number of basis functions
    void eval(const double* x, int d, double* phi) const;
    Eigen::VectorXd eval_vec(const Vec& x) const;
};

// Least-squares fit diagnostics.  cond is measured on the retained spectrum
// of the Gram matrix: directions below the relative cutoff are projected
// out (all paths sharing one state at k = 0 is legitimate, not an error).
struct FitReport {
    double cond = 1.0;
    int rank = 0;
    std::size_t n_samples = 0;
};

class Regressor {
  public:
    Regressor(const RegressionBasis& basis, int d, double cond_threshold = 1e14);

    // Fits coefficients of E[target | state] over the listed sample rows.
    // states: flat n_paths x d at a fixed step; rows: sample subset.
    Eigen::VectorXd fit(const Array3D& states, std::size_t step,
                        const std::vector<std::uint32_t>& rows,
                        const std::vector<double>& target, FitReport* report = nullptr) const;

    // Multi-target variant sharing one Gram factorization (used for the
    // d components of a martingale-increment regression).
    Eigen::MatrixXd fit_multi(const Array3D& states, std::size_t step,
                              const std::vector<std::uint32_t>& rows,
                              const std::vector<const double*>& targets, std::size_t stride,
                              FitReport* report = nullptr) const;

    double eval(const Eigen::VectorXd& coeffs, const double* x) const;

    int basis_size() const { return size_; }
    const RegressionBasis& basis() const { return basis_; }

  private:
    RegressionBasis basis_;
    int d_;
    int size_;
    double cond_threshold_;
};

}  // namespace rhbsde
