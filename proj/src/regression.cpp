#include "rhbsde/regression.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "rhbsde/errors.hpp"
#include "rhbsde/parallel.hpp"

namespace rhbsde {

RegressionBasis RegressionBasis::polynomial(int degree, const Vec& lo, const Vec& hi) {
    if (degree < 0) throw ConfigError("polynomial basis: negative degree");
    if (lo.size() != hi.size() || lo.size() == 0) {
        throw ConfigError("polynomial basis: invalid domain box");
    }
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
        if (!(lo[i] < hi[i])) throw ConfigError("polynomial basis: empty domain box");
    }
    RegressionBasis b;
    b.kind = Kind::Polynomial;
    b.degree = degree;
    b.lo = lo;
    b.hi = hi;
    return b;
}

RegressionBasis RegressionBasis::piecewise_linear(int bins, double lo, double hi) {
    if (bins < 1) throw ConfigError("piecewise_linear basis: needs at least one cell");
    if (!(lo < hi)) throw ConfigError("piecewise_linear basis: empty domain");
    RegressionBasis b;
    b.kind = Kind::PiecewiseLinear;
    b.bins = bins;
    b.lo = Vec::Constant(1, lo);
    b.hi = Vec::Constant(1, hi);
    return b;
}

RegressionBasis RegressionBasis::indicator_bins(int bins, double lo, double hi) {
    if (bins < 1) throw ConfigError("indicator basis: needs at least one cell");
    if (!(lo < hi)) throw ConfigError("indicator basis: empty domain");
    RegressionBasis b;
    b.kind = Kind::IndicatorBins;
    b.bins = bins;
    b.lo = Vec::Constant(1, lo);
    b.hi = Vec::Constant(1, hi);
    return b;
}

namespace {

// Number of monomials of total degree <= deg in d variables.
int monomial_count(int d, int deg) {
    // C(d + deg, d)
    long long num = 1;
    for (int i = 1; i <= d; ++i) num = num * (deg + i) / i;
    return static_cast<int>(num);
}

// Enumerates exponents of total degree <= deg in lexicographic order,
// writing monomial values of the normalized coordinates u into phi.
void monomials(const double* u, int d, int deg, double* phi) {
    if (d == 1) {
        double v = 1.0;
        for (int j = 0; j <= deg; ++j) {
            phi[j] = v;
            v *= u[0];
        }
        return;
    }
    // Odometer over exponent vectors with total degree <= deg.
    std::vector<int> expo(d, 0);
    int idx = 0;
    while (true) {
        double v = 1.0;
        for (int i = 0; i < d; ++i) {
            for (int e = 0; e < expo[i]; ++e) v *= u[i];
        }
        phi[idx++] = v;
        int i = d - 1;
        for (; i >= 0; --i) {
            ++expo[i];
            int sum = 0;
            for (int j = 0; j < d; ++j) sum += expo[j];
            if (sum <= deg) break;
            expo[i] = 0;
        }
        if (i < 0) break;
    }
}

}  // namespace

int RegressionBasis::size(int d) const {
    switch (kind) {
        case Kind::Polynomial:
            return monomial_count(d, degree);
        case Kind::PiecewiseLinear:
            return bins + 1;
        case Kind::IndicatorBins:
            return bins;
    }
    return 0;
}

void RegressionBasis::eval(const double* x, int d, double* phi) const {
    if (kind == Kind::Polynomial) {
        double ubuf[8];
        std::vector<double> uvec;
        double* u = ubuf;
        if (d > 8) {
            uvec.resize(d);
            u = uvec.data();
        }
        for (int i = 0; i < d; ++i) {
            const double mid = 0.5 * (lo[i] + hi[i]);
            const double half = 0.5 * (hi[i] - lo[i]);
            u[i] = (x[i] - mid) / half;
        }
        monomials(u, d, degree, phi);
        return;
    }
    // One-dimensional cell bases.
    const double a = lo[0], b = hi[0];
    const int B = bins;
    const double w = (b - a) / B;
    if (kind == Kind::IndicatorBins) {
        for (int j = 0; j < B; ++j) phi[j] = 0.0;
        int cell = static_cast<int>(std::floor((x[0] - a) / w));
        if (cell < 0) cell = 0;
        if (cell >= B) cell = B - 1;
        phi[cell] = 1.0;
        return;
    }
    // Hat functions on B+1 nodes; states outside the box clamp to the edge.
    for (int j = 0; j <= B; ++j) phi[j] = 0.0;
    double s = (x[0] - a) / w;
    if (s < 0.0) s = 0.0;
    if (s > B) s = B;
    const int cell = std::min(B - 1, static_cast<int>(std::floor(s)));
    const double frac = s - cell;
    phi[cell] = 1.0 - frac;
    phi[cell + 1] = frac;
}

Eigen::VectorXd RegressionBasis::eval_vec(const Vec& x) const {
    const int d = static_cast<int>(x.size());
    Eigen::VectorXd phi(size(d));
    eval(x.data(), d, phi.data());
    return phi;
}

Regressor::Regressor(const RegressionBasis& basis, int d, double cond_threshold)
    : basis_(basis), d_(d), size_(basis.size(d)), cond_threshold_(cond_threshold) {
    if ((basis.kind != RegressionBasis::Kind::Polynomial) && d != 1) {
        throw ConfigError("cell bases support one state dimension");
    }
    if (basis.kind == RegressionBasis::Kind::Polynomial &&
        static_cast<int>(basis.lo.size()) != d) {
        throw ConfigError("regression basis: domain box dimension mismatch");
    }
}

Eigen::MatrixXd Regressor::fit_multi(const Array3D& states, std::size_t step,
                                     const std::vector<std::uint32_t>& rows,
                                     const std::vector<const double*>& targets,
                                     std::size_t stride, FitReport* report) const {
    const int B = size_;
    const int T = static_cast<int>(targets.size());
    const std::size_t n = rows.size();
    if (n == 0) throw SolverError("regression: empty sample set");

    // Blocked Gram accumulation: per-block partials combined in block
    // order, so the result is independent of the worker count.
    const std::size_t n_blocks = (n + kBlockSize - 1) / kBlockSize;
    std::vector<Eigen::MatrixXd> g_part(n_blocks), r_part(n_blocks);
    parallel_blocks(n, [&](std::size_t lo_i, std::size_t hi_i) {
        const std::size_t blk = lo_i / kBlockSize;
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(B, B);
        Eigen::MatrixXd R = Eigen::MatrixXd::Zero(B, T);
        Eigen::VectorXd phi(B);
        for (std::size_t i = lo_i; i < hi_i; ++i) {
            const std::uint32_t p = rows[i];
            basis_.eval(states.at(p, step), d_, phi.data());
            G.selfadjointView<Eigen::Lower>().rankUpdate(phi);
            for (int t = 0; t < T; ++t) R.col(t) += phi * targets[t][p * stride];
        }
        g_part[blk] = G;
        r_part[blk] = R;
    });
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(B, B);
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(B, T);
    for (std::size_t blk = 0; blk < n_blocks; ++blk) {
        G += g_part[blk];
        R += r_part[blk];
    }
    G = G.selfadjointView<Eigen::Lower>();

    // Spectral solve with relative cutoff: rank deficiency (duplicate
    // states, empty cells) projects to the minimum-norm solution.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    const Eigen::VectorXd& lam = es.eigenvalues();
    const double lam_max = std::max(lam.maxCoeff(), 0.0);
    const double cutoff = 1e-12 * std::max(lam_max, 1e-300);
    double lam_min_kept = lam_max;
    int rank = 0;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(B);
    for (int i = 0; i < B; ++i) {
        if (lam[i] > cutoff) {
            inv[i] = 1.0 / lam[i];
            lam_min_kept = std::min(lam_min_kept, lam[i]);
            ++rank;
        }
    }
    if (rank == 0) throw SolverError("regression: zero design matrix");
    const double cond = lam_max / lam_min_kept;
    if (cond > cond_threshold_) {
        throw SolverError("regression: design matrix condition " + std::to_string(cond) +
                          " above threshold");
    }
    if (report) {
        report->cond = cond;
        report->rank = rank;
        report->n_samples = n;
    }
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose() * R;
}

Eigen::VectorXd Regressor::fit(const Array3D& states, std::size_t step,
                               const std::vector<std::uint32_t>& rows,
                               const std::vector<double>& target, FitReport* report) const {
    std::vector<const double*> t{target.data()};
    // target is indexed by path id; stride 1 over rows' entries.
    return fit_multi(states, step, rows, t, 1, report).col(0);
}

double Regressor::eval(const Eigen::VectorXd& coeffs, const double* x) const {
    Eigen::VectorXd phi(size_);
    basis_.eval(x, d_, phi.data());
    return phi.dot(coeffs);
}

}  // namespace rhbsde
