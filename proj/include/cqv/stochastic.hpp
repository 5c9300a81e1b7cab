#pragma once

#include <functional>
#include <vector>

#include "cqv/geometry.hpp"
#include "cqv/types.hpp"

namespace cqv::stochastic {

// One discretized trajectory Z_tau on a chart. Integrals below operate on the
// stored partition itself (post hoc), which is the simulation grid.
struct DiscretePath {
    std::vector<double> times;
    std::vector<CVec> positions;
    double step = 0.0;

    int dim() const { return positions.empty() ? 0 : static_cast<int>(positions.front().size()); }
    size_t size() const { return positions.size(); }
    void validate() const;
};

// First-order part v^mu plus symmetric second-order part v^{mu nu}.
struct SecondOrderVector {
    CVec first;
    CMat second;
};

using PathScalarFn = std::function<cx(const CVec&)>;
using PathGradFn = std::function<CVec(const CVec&)>;

// Left-endpoint sum: sum_i f(Z_i) (Z^mu_{i+1} - Z^mu_i).
cx ito_integral(const PathScalarFn& f, const DiscretePath& path, int coord);

// Midpoint-average sum: sum_i 1/2 [f(Z_i) + f(Z_{i+1})] (Z^mu_{i+1} - Z^mu_i).
cx strat_integral(const PathScalarFn& f, const DiscretePath& path, int coord);

struct QuadraticCovariation {
    std::vector<cx> running;  // partial sums, running[i] over the first i steps
    cx total = cx(0, 0);
};
QuadraticCovariation quadratic_covariation(const DiscretePath& path, int mu, int nu);

// Left-endpoint integral against the quadratic covariation increments.
cx qv_integral(const PathScalarFn& f, const DiscretePath& path, int mu, int nu);

// strat - ito - 1/2 sum_nu int d_nu f d[Z^mu, Z^nu]. Exactly zero for constant
// and linear f; O(dtau^{1/2}) or better in RMS otherwise. grad_f may be null,
// in which case a central difference of f is used.
cx ito_strat_conversion_residual(const PathScalarFn& f, const PathGradFn& grad_f,
                                 const DiscretePath& path, int mu);

// hat(v)^mu = v^mu + 1/2 Gamma^mu_{sigma kappa} v^{sigma kappa}.
CVec covariant_hat(const SecondOrderVector& v, const geometry::MetricEval& eval);

}  // namespace cqv::stochastic
