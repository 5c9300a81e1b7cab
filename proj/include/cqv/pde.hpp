#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "cqv/geometry.hpp"
#include "cqv/hamilton_jacobi.hpp"
#include "cqv/process.hpp"
#include "cqv/types.hpp"

namespace cqv::pde {

using process::ProcessParams;

enum class Boundary { Periodic, Dirichlet };
enum class CurvatureCoupling { RicciSixth, Conformal, Off };

// Coefficient multiplying R in the diffusion operator. The conformal choice
// (n-2)/(4(n-1)) coincides with 1/6 exactly in four dimensions, which the
// config switch makes easy to probe.
double curvature_coefficient(CurvatureCoupling coupling, int n);

struct GridSpec {
    std::vector<double> lo, hi;
    std::vector<int> npts;
    Boundary boundary = Boundary::Dirichlet;
    double dt = 1e-3;

    int dims() const { return static_cast<int>(npts.size()); }
    // Periodic grids exclude the duplicate endpoint.
    double h(int axis) const {
        return boundary == Boundary::Periodic ? (hi[axis] - lo[axis]) / npts[axis]
                                              : (hi[axis] - lo[axis]) / (npts[axis] - 1);
    }
    size_t total() const;
    double coord(int axis, int index) const { return lo[axis] + index * h(axis); }
    CVec point(size_t flat_index) const;
    size_t flatten(const std::vector<int>& idx) const;
    void validate() const;  // every axis needs >= 16 points
};

struct ComplexField {
    GridSpec grid;
    CVec values;
    double time = 0.0;

    double l2_norm() const;  // sqrt(sum |psi|^2 * prod h)
    cx at(const std::vector<int>& idx) const { return values[grid.flatten(idx)]; }
};

ComplexField sample_field(const GridSpec& grid, const std::function<cx(const CVec&)>& f, double time = 0.0);

struct EvolveOptions {
    int snapshot_stride = 0;  // 0 = final only
    CurvatureCoupling coupling = CurvatureCoupling::RicciSixth;
};

struct EvolveResult {
    ComplexField final;
    std::vector<ComplexField> snapshots;
    std::vector<double> norms;          // L2 after every step
    double stability_bound = 0.0;       // recorded data-adapted bound
    double max_norm_drift_per_step = 0.0;
    int n_steps = 0;
};

using ScalarFn = std::function<cx(const CVec&)>;

// Crank-Nicolson integration of the non-relativistic complex diffusion
// equation, marching backward from the terminal datum over `span`. The
// potential carries the Feynman-Kac sign: a shift U -> U + c multiplies the
// solution by exp(-c (T-t) / alpha), and at real alpha the solution matches
// E[exp(-int U) u(X_T)].
EvolveResult evolve_backward_nonrel(const ComplexField& terminal, const ProcessParams& params,
                                    const geometry::ChartedMetric* metric,
                                    const geometry::GaugePotential* A, const ScalarFn& U,
                                    double span, const EvolveOptions& options = {});

// Relativistic evolution: spectral Fourier multipliers on flat periodic
// charts, Crank-Nicolson with the Laplace-Beltrami operator on diagonal
// curved charts. Growing-mode support in the terminal datum raises
// IllPosedError instead of silently clipping.
EvolveResult evolve_backward_rel(const ComplexField& terminal, const ProcessParams& params,
                                 const geometry::ChartedMetric* metric,
                                 const geometry::GaugePotential* A, double span,
                                 const EvolveOptions& options = {});

struct EigenPair {
    cx energy;
    CVec phi;          // grid-normalized eigenvector
    double residual;   // ||(K - E) phi|| / ||phi||
};

// Stationary modes of the separated wave equation. Returned energies follow
// the backward-time factor exp(E_k (T - t) / alpha): for alpha = i, A = 0 and
// real U they are the eigenvalues of -Lap/2m + U (up the spectrum from the
// ground state); for alpha = 1 they are the decay rates of the heat flow.
std::vector<EigenPair> stationary_eigs_nonrel(const ProcessParams& params,
                                              const geometry::ChartedMetric* metric,
                                              const geometry::GaugePotential* A, const ScalarFn& U,
                                              const GridSpec& grid, int k_max,
                                              const EvolveOptions& options = {});

// Pointwise field probes with optional analytic derivative callbacks.
struct ProbeField {
    std::function<cx(const CVec&)> value;
    std::function<CVec(const CVec&)> grad;  // optional
    std::function<CMat(const CVec&)> hess;  // optional
};

// [(nabla - qA/alpha)^2 - R/6 + m^2/alpha^2] Phi at each probe.
std::vector<cx> klein_gordon_residual(const ProbeField& phi, const ProcessParams& params,
                                      const geometry::ChartedMetric& metric,
                                      const geometry::GaugePotential* A,
                                      const std::vector<CVec>& probes,
                                      CurvatureCoupling coupling = CurvatureCoupling::RicciSixth);

struct PrincipalWavefunction {
    std::function<cx(const CVec&, double)> psi;            // exp{(S + lambda m^2 tau / 2)/alpha}
    std::function<double(const CVec&, double)> abs2;       // direct |psi|^2
    std::function<double(const CVec&, double)> abs2_polar; // the (rho, phi) bookkeeping formula
};

PrincipalWavefunction wavefunction_from_principal(const hj::PrincipalFunction& S,
                                                  const ProcessParams& params);

// Loop integral of grad S along a closed polyline; a non-vanishing value means
// S is multivalued on the chart and raises TopologyError.
void check_single_valued(const hj::PrincipalFunction& S, const std::vector<CVec>& loop, double tau,
                         double tol = 1e-8);

// Wraps a sampled field into the drift-construction input: multilinear
// interpolation on the real slice with a first-order analytic continuation
// off it, central-difference gradients, and a node mask relative to the
// field's maximum amplitude.
hj::Wavefunction wavefunction_from_grid(const ComplexField& field, double node_threshold = 1e-8);

}  // namespace cqv::pde
