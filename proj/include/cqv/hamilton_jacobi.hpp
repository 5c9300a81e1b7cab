#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "cqv/geometry.hpp"
#include "cqv/process.hpp"
#include "cqv/types.hpp"

namespace cqv::hj {

using process::ProcessParams;

// Drift data on a chart. w is the Ito drift, w_hat the covariant one; they
// differ by (alpha lambda / 2) Gamma^mu. w2 is alpha lambda g^{-1} throughout
// this artifact. The Jacobian/second-derivative callbacks are optional; when
// absent consumers fall back to nested finite differences.
struct VelocityFieldSet {
    std::function<CVec(const CVec&)> w;
    std::function<CVec(const CVec&)> w_hat;
    std::function<CMat(const CVec&)> w2;
    std::function<CMat(const CVec&)> jac_w_hat;       // (rho, nu) -> d_rho w_hat^nu
    std::function<Tensor3(const CVec&)> d2_w_hat;     // (rho, sigma, nu)
};

// Hamilton's principal function S(z, tau) with optional analytic gradient.
struct PrincipalFunction {
    std::function<cx(const CVec&, double)> S;
    std::function<CVec(const CVec&, double)> grad_S;
};

// Wavefunction input for drift construction; either an analytic callable or a
// sampled grid wrapped into a callable upstream. grad_log_psi may be null.
struct Wavefunction {
    std::function<cx(const CVec&)> psi;
    std::function<CVec(const CVec&)> grad_log_psi;
    std::function<CMat(const CVec&)> jac_grad_log_psi;   // (rho, nu) -> d_rho d_nu ln psi
    std::function<Tensor3(const CVec&)> d2_grad_log_psi; // (rho, sigma, nu)
    double node_threshold = 1e-8;  // relative to ref_amplitude
    double ref_amplitude = 1.0;
};

// w_hat^mu = lambda g^{mu nu} (alpha d_nu ln Psi - q A_nu); w = w_hat minus the
// Christoffel-trace correction. Points with |Psi| below the node threshold
// raise NodeRegion; the engine turns that into a rejected path.
VelocityFieldSet velocity_from_wavefunction(const Wavefunction& psi, const ProcessParams& params,
                                            const geometry::ChartedMetric& metric,
                                            const geometry::GaugePotential* A = nullptr);

// g w_hat w_hat + alpha lambda div(w_hat) - (alpha^2 lambda^2 / 6) R + lambda^2 m^2,
// one value per probe; ~0 for on-shell fields.
std::vector<cx> constraint_residual(const VelocityFieldSet& vfs, const ProcessParams& params,
                                    const geometry::ChartedMetric& metric,
                                    const std::vector<CVec>& probes);

// Componentwise LHS - RHS of the relativistic velocity-field equation.
std::vector<CVec> field_equation_residual(const VelocityFieldSet& vfs, const ProcessParams& params,
                                          const geometry::ChartedMetric& metric,
                                          const geometry::GaugePotential* A,
                                          const std::vector<CVec>& probes);

// Non-relativistic variant with the d_t term and the potential forcing.
// potential_grad may be null (finite differenced); dw_dt defaults to zero
// (stationary fields), dA_dt likewise.
std::vector<CVec> nonrel_field_equation_residual(const VelocityFieldSet& vfs, const ProcessParams& params,
                                                 const geometry::ChartedMetric& metric,
                                                 const geometry::GaugePotential* A,
                                                 const std::function<cx(const CVec&)>& potential,
                                                 const std::function<CVec(const CVec&)>& potential_grad,
                                                 const std::vector<CVec>& probes,
                                                 const std::function<CVec(const CVec&)>& dw_dt = nullptr,
                                                 const std::function<CVec(const CVec&)>& dA_dt = nullptr);

struct ClassicalTrajectory {
    std::vector<double> times;
    std::vector<RVec> position;
    std::vector<RVec> velocity;
    double max_constraint_drift = 0.0;  // max |g zdot zdot - g zdot zdot|_0|
};

// RK4 integration of the alpha -> 0 limit: geodesic motion with the Lorentz
// force, constraint g zdot zdot = -lambda^2 m^2 monitored at every step.
ClassicalTrajectory integrate_classical_limit(const ProcessParams& params,
                                              const geometry::ChartedMetric& metric,
                                              const geometry::GaugePotential* A, const RVec& z0,
                                              const RVec& zdot0, double dtau, int n_steps);

}  // namespace cqv::hj
