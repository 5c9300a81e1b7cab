#pragma once

#include <utility>

#include "cqv/geometry.hpp"
#include "cqv/hamilton_jacobi.hpp"
#include "cqv/process.hpp"
#include "cqv/types.hpp"

namespace cqv::expansion {

using hj::VelocityFieldSet;
using process::ProcessParams;

// Raw moment tensors entering the coordinate-level assembly of
// E_tau[g . dZ dZ]: the dtau^2 part of E[dZ dZ], the symmetrized third
// moment, and the Isserlis-paired fourth moment.
struct MomentAssembly {
    CVec point;
    cx dtau_coeff = cx(0, 0);
    cx dtau2_coeff = cx(0, 0);
    CMat e2_dtau2;  // dtau^2 coefficient of E[dZ^mu dZ^nu]
    Tensor3 e3;     // dtau^2 coefficient of E[dZ^nu dZ^rho dZ^sigma]
    Tensor4 e4;     // dtau^2 coefficient of E[dZ^mu dZ^nu dZ^rho dZ^sigma]
};

cx cond_exp_potential(const std::function<cx(const CVec&)>& potential, const CVec& z);

// E_tau[g_{mu nu} W^{mu nu}] = n alpha lambda.
cx cond_exp_trace(const geometry::MetricEval& eval, const ProcessParams& params);

// E_tau[A_mu W^mu] = A_mu w_hat^mu + (alpha lambda / 2) div A. vfs may be
// null, meaning zero drift.
cx cond_exp_linear(const geometry::GaugePotential& A, const VelocityFieldSet* vfs,
                   const geometry::MetricEval& eval, const ProcessParams& params, const CVec& z);

// Covariant closed form of E_tau[g . dZ dZ]: (n alpha lambda,
// g w_hat w_hat + alpha lambda div w_hat - alpha^2 lambda^2 R / 6).
std::pair<cx, cx> cond_exp_quadratic_covariant(const VelocityFieldSet& vfs,
                                               const geometry::MetricEval& eval,
                                               const ProcessParams& params);

// The same pair assembled from raw coordinate-level moments: drift and
// second-moment terms of E[dZ dZ], the symmetrized third moment contracted
// with Christoffels, Gaussian-paired fourth moments against Gamma Gamma and
// (dGamma + Gamma Gamma). Equality with the covariant form, including the
// curvature coefficient, is the module's core identity.
struct RawAssembly {
    std::pair<cx, cx> pair;
    MomentAssembly moments;
};
RawAssembly cond_exp_quadratic_raw(const VelocityFieldSet& vfs, const geometry::MetricEval& eval,
                                   const ProcessParams& params);

}  // namespace cqv::expansion
