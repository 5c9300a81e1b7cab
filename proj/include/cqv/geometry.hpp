#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>

#include "cqv/errors.hpp"
#include "cqv/types.hpp"

namespace cqv::geometry {

enum class Signature { Riemannian, Lorentzian };
enum class DerivMode { Analytic, FiniteDifference };

using MetricFn = std::function<CMat(const CVec&)>;      // g_{mu nu}(z)
using DMetricFn = std::function<Tensor3(const CVec&)>;  // (sigma, mu, nu) -> d_sigma g_{mu nu}
using D2MetricFn = std::function<Tensor4(const CVec&)>; // (rho, sigma, mu, nu)
using VectorFn = std::function<CVec(const CVec&)>;
using DomainFn = std::function<bool(const CVec&)>;

// Analytic metric components on a single coordinate chart, evaluable at
// complex points by direct continuation of the closed-form expressions.
// First/second derivative callbacks are optional; the fallback is a 4th-order
// central difference with step h = 1e-4 * (1 + |coordinate|).
struct ChartedMetric {
    int dim = 0;
    Signature signature = Signature::Riemannian;
    std::string name;
    MetricFn g;
    DMetricFn dg;
    D2MetricFn d2g;
    DomainFn in_domain;

    bool has_analytic_derivatives() const { return static_cast<bool>(dg) && static_cast<bool>(d2g); }
};

// Unit timelike observer u^mu used for the metric rotation g_E = g^-1 + 2 u u.
struct ObserverField {
    VectorFn u;
};

// Covector potential A_mu; the charge coupling lives in ProcessParams.
struct GaugePotential {
    VectorFn A;
    VectorFn dA_flat;  // optional analytic Jacobian, row-major (mu*n+nu) -> d_mu A_nu
    std::function<Tensor3(const CVec&)> d2A;  // optional (rho, sigma, nu) -> d_rho d_sigma A_nu
};

struct MetricEval {
    CVec point;
    CMat g, g_inv;
    Tensor3 dg;       // (sigma, mu, nu) = d_sigma g_{mu nu}
    Tensor4 d2g;      // (rho, sigma, mu, nu)
    Tensor3 dg_inv;   // d_sigma g^{mu nu}
    Tensor4 d2g_inv;
    Tensor3 gamma;       // (mu, nu, rho) = Gamma^mu_{nu rho}
    CVec gamma_trace;    // Gamma^mu = g^{nu rho} Gamma^mu_{nu rho}
    Tensor4 dgamma;      // (sigma, mu, nu, rho) = d_sigma Gamma^mu_{nu rho}
    CMat ricci;
    cx ricci_scalar = cx(0, 0);

    int dim() const { return static_cast<int>(point.size()); }
};

// Lightweight variant for simulation hot loops: components and inverse only.
struct MetricCore {
    CMat g, g_inv;
};

MetricEval eval_metric(const ChartedMetric& metric, const CVec& point, DerivMode mode);
MetricEval eval_metric(const ChartedMetric& metric, const CVec& point);
MetricCore eval_metric_core(const ChartedMetric& metric, const CVec& point);

// Gradient of the Ricci scalar (covariant = partial for a scalar), obtained by
// differencing ricci_scalar as a function of the chart point.
CVec eval_grad_ricci(const ChartedMetric& metric, const CVec& point, DerivMode mode);

// g_E^{mu nu} = g^{mu nu} + 2 u^mu u^nu. At real Lorentzian points this is
// positive definite provided g_{mu nu} u^mu u^nu = -1, which is enforced there.
CMat euclideanize(const CMat& g_inv, const CVec& u);

// H_{mu nu} = nabla_mu A_nu - nabla_nu A_mu; the Christoffel terms cancel, so
// partial derivatives suffice.
CMat field_strength(const GaugePotential& A, const CVec& point);

// Lower-triangular sigma with sigma sigma^T = a (transpose without
// conjugation). Reduces to standard Cholesky for real SPD input.
CMat complex_cholesky(const CMat& a);

// Built-in chart registry, keyed by name, with per-metric parameter maps.
struct BuiltinChart {
    ChartedMetric metric;
    std::optional<ObserverField> observer;
};

BuiltinChart make_builtin_chart(const std::string& name, const std::map<std::string, double>& params = {});
std::vector<std::string> builtin_chart_names();

inline CMat tensor3_slice(const Tensor3& t, int first) {
    const int n = t.dim();
    CMat m(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) m(a, b) = t(first, a, b);
    return m;
}

}  // namespace cqv::geometry
