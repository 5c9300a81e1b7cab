#include "cqv/hamilton_jacobi.hpp"

#include <cmath>

#include "cqv/errors.hpp"
#include "cqv/fd.hpp"

namespace cqv::hj {

namespace {

using geometry::ChartedMetric;
using geometry::GaugePotential;
using geometry::MetricEval;

CVec gauge_at(const GaugePotential* A, const CVec& z, int n) {
    return A ? A->A(z) : CVec::Zero(n);
}

CMat gauge_jacobian(const GaugePotential* A, const CVec& z, int n) {
    CMat dA = CMat::Zero(n, n);
    if (!A) return dA;
    if (A->dA_flat) {
        CVec flat = A->dA_flat(z);
        for (int m = 0; m < n; ++m)
            for (int v = 0; v < n; ++v) dA(m, v) = flat[m * n + v];
    } else {
        for (int m = 0; m < n; ++m) {
            CVec col = fd::d1(A->A, z, m);
            for (int v = 0; v < n; ++v) dA(m, v) = col[v];
        }
    }
    return dA;
}

CMat jac_w_hat_at(const VelocityFieldSet& vfs, const CVec& z, int n) {
    if (vfs.jac_w_hat) return vfs.jac_w_hat(z);
    CMat jac(n, n);
    for (int r = 0; r < n; ++r) {
        CVec d = fd::d1(vfs.w_hat, z, r);
        for (int v = 0; v < n; ++v) jac(r, v) = d[v];
    }
    return jac;
}

Tensor3 d2_w_hat_at(const VelocityFieldSet& vfs, const CVec& z, int n) {
    if (vfs.d2_w_hat) return vfs.d2_w_hat(z);
    Tensor3 out(n);
    for (int r = 0; r < n; ++r)
        for (int s = r; s < n; ++s) {
            CVec d = fd::d2(vfs.w_hat, z, r, s);
            for (int v = 0; v < n; ++v) {
                out(r, s, v) = d[v];
                out(s, r, v) = d[v];
            }
        }
    return out;
}

// Divergence of the covariant drift: d_mu w^mu + Gamma^mu_{mu k} w^k.
cx divergence(const CVec& w, const CMat& jac, const MetricEval& ev) {
    const int n = ev.dim();
    cx div(0, 0);
    for (int m = 0; m < n; ++m) {
        div += jac(m, m);
        for (int k = 0; k < n; ++k) div += ev.gamma(m, m, k) * w[k];
    }
    return div;
}

// Light metric evaluation for the classical integrator: Christoffels only.
struct GammaEval {
    CMat g, g_inv;
    Tensor3 gamma;
};

GammaEval eval_gamma(const ChartedMetric& metric, const CVec& z) {
    GammaEval out;
    out.g = metric.g(z);
    out.g_inv = out.g.inverse();
    const int n = metric.dim;
    Tensor3 dg = metric.dg ? metric.dg(z) : Tensor3(n);
    if (!metric.dg) {
        for (int s = 0; s < n; ++s) {
            CMat m = fd::d1(metric.g, z, s);
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) dg(s, a, b) = m(a, b);
        }
    }
    out.gamma = Tensor3(n);
    for (int m = 0; m < n; ++m)
        for (int a = 0; a < n; ++a)
            for (int b = a; b < n; ++b) {
                cx sum(0, 0);
                for (int k = 0; k < n; ++k)
                    sum += out.g_inv(m, k) * (dg(a, k, b) + dg(b, k, a) - dg(k, a, b));
                out.gamma(m, a, b) = 0.5 * sum;
                out.gamma(m, b, a) = 0.5 * sum;
            }
    return out;
}

}  // namespace

VelocityFieldSet velocity_from_wavefunction(const Wavefunction& psi_in, const ProcessParams& params,
                                            const ChartedMetric& metric, const GaugePotential* A) {
    params.validate();
    const int n = metric.dim;
    const cx alpha = params.alpha();
    const cx al = params.alpha_lambda();
    const double lambda = params.lambda;
    const double q = params.q;
    const double node_cut = psi_in.node_threshold * psi_in.ref_amplitude;

    auto psi = psi_in;  // captured by value in the closures below

    auto grad_log = [psi, n, node_cut](const CVec& z) {
        const cx value = psi.psi(z);
        if (std::abs(value) < node_cut) throw NodeRegion("wavefunction node at probe point");
        if (psi.grad_log_psi) return psi.grad_log_psi(z);
        CVec g(n);
        for (int k = 0; k < n; ++k) g[k] = fd::d1(psi.psi, z, k) / value;
        return g;
    };

    VelocityFieldSet vfs;
    vfs.w_hat = [grad_log, &metric, A, alpha, lambda, q, n](const CVec& z) {
        geometry::MetricCore core = geometry::eval_metric_core(metric, z);
        const CVec L = grad_log(z);
        const CVec Av = gauge_at(A, z, n);
        CVec hat = CVec::Zero(n);
        for (int m = 0; m < n; ++m)
            for (int v = 0; v < n; ++v) hat[m] += lambda * core.g_inv(m, v) * (alpha * L[v] - q * Av[v]);
        return hat;
    };
    vfs.w = [vfs_hat = vfs.w_hat, &metric, al, n](const CVec& z) {
        MetricEval ev = geometry::eval_metric(metric, z);
        CVec w = vfs_hat(z);
        for (int m = 0; m < n; ++m) w[m] -= 0.5 * al * ev.gamma_trace[m];
        return w;
    };
    vfs.w2 = [&metric, al](const CVec& z) {
        geometry::MetricCore core = geometry::eval_metric_core(metric, z);
        return CMat(al * core.g_inv);
    };

    if (psi_in.jac_grad_log_psi && metric.has_analytic_derivatives()) {
        auto jac_L = psi_in.jac_grad_log_psi;
        vfs.jac_w_hat = [grad_log, jac_L, &metric, A, alpha, lambda, q, n](const CVec& z) {
            MetricEval ev = geometry::eval_metric(metric, z);
            const CVec L = grad_log(z);
            const CVec Av = gauge_at(A, z, n);
            const CMat dL = jac_L(z);
            const CMat dA = gauge_jacobian(A, z, n);
            CMat jac = CMat::Zero(n, n);  // (rho, mu)
            for (int r = 0; r < n; ++r)
                for (int m = 0; m < n; ++m) {
                    cx sum(0, 0);
                    for (int v = 0; v < n; ++v) {
                        sum += ev.dg_inv(r, m, v) * (alpha * L[v] - q * Av[v]);
                        sum += ev.g_inv(m, v) * (alpha * dL(r, v) - q * dA(r, v));
                    }
                    jac(r, m) = lambda * sum;
                }
            return jac;
        };
        if (psi_in.d2_grad_log_psi) {
            auto d2_L = psi_in.d2_grad_log_psi;
            vfs.d2_w_hat = [grad_log, jac_L, d2_L, &metric, A, alpha, lambda, q, n](const CVec& z) {
                MetricEval ev = geometry::eval_metric(metric, z);
                const CVec L = grad_log(z);
                const CVec Av = gauge_at(A, z, n);
                const CMat dL = jac_L(z);
                const CMat dA = gauge_jacobian(A, z, n);
                const Tensor3 d2L = d2_L(z);
                Tensor3 d2A(n);
                if (A && A->d2A) d2A = A->d2A(z);
                Tensor3 out(n);
                for (int r = 0; r < n; ++r)
                    for (int s = 0; s < n; ++s)
                        for (int m = 0; m < n; ++m) {
                            cx sum(0, 0);
                            for (int v = 0; v < n; ++v) {
                                sum += ev.d2g_inv(r, s, m, v) * (alpha * L[v] - q * Av[v]);
                                sum += ev.dg_inv(r, m, v) * (alpha * dL(s, v) - q * dA(s, v));
                                sum += ev.dg_inv(s, m, v) * (alpha * dL(r, v) - q * dA(r, v));
                                sum += ev.g_inv(m, v) * (alpha * d2L(r, s, v) - q * d2A(r, s, v));
                            }
                            out(r, s, m) = lambda * sum;
                        }
                return out;
            };
        }
    }
    return vfs;
}

std::vector<cx> constraint_residual(const VelocityFieldSet& vfs, const ProcessParams& params,
                                    const ChartedMetric& metric, const std::vector<CVec>& probes) {
    const int n = metric.dim;
    const cx al = params.alpha_lambda();
    std::vector<cx> out;
    out.reserve(probes.size());
    for (const CVec& z : probes) {
        MetricEval ev = geometry::eval_metric(metric, z);
        const CVec hat = vfs.w_hat(z);
        const CMat jac = jac_w_hat_at(vfs, z, n);
        cx quad(0, 0);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) quad += ev.g(a, b) * hat[a] * hat[b];
        const cx r = quad + al * divergence(hat, jac, ev) - al * al / 6.0 * ev.ricci_scalar +
                     params.lambda * params.lambda * params.m * params.m;
        out.push_back(r);
    }
    return out;
}

namespace {

// Shared core: covariant derivative, box operator, and field-strength pieces.
struct ResidualContext {
    MetricEval ev;
    CVec hat;
    CMat jac;     // d_rho w_hat^nu
    Tensor3 d2;   // d_rho d_sigma w_hat^nu
    CMat cd;      // nabla_rho w_hat^nu
    CVec box;     // Box w_hat^nu
    CMat H;       // field strength
    CVec divH;    // nabla^nu H_{mu nu}
};

ResidualContext build_context(const VelocityFieldSet& vfs, const ChartedMetric& metric,
                              const GaugePotential* A, const CVec& z) {
    const int n = metric.dim;
    ResidualContext ctx{geometry::eval_metric(metric, z), vfs.w_hat(z),
                        jac_w_hat_at(vfs, z, n), d2_w_hat_at(vfs, z, n),
                        CMat::Zero(n, n), CVec::Zero(n), CMat::Zero(n, n), CVec::Zero(n)};
    const MetricEval& ev = ctx.ev;

    for (int r = 0; r < n; ++r)
        for (int v = 0; v < n; ++v) {
            cx sum = ctx.jac(r, v);
            for (int k = 0; k < n; ++k) sum += ev.gamma(v, r, k) * ctx.hat[k];
            ctx.cd(r, v) = sum;
        }

    for (int v = 0; v < n; ++v) {
        cx box(0, 0);
        for (int r = 0; r < n; ++r)
            for (int s = 0; s < n; ++s) {
                // d_r (nabla_s w^v)
                cx d_cd = ctx.d2(r, s, v);
                for (int k = 0; k < n; ++k)
                    d_cd += ev.dgamma(r, v, s, k) * ctx.hat[k] + ev.gamma(v, s, k) * ctx.jac(r, k);
                cx full = d_cd;
                for (int k = 0; k < n; ++k)
                    full += -ev.gamma(k, r, s) * ctx.cd(k, v) + ev.gamma(v, r, k) * ctx.cd(s, k);
                box += ev.g_inv(r, s) * full;
            }
        ctx.box[v] = box;
    }

    if (A) {
        ctx.H = geometry::field_strength(*A, z);
        // dH(s, m, v) = d_s H_{m v}
        Tensor3 dH(n);
        for (int s = 0; s < n; ++s) {
            CMat d = fd::d1([&A](const CVec& p) { return geometry::field_strength(*A, p); }, z, s);
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) dH(s, a, b) = d(a, b);
        }
        for (int m = 0; m < n; ++m) {
            cx sum(0, 0);
            for (int v = 0; v < n; ++v)
                for (int s = 0; s < n; ++s) {
                    cx nab = dH(s, m, v);
                    for (int k = 0; k < n; ++k)
                        nab -= ev.gamma(k, s, m) * ctx.H(k, v) + ev.gamma(k, s, v) * ctx.H(m, k);
                    sum += ev.g_inv(v, s) * nab;
                }
            ctx.divH[m] = sum;
        }
    }
    return ctx;
}

}  // namespace

std::vector<CVec> field_equation_residual(const VelocityFieldSet& vfs, const ProcessParams& params,
                                          const ChartedMetric& metric, const GaugePotential* A,
                                          const std::vector<CVec>& probes) {
    const int n = metric.dim;
    const cx alpha = params.alpha();
    const double lambda = params.lambda;
    const double q = params.q;
    std::vector<CVec> out;
    out.reserve(probes.size());

    for (const CVec& z : probes) {
        ResidualContext ctx = build_context(vfs, metric, A, z);
        const MetricEval& ev = ctx.ev;

        CVec grad_r = CVec::Zero(n);
        if (std::abs(ev.ricci_scalar) > 1e-14 || !metric.has_analytic_derivatives())
            grad_r = geometry::eval_grad_ricci(metric, z,
                                               metric.has_analytic_derivatives()
                                                   ? geometry::DerivMode::Analytic
                                                   : geometry::DerivMode::FiniteDifference);

        CVec res(n);
        for (int m = 0; m < n; ++m) {
            cx lhs(0, 0);
            for (int v = 0; v < n; ++v) {
                cx transport(0, 0);
                for (int r = 0; r < n; ++r) transport += ctx.hat[r] * ctx.cd(r, v);
                lhs += (1.0 / lambda) * ev.g(m, v) * transport;
                lhs -= q * ctx.H(m, v) * ctx.hat[v];
                lhs += 0.5 * alpha * (ev.g(m, v) * ctx.box[v] - ev.ricci(m, v) * ctx.hat[v]);
            }
            const cx rhs = 0.5 * alpha * lambda * (q * ctx.divH[m] + alpha / 6.0 * grad_r[m]);
            res[m] = lhs - rhs;
        }
        out.push_back(res);
    }
    return out;
}

std::vector<CVec> nonrel_field_equation_residual(const VelocityFieldSet& vfs, const ProcessParams& params,
                                                 const ChartedMetric& metric, const GaugePotential* A,
                                                 const std::function<cx(const CVec&)>& potential,
                                                 const std::function<CVec(const CVec&)>& potential_grad,
                                                 const std::vector<CVec>& probes,
                                                 const std::function<CVec(const CVec&)>& dw_dt,
                                                 const std::function<CVec(const CVec&)>& dA_dt) {
    const int n = metric.dim;
    const cx alpha = params.alpha();
    const double mass = params.m;
    const double q = params.q;
    std::vector<CVec> out;
    out.reserve(probes.size());

    for (const CVec& z : probes) {
        ResidualContext ctx = build_context(vfs, metric, A, z);
        const MetricEval& ev = ctx.ev;

        CVec grad_u = CVec::Zero(n);
        if (potential) {
            if (potential_grad) {
                grad_u = potential_grad(z);
            } else {
                for (int k = 0; k < n; ++k) grad_u[k] = fd::d1(potential, z, k);
            }
        }
        CVec grad_r = CVec::Zero(n);
        if (std::abs(ev.ricci_scalar) > 1e-14 || !metric.has_analytic_derivatives())
            grad_r = geometry::eval_grad_ricci(metric, z,
                                               metric.has_analytic_derivatives()
                                                   ? geometry::DerivMode::Analytic
                                                   : geometry::DerivMode::FiniteDifference);
        const CVec wdot = dw_dt ? dw_dt(z) : CVec::Zero(n);
        const CVec a_dot = dA_dt ? dA_dt(z) : CVec::Zero(n);

        CVec res(n);
        for (int i = 0; i < n; ++i) {
            cx lhs(0, 0);
            for (int j = 0; j < n; ++j) {
                cx transport = wdot[j];
                for (int k = 0; k < n; ++k) transport += ctx.hat[k] * ctx.cd(k, j);
                lhs += mass * ev.g(i, j) * transport;
                lhs -= q * ctx.H(i, j) * ctx.hat[j];
                lhs += 0.5 * alpha * (ev.g(i, j) * ctx.box[j] - ev.ricci(i, j) * ctx.hat[j]);
            }
            const cx rhs = 0.5 * alpha * q / mass * ctx.divH[i] - q * a_dot[i] - grad_u[i] +
                           alpha * alpha / (12.0 * mass) * grad_r[i];
            res[i] = lhs - rhs;
        }
        out.push_back(res);
    }
    return out;
}

ClassicalTrajectory integrate_classical_limit(const ProcessParams& params, const ChartedMetric& metric,
                                              const GaugePotential* A, const RVec& z0,
                                              const RVec& zdot0, double dtau, int n_steps) {
    const int n = metric.dim;
    const double lambda = params.lambda;
    const double q = params.q;
    const double target = -lambda * lambda * params.m * params.m;

    auto constraint = [&](const RVec& z, const RVec& v) {
        GammaEval ge = eval_gamma(metric, z.cast<cx>());
        cx c(0, 0);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) c += ge.g(a, b) * v[a] * v[b];
        return c.real();
    };

    auto acceleration = [&](const RVec& z, const RVec& v) {
        GammaEval ge = eval_gamma(metric, z.cast<cx>());
        RVec acc = RVec::Zero(n);
        for (int m = 0; m < n; ++m) {
            cx a(0, 0);
            for (int r = 0; r < n; ++r)
                for (int s = 0; s < n; ++s) a -= ge.gamma(m, r, s) * v[r] * v[s];
            acc[m] = a.real();
        }
        if (A && q != 0.0) {
            CMat H = geometry::field_strength(*A, z.cast<cx>());
            for (int m = 0; m < n; ++m) {
                cx f(0, 0);
                for (int k = 0; k < n; ++k)
                    for (int v2 = 0; v2 < n; ++v2) f += ge.g_inv(m, k) * H(k, v2) * v[v2];
                acc[m] += lambda * q * f.real();
            }
        }
        return acc;
    };

    const double c0 = constraint(z0, zdot0);
    if (std::abs(c0 - target) > 1e-10)
        throw DomainError("initial velocity violates the line-element constraint");

    ClassicalTrajectory traj;
    traj.times.reserve(n_steps + 1);
    traj.position.reserve(n_steps + 1);
    traj.velocity.reserve(n_steps + 1);

    RVec z = z0, v = zdot0;
    traj.times.push_back(0.0);
    traj.position.push_back(z);
    traj.velocity.push_back(v);

    for (int k = 1; k <= n_steps; ++k) {
        const RVec k1z = v;
        const RVec k1v = acceleration(z, v);
        const RVec k2z = v + 0.5 * dtau * k1v;
        const RVec k2v = acceleration(z + 0.5 * dtau * k1z, v + 0.5 * dtau * k1v);
        const RVec k3z = v + 0.5 * dtau * k2v;
        const RVec k3v = acceleration(z + 0.5 * dtau * k2z, v + 0.5 * dtau * k2v);
        const RVec k4z = v + dtau * k3v;
        const RVec k4v = acceleration(z + dtau * k3z, v + dtau * k3v);
        z += dtau / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
        v += dtau / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);

        const double drift = std::abs(constraint(z, v) - c0);
        traj.max_constraint_drift = std::max(traj.max_constraint_drift, drift);
        if (drift > 1e-6)
            throw StepSizeError("constraint drift " + std::to_string(drift) + " at step " +
                                std::to_string(k));
        traj.times.push_back(k * dtau);
        traj.position.push_back(z);
        traj.velocity.push_back(v);
    }
    return traj;
}

}  // namespace cqv::hj
