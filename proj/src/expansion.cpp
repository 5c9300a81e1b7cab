#include "cqv/expansion.hpp"

#include "cqv/errors.hpp"
#include "cqv/fd.hpp"

namespace cqv::expansion {

namespace {

using geometry::MetricEval;

CMat jac_of_field(const std::function<CVec(const CVec&)>& f, const std::function<CMat(const CVec&)>& jac,
                  const CVec& z, int n) {
    if (jac) return jac(z);
    CMat out = CMat::Zero(n, n);
    if (!f) return out;
    for (int r = 0; r < n; ++r) {
        CVec d = fd::d1(f, z, r);
        for (int v = 0; v < n; ++v) out(r, v) = d[v];
    }
    return out;
}

// d_rho w^nu for the Ito drift w = w_hat - (alpha lambda / 2) Gamma^nu. When
// the covariant Jacobian is analytic the Christoffel-trace derivative comes
// from the metric evaluation, keeping the whole chain closed-form.
CMat jac_ito_drift(const VelocityFieldSet& vfs, const MetricEval& ev, const ProcessParams& params) {
    const int n = ev.dim();
    if (vfs.jac_w_hat) {
        CMat jac = vfs.jac_w_hat(ev.point);
        const cx al = params.alpha_lambda();
        for (int r = 0; r < n; ++r)
            for (int m = 0; m < n; ++m) {
                cx d_trace(0, 0);
                for (int a = 0; a < n; ++a)
                    for (int b = 0; b < n; ++b)
                        d_trace += ev.dg_inv(r, a, b) * ev.gamma(m, a, b) +
                                   ev.g_inv(a, b) * ev.dgamma(r, m, a, b);
                jac(r, m) -= 0.5 * al * d_trace;
            }
        return jac;
    }
    return jac_of_field(vfs.w, nullptr, ev.point, n);
}

}  // namespace

cx cond_exp_potential(const std::function<cx(const CVec&)>& potential, const CVec& z) {
    return potential ? potential(z) : cx(0, 0);
}

cx cond_exp_trace(const geometry::MetricEval& eval, const ProcessParams& params) {
    return static_cast<double>(eval.dim()) * params.alpha_lambda();
}

cx cond_exp_linear(const geometry::GaugePotential& A, const VelocityFieldSet* vfs,
                   const geometry::MetricEval& ev, const ProcessParams& params, const CVec& z) {
    const int n = ev.dim();
    const CVec a_lo = A.A(z);
    CMat dA(n, n);
    if (A.dA_flat) {
        CVec flat = A.dA_flat(z);
        for (int r = 0; r < n; ++r)
            for (int v = 0; v < n; ++v) dA(r, v) = flat[r * n + v];
    } else {
        for (int r = 0; r < n; ++r) {
            CVec col = fd::d1(A.A, z, r);
            for (int v = 0; v < n; ++v) dA(r, v) = col[v];
        }
    }

    cx a_dot_w(0, 0);
    if (vfs && vfs->w_hat) {
        const CVec hat = vfs->w_hat(z);
        for (int m = 0; m < n; ++m) a_dot_w += a_lo[m] * hat[m];
    }

    // div A^mu with A^mu = g^{mu nu} A_nu
    cx div(0, 0);
    for (int m = 0; m < n; ++m)
        for (int v = 0; v < n; ++v) div += ev.dg_inv(m, m, v) * a_lo[v] + ev.g_inv(m, v) * dA(m, v);
    for (int m = 0; m < n; ++m)
        for (int k = 0; k < n; ++k)
            for (int v = 0; v < n; ++v) div += ev.gamma(m, m, k) * ev.g_inv(k, v) * a_lo[v];

    return a_dot_w + 0.5 * params.alpha_lambda() * div;
}

std::pair<cx, cx> cond_exp_quadratic_covariant(const VelocityFieldSet& vfs,
                                               const geometry::MetricEval& ev,
                                               const ProcessParams& params) {
    const int n = ev.dim();
    const cx al = params.alpha_lambda();
    const CVec hat = vfs.w_hat(ev.point);
    const CMat jac = jac_of_field(vfs.w_hat, vfs.jac_w_hat, ev.point, n);

    cx quad(0, 0);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) quad += ev.g(a, b) * hat[a] * hat[b];

    cx div(0, 0);
    for (int m = 0; m < n; ++m) {
        div += jac(m, m);
        for (int k = 0; k < n; ++k) div += ev.gamma(m, m, k) * hat[k];
    }

    const cx first = static_cast<double>(n) * al;
    const cx second = quad + al * div - al * al / 6.0 * ev.ricci_scalar;
    return {first, second};
}

RawAssembly cond_exp_quadratic_raw(const VelocityFieldSet& vfs, const geometry::MetricEval& ev,
                                   const ProcessParams& params) {
    const int n = ev.dim();
    const cx al = params.alpha_lambda();
    const CVec& z = ev.point;

    const CVec w = vfs.w ? vfs.w(z) : CVec::Zero(n);
    const CMat dw = jac_ito_drift(vfs, ev, params);  // dw(rho, nu) = d_rho w^nu

    // w2 = alpha lambda g^{-1} and its derivatives from the metric evaluation.
    auto w2 = [&](int a, int b) { return al * ev.g_inv(a, b); };
    auto dw2 = [&](int s, int a, int b) { return al * ev.dg_inv(s, a, b); };
    auto d2w2 = [&](int r, int s, int a, int b) { return al * ev.d2g_inv(r, s, a, b); };

    MomentAssembly ma;
    ma.point = z;
    ma.e2_dtau2 = CMat::Zero(n, n);
    ma.e3 = Tensor3(n);
    ma.e4 = Tensor4(n);

    // E[dZ^mu dZ^nu] = w2 dtau + e2 dtau^2
    for (int mu = 0; mu < n; ++mu)
        for (int nu = 0; nu < n; ++nu) {
            cx e2 = w[mu] * w[nu];
            for (int r = 0; r < n; ++r) {
                e2 += 0.5 * w[r] * dw2(r, mu, nu);
                e2 += 0.5 * w2(mu, r) * dw(r, nu);
                e2 += 0.5 * w2(nu, r) * dw(r, mu);
                for (int s = 0; s < n; ++s) e2 += 0.25 * w2(r, s) * d2w2(r, s, mu, nu);
            }
            ma.e2_dtau2(mu, nu) = e2;
        }

    // E[dZ^nu dZ^rho dZ^sigma] at order dtau^2 (fully symmetric)
    for (int nu = 0; nu < n; ++nu)
        for (int rho = 0; rho < n; ++rho)
            for (int sg = 0; sg < n; ++sg) {
                cx e3 = w[nu] * w2(rho, sg) + w[rho] * w2(nu, sg) + w[sg] * w2(nu, rho);
                for (int k = 0; k < n; ++k)
                    e3 += 0.5 * (w2(nu, k) * dw2(k, rho, sg) + w2(rho, k) * dw2(k, nu, sg) +
                                 w2(sg, k) * dw2(k, nu, rho));
                ma.e3(nu, rho, sg) = e3;
            }

    // E[dZ^mu dZ^nu dZ^rho dZ^sigma]: Gaussian pairing of quadratic moments.
    for (int mu = 0; mu < n; ++mu)
        for (int nu = 0; nu < n; ++nu)
            for (int rho = 0; rho < n; ++rho)
                for (int sg = 0; sg < n; ++sg)
                    ma.e4(mu, nu, rho, sg) = w2(mu, nu) * w2(rho, sg) + w2(mu, rho) * w2(nu, sg) +
                                             w2(mu, sg) * w2(nu, rho);

    // dtau coefficient: g_{mu nu} w2^{mu nu}
    cx dtau(0, 0);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) dtau += ev.g(a, b) * w2(a, b);
    ma.dtau_coeff = dtau;

    // dtau^2 coefficient, term by term as displayed.
    cx dtau2(0, 0);
    for (int mu = 0; mu < n; ++mu)
        for (int nu = 0; nu < n; ++nu) dtau2 += ev.g(mu, nu) * ma.e2_dtau2(mu, nu);

    for (int mu = 0; mu < n; ++mu)
        for (int nu = 0; nu < n; ++nu)
            for (int rho = 0; rho < n; ++rho)
                for (int sg = 0; sg < n; ++sg)
                    dtau2 += ev.g(mu, nu) * ev.gamma(mu, rho, sg) * ma.e3(nu, rho, sg);

    for (int mu = 0; mu < n; ++mu)
        for (int nu = 0; nu < n; ++nu)
            for (int rho = 0; rho < n; ++rho)
                for (int sg = 0; sg < n; ++sg)
                    for (int ka = 0; ka < n; ++ka)
                        for (int la = 0; la < n; ++la)
                            dtau2 += 0.25 * ev.g(mu, nu) * ev.gamma(mu, rho, sg) *
                                     ev.gamma(nu, ka, la) * ma.e4(rho, sg, ka, la);

    for (int mu = 0; mu < n; ++mu)
        for (int nu = 0; nu < n; ++nu)
            for (int rho = 0; rho < n; ++rho)
                for (int sg = 0; sg < n; ++sg)
                    for (int ka = 0; ka < n; ++ka) {
                        cx bracket = ev.dgamma(ka, mu, rho, sg);
                        for (int la = 0; la < n; ++la)
                            bracket += ev.gamma(mu, ka, la) * ev.gamma(la, rho, sg);
                        dtau2 += (1.0 / 3.0) * ev.g(mu, nu) * bracket * ma.e4(nu, ka, rho, sg);
                    }

    ma.dtau2_coeff = dtau2;
    return RawAssembly{{dtau, dtau2}, std::move(ma)};
}

}  // namespace cqv::expansion
