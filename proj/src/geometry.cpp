#include "cqv/geometry.hpp"

#include <cmath>

#include "cqv/fd.hpp"

namespace cqv::geometry {

namespace {

constexpr double kFdScale = 1e-4;
constexpr double kDetTol = 1e-12;
constexpr double kRealSliceTol = 1e-12;

bool is_real_point(const CVec& z) {
    for (Eigen::Index i = 0; i < z.size(); ++i)
        if (std::abs(z[i].imag()) > kRealSliceTol) return false;
    return true;
}

Tensor3 fd_dg(const MetricFn& g, const CVec& z, int n) {
    Tensor3 out(n);
    for (int s = 0; s < n; ++s) {
        CMat m = fd::d1(g, z, s, kFdScale);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) out(s, a, b) = m(a, b);
    }
    return out;
}

Tensor4 fd_d2g_from_dg(const DMetricFn& dg, const CVec& z, int n) {
    Tensor4 out(n);
    for (int r = 0; r < n; ++r) {
        Tensor3 t = fd::d1([&](const CVec& p) { return dg(p); }, z, r, kFdScale);
        for (int s = 0; s < n; ++s)
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) out(r, s, a, b) = t(s, a, b);
    }
    return out;
}

Tensor4 fd_d2g_from_g(const MetricFn& g, const CVec& z, int n) {
    Tensor4 out(n);
    for (int r = 0; r < n; ++r)
        for (int s = r; s < n; ++s) {
            CMat m = fd::d2(g, z, r, s, kFdScale);
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) {
                    out(r, s, a, b) = m(a, b);
                    out(s, r, a, b) = m(a, b);
                }
        }
    return out;
}

}  // namespace

MetricEval eval_metric(const ChartedMetric& metric, const CVec& point, DerivMode mode) {
    const int n = metric.dim;
    if (point.size() != n) throw DomainError("point dimension does not match chart");
    if (metric.in_domain && !metric.in_domain(point)) throw DomainError("point outside chart domain of " + metric.name);
    if (mode == DerivMode::Analytic && !metric.has_analytic_derivatives())
        throw DomainError("analytic derivative callbacks not present for " + metric.name);

    MetricEval ev;
    ev.point = point;
    ev.g = metric.g(point);

    Eigen::FullPivLU<CMat> lu(ev.g);
    double scale = ev.g.cwiseAbs().maxCoeff();
    if (scale <= 0.0 || std::abs(lu.determinant()) < kDetTol * std::pow(scale, n))
        throw SingularMetric("|det g| below tolerance at chart point of " + metric.name);
    ev.g_inv = lu.inverse();

    if (mode == DerivMode::Analytic) {
        ev.dg = metric.dg(point);
        ev.d2g = metric.d2g(point);
    } else {
        ev.dg = fd_dg(metric.g, point, n);
        if (metric.dg)
            ev.d2g = fd_d2g_from_dg(metric.dg, point, n);
        else
            ev.d2g = fd_d2g_from_g(metric.g, point, n);
    }

    // d g^-1 = -g^-1 (dg) g^-1
    ev.dg_inv = Tensor3(n);
    std::vector<CMat> dgi(n), dgm(n);
    for (int s = 0; s < n; ++s) {
        dgm[s] = tensor3_slice(ev.dg, s);
        dgi[s] = -ev.g_inv * dgm[s] * ev.g_inv;
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) ev.dg_inv(s, a, b) = dgi[s](a, b);
    }

    // d^2 g^-1 = g^-1 dg_r g^-1 dg_s g^-1 + (r<->s) - g^-1 d2g g^-1
    ev.d2g_inv = Tensor4(n);
    for (int r = 0; r < n; ++r)
        for (int s = 0; s < n; ++s) {
            CMat d2 = CMat::Zero(n, n);
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) d2(a, b) = ev.d2g(r, s, a, b);
            CMat m = ev.g_inv * dgm[r] * ev.g_inv * dgm[s] * ev.g_inv +
                     ev.g_inv * dgm[s] * ev.g_inv * dgm[r] * ev.g_inv - ev.g_inv * d2 * ev.g_inv;
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) ev.d2g_inv(r, s, a, b) = m(a, b);
        }

    // Gamma^m_{n r} = 1/2 g^{m k} (d_n g_{k r} + d_r g_{k n} - d_k g_{n r})
    ev.gamma = Tensor3(n);
    for (int m = 0; m < n; ++m)
        for (int a = 0; a < n; ++a)
            for (int b = a; b < n; ++b) {
                cx sum(0, 0);
                for (int k = 0; k < n; ++k)
                    sum += ev.g_inv(m, k) * (ev.dg(a, k, b) + ev.dg(b, k, a) - ev.dg(k, a, b));
                ev.gamma(m, a, b) = 0.5 * sum;
                ev.gamma(m, b, a) = 0.5 * sum;
            }

    ev.gamma_trace = CVec::Zero(n);
    for (int m = 0; m < n; ++m) {
        cx sum(0, 0);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) sum += ev.g_inv(a, b) * ev.gamma(m, a, b);
        ev.gamma_trace[m] = sum;
    }

    // d_s Gamma^m_{a b}
    ev.dgamma = Tensor4(n);
    for (int s = 0; s < n; ++s)
        for (int m = 0; m < n; ++m)
            for (int a = 0; a < n; ++a)
                for (int b = a; b < n; ++b) {
                    cx sum(0, 0);
                    for (int k = 0; k < n; ++k) {
                        sum += ev.dg_inv(s, m, k) * (ev.dg(a, k, b) + ev.dg(b, k, a) - ev.dg(k, a, b));
                        sum += ev.g_inv(m, k) *
                               (ev.d2g(s, a, k, b) + ev.d2g(s, b, k, a) - ev.d2g(s, k, a, b));
                    }
                    ev.dgamma(s, m, a, b) = 0.5 * sum;
                    ev.dgamma(s, m, b, a) = 0.5 * sum;
                }

    // R_{ab} = d_m Gamma^m_{ab} - d_b Gamma^m_{ma} + Gamma^m_{ml} Gamma^l_{ab}
    //          - Gamma^m_{bl} Gamma^l_{ma}
    ev.ricci = CMat::Zero(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            cx r(0, 0);
            for (int m = 0; m < n; ++m) {
                r += ev.dgamma(m, m, a, b) - ev.dgamma(b, m, m, a);
                for (int l = 0; l < n; ++l)
                    r += ev.gamma(m, m, l) * ev.gamma(l, a, b) - ev.gamma(m, b, l) * ev.gamma(l, m, a);
            }
            ev.ricci(a, b) = r;
        }

    ev.ricci_scalar = cx(0, 0);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) ev.ricci_scalar += ev.g_inv(a, b) * ev.ricci(a, b);

    return ev;
}

MetricEval eval_metric(const ChartedMetric& metric, const CVec& point) {
    return eval_metric(metric, point,
                       metric.has_analytic_derivatives() ? DerivMode::Analytic : DerivMode::FiniteDifference);
}

MetricCore eval_metric_core(const ChartedMetric& metric, const CVec& point) {
    if (metric.in_domain && !metric.in_domain(point)) throw DomainError("point outside chart domain of " + metric.name);
    MetricCore core;
    core.g = metric.g(point);
    Eigen::FullPivLU<CMat> lu(core.g);
    double scale = core.g.cwiseAbs().maxCoeff();
    const int n = metric.dim;
    if (scale <= 0.0 || std::abs(lu.determinant()) < kDetTol * std::pow(scale, n))
        throw SingularMetric("|det g| below tolerance at chart point of " + metric.name);
    core.g_inv = lu.inverse();
    return core;
}

CVec eval_grad_ricci(const ChartedMetric& metric, const CVec& point, DerivMode mode) {
    const int n = metric.dim;
    auto ricci_at = [&](const CVec& z) { return eval_metric(metric, z, mode).ricci_scalar; };
    CVec out(n);
    for (int k = 0; k < n; ++k) out[k] = fd::d1(ricci_at, point, k, kFdScale);
    return out;
}

CMat euclideanize(const CMat& g_inv, const CVec& u) {
    const int n = static_cast<int>(g_inv.rows());
    if (u.size() != n) throw DomainError("observer dimension mismatch");
    bool real_input = is_real_point(u);
    for (int a = 0; a < n && real_input; ++a)
        for (int b = 0; b < n; ++b)
            if (std::abs(g_inv(a, b).imag()) > kRealSliceTol) {
                real_input = false;
                break;
            }
    if (real_input) {
        // g u u = -1 checked through the inverse metric's own inverse.
        CMat g = g_inv.inverse();
        cx norm(0, 0);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) norm += g(a, b) * u[a] * u[b];
        if (std::abs(norm + 1.0) > 1e-8)
            throw NormalizationError("observer not unit timelike: g u u = " + std::to_string(norm.real()));
    }
    CMat out = g_inv;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) out(a, b) += 2.0 * u[a] * u[b];
    return out;
}

CMat field_strength(const GaugePotential& A, const CVec& point) {
    const int n = static_cast<int>(point.size());
    CMat dA(n, n);  // dA(m, v) = d_m A_v
    if (A.dA_flat) {
        CVec flat = A.dA_flat(point);
        for (int m = 0; m < n; ++m)
            for (int v = 0; v < n; ++v) dA(m, v) = flat[m * n + v];
    } else {
        for (int m = 0; m < n; ++m) {
            CVec col = fd::d1(A.A, point, m, kFdScale);
            for (int v = 0; v < n; ++v) dA(m, v) = col[v];
        }
    }
    return dA - dA.transpose();
}

CMat complex_cholesky(const CMat& a) {
    const int n = static_cast<int>(a.rows());
    const double scale = a.cwiseAbs().maxCoeff();
    CMat sigma = CMat::Zero(n, n);
    for (int j = 0; j < n; ++j) {
        cx d = a(j, j);
        for (int k = 0; k < j; ++k) d -= sigma(j, k) * sigma(j, k);
        if (std::abs(d) < 1e-10 * scale)
            throw PivotFailure("pivot " + std::to_string(j) + " below tolerance");
        sigma(j, j) = std::sqrt(d);  // principal branch
        for (int i = j + 1; i < n; ++i) {
            cx s = a(i, j);
            for (int k = 0; k < j; ++k) s -= sigma(i, k) * sigma(j, k);
            sigma(i, j) = s / sigma(j, j);
        }
    }
    return sigma;
}

}  // namespace cqv::geometry
