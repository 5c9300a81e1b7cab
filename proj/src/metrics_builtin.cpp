#include <cmath>

#include "cqv/geometry.hpp"

namespace cqv::geometry {

namespace {

int param_int(const std::map<std::string, double>& p, const std::string& key, int fallback) {
    auto it = p.find(key);
    return it == p.end() ? fallback : static_cast<int>(it->second);
}

double param(const std::map<std::string, double>& p, const std::string& key, double fallback) {
    auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}

BuiltinChart make_constant_diag(const std::string& name, int n, Signature sig, double first_entry) {
    ChartedMetric m;
    m.dim = n;
    m.signature = sig;
    m.name = name;
    CMat g0 = CMat::Identity(n, n);
    g0(0, 0) = first_entry;
    m.g = [g0](const CVec&) { return g0; };
    m.dg = [n](const CVec&) { return Tensor3(n); };
    m.d2g = [n](const CVec&) { return Tensor4(n); };

    BuiltinChart chart{std::move(m), std::nullopt};
    if (sig == Signature::Lorentzian) {
        CVec u0 = CVec::Zero(n);
        u0[0] = cx(1, 0);
        chart.observer = ObserverField{[u0](const CVec&) { return u0; }};
    }
    return chart;
}

BuiltinChart make_sphere2(double radius) {
    ChartedMetric m;
    m.dim = 2;
    m.signature = Signature::Riemannian;
    m.name = "sphere2";
    const double r2 = radius * radius;
    m.g = [r2](const CVec& z) {
        CMat g = CMat::Zero(2, 2);
        g(0, 0) = r2;
        g(1, 1) = r2 * std::sin(z[0]) * std::sin(z[0]);
        return g;
    };
    m.dg = [r2](const CVec& z) {
        Tensor3 t(2);
        t(0, 1, 1) = r2 * std::sin(2.0 * z[0]);
        return t;
    };
    m.d2g = [r2](const CVec& z) {
        Tensor4 t(2);
        t(0, 0, 1, 1) = 2.0 * r2 * std::cos(2.0 * z[0]);
        return t;
    };
    return BuiltinChart{std::move(m), std::nullopt};
}

BuiltinChart make_schwarzschild(double mass) {
    ChartedMetric m;
    m.dim = 4;
    m.signature = Signature::Lorentzian;
    m.name = "schwarzschild";
    auto f = [mass](const cx& r) { return cx(1, 0) - 2.0 * mass / r; };
    m.in_domain = [mass, f](const CVec& z) {
        return std::abs(z[1]) > 1e-12 && std::abs(f(z[1])) > 1e-12;
    };
    m.g = [f](const CVec& z) {
        const cx r = z[1], th = z[2];
        CMat g = CMat::Zero(4, 4);
        g(0, 0) = -f(r);
        g(1, 1) = 1.0 / f(r);
        g(2, 2) = r * r;
        g(3, 3) = r * r * std::sin(th) * std::sin(th);
        return g;
    };
    m.dg = [mass, f](const CVec& z) {
        const cx r = z[1], th = z[2];
        const cx fp = 2.0 * mass / (r * r);  // f'
        Tensor3 t(4);
        t(1, 0, 0) = -fp;
        t(1, 1, 1) = -fp / (f(r) * f(r));
        t(1, 2, 2) = 2.0 * r;
        t(1, 3, 3) = 2.0 * r * std::sin(th) * std::sin(th);
        t(2, 3, 3) = r * r * std::sin(2.0 * th);
        return t;
    };
    m.d2g = [mass, f](const CVec& z) {
        const cx r = z[1], th = z[2];
        const cx fr = f(r);
        const cx fp = 2.0 * mass / (r * r);
        const cx fpp = -4.0 * mass / (r * r * r);
        Tensor4 t(4);
        t(1, 1, 0, 0) = -fpp;
        t(1, 1, 1, 1) = (2.0 * fp * fp - fr * fpp) / (fr * fr * fr);
        t(1, 1, 2, 2) = 2.0;
        t(1, 1, 3, 3) = 2.0 * std::sin(th) * std::sin(th);
        t(1, 2, 3, 3) = 2.0 * r * std::sin(2.0 * th);
        t(2, 1, 3, 3) = 2.0 * r * std::sin(2.0 * th);
        t(2, 2, 3, 3) = 2.0 * r * r * std::cos(2.0 * th);
        return t;
    };

    BuiltinChart chart{std::move(m), std::nullopt};
    chart.observer = ObserverField{[f](const CVec& z) {
        CVec u = CVec::Zero(4);
        u[0] = 1.0 / std::sqrt(f(z[1]));  // static observer
        return u;
    }};
    return chart;
}

// delta_{ab} + eps sin(x^a + x^b); entire components, nonzero curvature.
BuiltinChart make_perturbed_flat(int n, double eps) {
    ChartedMetric m;
    m.dim = n;
    m.signature = Signature::Riemannian;
    m.name = "perturbed-flat";
    m.g = [n, eps](const CVec& z) {
        CMat g = CMat::Identity(n, n);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) g(a, b) += eps * std::sin(z[a] + z[b]);
        return g;
    };
    m.dg = [n, eps](const CVec& z) {
        Tensor3 t(n);
        for (int s = 0; s < n; ++s)
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) {
                    double kron = (s == a ? 1.0 : 0.0) + (s == b ? 1.0 : 0.0);
                    t(s, a, b) = eps * kron * std::cos(z[a] + z[b]);
                }
        return t;
    };
    m.d2g = [n, eps](const CVec& z) {
        Tensor4 t(n);
        for (int r = 0; r < n; ++r)
            for (int s = 0; s < n; ++s)
                for (int a = 0; a < n; ++a)
                    for (int b = 0; b < n; ++b) {
                        double kr = (r == a ? 1.0 : 0.0) + (r == b ? 1.0 : 0.0);
                        double ks = (s == a ? 1.0 : 0.0) + (s == b ? 1.0 : 0.0);
                        t(r, s, a, b) = -eps * kr * ks * std::sin(z[a] + z[b]);
                    }
        return t;
    };
    return BuiltinChart{std::move(m), std::nullopt};
}

}  // namespace

BuiltinChart make_builtin_chart(const std::string& name, const std::map<std::string, double>& params) {
    if (name == "minkowski")
        return make_constant_diag(name, param_int(params, "n", 4), Signature::Lorentzian, -1.0);
    if (name == "euclidean")
        return make_constant_diag(name, param_int(params, "n", 2), Signature::Riemannian, 1.0);
    if (name == "sphere2") return make_sphere2(param(params, "radius", 1.0));
    if (name == "schwarzschild") return make_schwarzschild(param(params, "mass", 1.0));
    if (name == "perturbed-flat")
        return make_perturbed_flat(param_int(params, "n", 2), param(params, "epsilon", 0.1));
    throw DomainError("unknown chart name: " + name);
}

std::vector<std::string> builtin_chart_names() {
    return {"minkowski", "euclidean", "sphere2", "schwarzschild", "perturbed-flat"};
}

}  // namespace cqv::geometry
