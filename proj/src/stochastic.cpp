#include "cqv/stochastic.hpp"

#include "cqv/errors.hpp"
#include "cqv/fd.hpp"

namespace cqv::stochastic {

void DiscretePath::validate() const {
    if (positions.size() < 2) throw DomainError("path needs at least two points");
    if (times.size() != positions.size()) throw DomainError("times/positions length mismatch");
    for (size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1])) throw DomainError("times not strictly increasing");
    for (const auto& z : positions)
        if (!finite(z)) throw DomainError("non-finite path position");
}

cx ito_integral(const PathScalarFn& f, const DiscretePath& path, int coord) {
    path.validate();
    cx total(0, 0);
    for (size_t i = 0; i + 1 < path.positions.size(); ++i)
        total += f(path.positions[i]) * (path.positions[i + 1][coord] - path.positions[i][coord]);
    return total;
}

cx strat_integral(const PathScalarFn& f, const DiscretePath& path, int coord) {
    path.validate();
    cx total(0, 0);
    cx f_left = f(path.positions[0]);
    for (size_t i = 0; i + 1 < path.positions.size(); ++i) {
        const cx f_right = f(path.positions[i + 1]);
        total += 0.5 * (f_left + f_right) * (path.positions[i + 1][coord] - path.positions[i][coord]);
        f_left = f_right;
    }
    return total;
}

QuadraticCovariation quadratic_covariation(const DiscretePath& path, int mu, int nu) {
    path.validate();
    QuadraticCovariation qv;
    qv.running.reserve(path.positions.size());
    qv.running.push_back(cx(0, 0));
    for (size_t i = 0; i + 1 < path.positions.size(); ++i) {
        const CVec& a = path.positions[i];
        const CVec& b = path.positions[i + 1];
        qv.total += (b[mu] - a[mu]) * (b[nu] - a[nu]);
        qv.running.push_back(qv.total);
    }
    return qv;
}

cx qv_integral(const PathScalarFn& f, const DiscretePath& path, int mu, int nu) {
    path.validate();
    cx total(0, 0);
    for (size_t i = 0; i + 1 < path.positions.size(); ++i) {
        const CVec& a = path.positions[i];
        const CVec& b = path.positions[i + 1];
        total += f(a) * (b[mu] - a[mu]) * (b[nu] - a[nu]);
    }
    return total;
}

cx ito_strat_conversion_residual(const PathScalarFn& f, const PathGradFn& grad_f,
                                 const DiscretePath& path, int mu) {
    const int n = path.dim();
    PathGradFn grad = grad_f;
    if (!grad) {
        grad = [&f, n](const CVec& z) {
            CVec g(n);
            for (int k = 0; k < n; ++k) g[k] = fd::d1(f, z, k, 1e-5);
            return g;
        };
    }
    cx residual = strat_integral(f, path, mu) - ito_integral(f, path, mu);
    for (int nu = 0; nu < n; ++nu) {
        auto dfloat_f = [&grad, nu](const CVec& z) { return grad(z)[nu]; };
        residual -= 0.5 * qv_integral(dfloat_f, path, mu, nu);
    }
    return residual;
}

CVec covariant_hat(const SecondOrderVector& v, const geometry::MetricEval& eval) {
    const int n = eval.dim();
    if (v.first.size() != n || v.second.rows() != n)
        throw DomainError("second-order vector dimension mismatch");
    CVec out = v.first;
    for (int m = 0; m < n; ++m) {
        cx corr(0, 0);
        for (int s = 0; s < n; ++s)
            for (int k = 0; k < n; ++k) corr += eval.gamma(m, s, k) * v.second(s, k);
        out[m] += 0.5 * corr;
    }
    return out;
}

}  // namespace cqv::stochastic
