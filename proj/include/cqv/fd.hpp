#pragma once

#include "cqv/types.hpp"

namespace cqv::fd {

// Central stencils along the real axis of one complex coordinate. All chart
// functions in this project are analytic, so a real-direction difference
// recovers the complex derivative.
inline double step(const cx& coord, double scale = 1e-4) {
    return scale * (1.0 + std::abs(coord));
}

template <class F>
auto d1(F&& f, const CVec& z, int k, double scale = 1e-4) {
    const double h = step(z[k], scale);
    CVec zp1 = z, zm1 = z, zp2 = z, zm2 = z;
    zp1[k] += h;
    zm1[k] -= h;
    zp2[k] += 2.0 * h;
    zm2[k] -= 2.0 * h;
    // 4th order: (-f(+2h) + 8 f(+h) - 8 f(-h) + f(-2h)) / 12h
    using R = decltype(f(z));
    R out = (-f(zp2) + 8.0 * f(zp1) - 8.0 * f(zm1) + f(zm2)) / (12.0 * h);
    return out;
}

// Second derivative along one coordinate, 4th order.
template <class F>
auto d2_diag(F&& f, const CVec& z, int k, double scale = 1e-4) {
    const double h = step(z[k], scale);
    CVec zp1 = z, zm1 = z, zp2 = z, zm2 = z;
    zp1[k] += h;
    zm1[k] -= h;
    zp2[k] += 2.0 * h;
    zm2[k] -= 2.0 * h;
    using R = decltype(f(z));
    R out = (-f(zp2) + 16.0 * f(zp1) - 30.0 * f(z) + 16.0 * f(zm1) - f(zm2)) / (12.0 * h * h);
    return out;
}

// Mixed second derivative d^2/dz_j dz_k by nesting d1.
template <class F>
auto d2_mixed(F&& f, const CVec& z, int j, int k, double scale = 1e-4) {
    auto dj = [&](const CVec& p) { return d1(f, p, j, scale); };
    return d1(dj, z, k, scale);
}

template <class F>
auto d2(F&& f, const CVec& z, int j, int k, double scale = 1e-4) {
    using R = decltype(f(z));
    if (j == k) {
        R out = d2_diag(f, z, k, scale);
        return out;
    }
    R out = d2_mixed(f, z, j, k, scale);
    return out;
}

}  // namespace cqv::fd
