#include <doctest.h>

#include <cmath>
#include <vector>

#include "cqv/expansion.hpp"
#include "cqv/rng.hpp"

using namespace cqv;
using namespace cqv::expansion;

namespace {

CVec real_point(std::initializer_list<double> coords) {
    CVec z(static_cast<Eigen::Index>(coords.size()));
    int i = 0;
    for (double c : coords) z[i++] = cx(c, 0);
    return z;
}

process::ProcessParams make_params(const cx& alpha, double lambda, int dim) {
    process::ProcessParams p;
    p.rho = std::abs(alpha);
    p.phi = std::arg(alpha);
    p.lambda = lambda;
    p.m = 1.0;
    p.dim = dim;
    return p;
}

// Drift with w_hat = 0: the Ito drift is the pure Christoffel trace.
hj::VelocityFieldSet zero_hat(const geometry::ChartedMetric& metric,
                              const process::ProcessParams& params) {
    const int n = metric.dim;
    const cx al = params.alpha_lambda();
    hj::VelocityFieldSet vfs;
    vfs.w_hat = [n](const CVec&) { return CVec(CVec::Zero(n)); };
    vfs.jac_w_hat = [n](const CVec&) { return CMat(CMat::Zero(n, n)); };
    vfs.w = [&metric, al, n](const CVec& z) {
        auto ev = geometry::eval_metric(metric, z);
        CVec w(n);
        for (int m = 0; m < n; ++m) w[m] = -0.5 * al * ev.gamma_trace[m];
        return w;
    };
    vfs.w2 = [&metric, al](const CVec& z) {
        return CMat(al * geometry::eval_metric_core(metric, z).g_inv);
    };
    return vfs;
}

// Closed-form drift field with analytic Jacobian, seeded per instance.
hj::VelocityFieldSet sine_field(const geometry::ChartedMetric& metric,
                                const process::ProcessParams& params, uint64_t seed) {
    const int n = metric.dim;
    Rng rng(seed);
    RVec amp(n), freq(n), phase(n);
    for (int k = 0; k < n; ++k) {
        amp[k] = 0.2 + 0.6 * rng.next_uniform();
        freq[k] = 0.4 + 0.8 * rng.next_uniform();
        phase[k] = 2.0 * kPi * rng.next_uniform();
    }
    const cx al = params.alpha_lambda();
    hj::VelocityFieldSet vfs;
    vfs.w_hat = [amp, freq, phase, n](const CVec& z) {
        cx arg(0, 0);
        for (int k = 0; k < n; ++k) arg += freq[k] * z[k];
        CVec out(n);
        for (int m = 0; m < n; ++m) out[m] = amp[m] * std::sin(arg + phase[m]);
        return out;
    };
    vfs.jac_w_hat = [amp, freq, phase, n](const CVec& z) {
        cx arg(0, 0);
        for (int k = 0; k < n; ++k) arg += freq[k] * z[k];
        CMat jac(n, n);
        for (int r = 0; r < n; ++r)
            for (int m = 0; m < n; ++m) jac(r, m) = amp[m] * freq[r] * std::cos(arg + phase[m]);
        return jac;
    };
    vfs.w = [w_hat = vfs.w_hat, &metric, al, n](const CVec& z) {
        auto ev = geometry::eval_metric(metric, z);
        CVec w = w_hat(z);
        for (int m = 0; m < n; ++m) w[m] -= 0.5 * al * ev.gamma_trace[m];
        return w;
    };
    vfs.w2 = [&metric, al](const CVec& z) {
        return CMat(al * geometry::eval_metric_core(metric, z).g_inv);
    };
    return vfs;
}

}  // namespace

TEST_CASE("conditional expectation of the potential is evaluation") {
    CHECK(cond_exp_potential([](const CVec& z) { return z[0] * z[0]; }, real_point({2.0})) ==
          cx(4, 0));
    CHECK(cond_exp_potential([](const CVec&) { return cx(3.5, -1); }, real_point({0.1})) ==
          cx(3.5, -1));
    CVec zc(1);
    zc[0] = cx(1, 1);
    CHECK(std::abs(cond_exp_potential([](const CVec& z) { return z[0] * z[0]; }, zc) - cx(0, 2)) <
          1e-15);
}

TEST_CASE("trace identity: n alpha lambda, with monte-carlo cross-check") {
    auto chart = geometry::make_builtin_chart("minkowski", {{"n", 4}});
    auto ev = geometry::eval_metric(chart.metric, real_point({0, 0, 0, 0}));
    CHECK(std::abs(cond_exp_trace(ev, make_params(I(), 0.5, 4)) - cx(0, 2)) < 1e-15);
    CHECK(std::abs(cond_exp_trace(ev, make_params(cx(0, 0), 1.0, 4))) < 1e-15);

    // flat 1D, alpha = lambda = 1: stratonovich average of g dZ dZ / dt -> 1
    auto params = make_params(cx(1, 0), 1.0, 1);
    process::EnsembleConfig cfg;
    cfg.n_paths = 10000;
    cfg.dt = 1e-3;
    cfg.horizon = 0.01;
    cfg.master_seed = 21;
    cfg.z0 = CVec::Zero(1);
    auto ens = process::simulate_ensemble(nullptr, params, cfg);
    double sum = 0.0;
    long count = 0;
    for (const auto& path : ens.paths)
        for (size_t i = 0; i + 1 < path.size(); ++i) {
            const cx dz = path.positions[i + 1][0] - path.positions[i][0];
            sum += (dz * dz).real();
            ++count;
        }
    const double mean = sum / (count * cfg.dt);
    const double se = std::sqrt(2.0 / static_cast<double>(count));
    CHECK(std::abs(mean - 1.0) < 3.0 * se);
}

TEST_CASE("linear identity: divergence term and frozen flat example") {
    auto chart = geometry::make_builtin_chart("euclidean", {{"n", 2}});
    auto params = make_params(cx(1, 0), 1.0, 2);

    geometry::GaugePotential zero;
    zero.A = [](const CVec&) { return CVec(CVec::Zero(2)); };
    auto ev = geometry::eval_metric(chart.metric, real_point({1.5, 0.2}));
    CHECK(std::abs(cond_exp_linear(zero, nullptr, ev, params, ev.point)) < 1e-15);

    // constant A with constant drift: value = A . w (the divergence vanishes)
    geometry::GaugePotential const_a;
    const_a.A = [](const CVec&) {
        CVec a(2);
        a << cx(0.3, 0), cx(-0.7, 0);
        return a;
    };
    hj::VelocityFieldSet vfs;
    vfs.w_hat = [](const CVec&) {
        CVec w(2);
        w << cx(1.1, 0), cx(0.4, 0);
        return w;
    };
    const cx got = cond_exp_linear(const_a, &vfs, ev, params, ev.point);
    CHECK(std::abs(got - (cx(0.3, 0) * 1.1 + cx(-0.7, 0) * 0.4)) < 1e-12);

    // A = (x^2, 0), w = 0: value = (alpha lambda / 2) d_x x^2 = x -> 1.5
    geometry::GaugePotential quad;
    quad.A = [](const CVec& z) {
        CVec a(2);
        a << z[0] * z[0], cx(0, 0);
        return a;
    };
    quad.dA_flat = [](const CVec& z) {
        CVec flat = CVec::Zero(4);
        flat[0] = 2.0 * z[0];  // d_0 A_0
        return flat;
    };
    const cx value = cond_exp_linear(quad, nullptr, ev, params, ev.point);
    CHECK(std::abs(value - cx(1.5, 0)) < 1e-12);
}

TEST_CASE("linear identity: small-dt monte-carlo extrapolation hits x = 1.5") {
    auto params = make_params(cx(1, 0), 1.0, 2);
    auto a_field = [](const CVec& z) {
        CVec a(2);
        a << z[0] * z[0], cx(0, 0);
        return a;
    };

    auto mc_value = [&](double dt, uint64_t seed, double* se_out) {
        process::EnsembleConfig cfg;
        cfg.n_paths = 40000;
        cfg.dt = dt;
        cfg.horizon = dt;  // single step from the probe
        cfg.master_seed = seed;
        cfg.z0 = real_point({1.5, 0.2});
        auto ens = process::simulate_ensemble(nullptr, params, cfg);
        double sum = 0.0, sum_sq = 0.0;
        for (const auto& path : ens.paths) {
            const CVec& a0 = a_field(path.positions.front());
            const CVec& a1 = a_field(path.positions.back());
            const CVec dz = path.positions.back() - path.positions.front();
            cx v(0, 0);
            for (int k = 0; k < 2; ++k) v += 0.5 * (a0[k] + a1[k]) * dz[k];
            sum += v.real() / dt;
            sum_sq += (v.real() / dt) * (v.real() / dt);
        }
        const double mean = sum / cfg.n_paths;
        *se_out = std::sqrt((sum_sq / cfg.n_paths - mean * mean) / (cfg.n_paths - 1));
        return mean;
    };

    double se_coarse = 0, se_fine = 0;
    const double coarse = mc_value(1e-2, 22, &se_coarse);
    const double fine = mc_value(1e-3, 23, &se_fine);
    // linear-in-dt Richardson extrapolation
    const double extrapolated = (10.0 * fine - coarse) / 9.0;
    const double se = std::sqrt(100.0 * se_fine * se_fine + se_coarse * se_coarse) / 9.0;
    CHECK(std::abs(extrapolated - 1.5) < 3.0 * se);
}

TEST_CASE("quadratic identity: flat chart with constant drift is exact") {
    auto chart = geometry::make_builtin_chart("euclidean", {{"n", 3}});
    for (const cx alpha : {cx(1, 0), cx(0, 1), std::polar(1.0, kPi / 4.0)}) {
        auto params = make_params(alpha, 0.7, 3);
        hj::VelocityFieldSet vfs;
        CVec w0(3);
        w0 << cx(0.4, 0.1), cx(-1.0, 0), cx(0.2, -0.3);
        vfs.w_hat = [w0](const CVec&) { return w0; };
        vfs.w = vfs.w_hat;
        vfs.jac_w_hat = [](const CVec&) { return CMat(CMat::Zero(3, 3)); };
        vfs.w2 = [&params](const CVec&) {
            return CMat(params.alpha_lambda() * CMat::Identity(3, 3));
        };
        auto ev = geometry::eval_metric(chart.metric, real_point({0.3, -0.6, 1.1}));
        auto covariant = cond_exp_quadratic_covariant(vfs, ev, params);
        auto raw = cond_exp_quadratic_raw(vfs, ev, params);

        const cx want_first = 3.0 * params.alpha_lambda();
        cx g_ww(0, 0);
        for (int k = 0; k < 3; ++k) g_ww += w0[k] * w0[k];
        CHECK(std::abs(covariant.first - want_first) < 1e-14);
        CHECK(std::abs(covariant.second - g_ww) < 1e-14);
        CHECK(std::abs(raw.pair.first - covariant.first) < 1e-14);
        CHECK(std::abs(raw.pair.second - covariant.second) < 1e-14);
    }
}

TEST_CASE("quadratic identity: unit sphere with zero covariant drift gives (2, -1/3)") {
    auto chart = geometry::make_builtin_chart("sphere2");
    auto params = make_params(cx(1, 0), 1.0, 2);
    auto vfs = zero_hat(chart.metric, params);
    for (double theta : {0.7, kPi / 3.0, 2.1}) {
        auto ev = geometry::eval_metric(chart.metric, real_point({theta, 0.9}));
        auto covariant = cond_exp_quadratic_covariant(vfs, ev, params);
        auto raw = cond_exp_quadratic_raw(vfs, ev, params);
        CHECK(std::abs(covariant.first - cx(2, 0)) < 1e-12);
        CHECK(std::abs(covariant.second - cx(-1.0 / 3.0, 0)) < 1e-10);
        CHECK(std::abs(raw.pair.first - covariant.first) < 1e-10);
        CHECK(std::abs(raw.pair.second - covariant.second) < 1e-8);
    }
}

TEST_CASE("core identity: raw equals covariant across charts, drifts and alphas") {
    const std::vector<cx> alphas = {cx(1, 0), cx(0, 1), std::polar(1.0, kPi / 4.0)};

    auto check_at = [&](const geometry::ChartedMetric& metric, const std::vector<CVec>& probes,
                        uint64_t seed) {
        for (const cx& alpha : alphas) {
            auto params = make_params(alpha, 1.0, metric.dim);
            auto vfs = sine_field(metric, params, seed);
            for (const CVec& z : probes) {
                auto ev = geometry::eval_metric(metric, z);
                auto covariant = cond_exp_quadratic_covariant(vfs, ev, params);
                auto raw = cond_exp_quadratic_raw(vfs, ev, params);
                CHECK(std::abs(raw.pair.first - covariant.first) < 1e-10);
                CHECK(std::abs(raw.pair.second - covariant.second) < 1e-8);
            }
        }
    };

    auto sphere = geometry::make_builtin_chart("sphere2");
    check_at(sphere.metric,
             {real_point({0.8, 0.3}), real_point({1.4, 2.0}), real_point({2.2, 4.4})}, 101);

    auto schwarzschild = geometry::make_builtin_chart("schwarzschild", {{"mass", 1.0}});
    check_at(schwarzschild.metric,
             {real_point({0.0, 4.5, 1.2, 0.3}), real_point({1.0, 6.0, 1.9, 2.0}),
              real_point({-0.5, 8.5, 0.8, 5.0})},
             102);

    auto perturbed = geometry::make_builtin_chart("perturbed-flat", {{"n", 2}, {"epsilon", 0.1}});
    check_at(perturbed.metric,
             {real_point({0.25, -0.7}), real_point({-0.9, 0.4}), real_point({1.1, 0.8})}, 103);
}

TEST_CASE("moment tensors carry the symmetries of their definitions") {
    auto chart = geometry::make_builtin_chart("perturbed-flat", {{"n", 2}, {"epsilon", 0.1}});
    auto params = make_params(std::polar(1.0, kPi / 4.0), 1.0, 2);
    auto vfs = sine_field(chart.metric, params, 104);
    auto ev = geometry::eval_metric(chart.metric, real_point({0.5, -0.2}));
    auto raw = cond_exp_quadratic_raw(vfs, ev, params);
    const auto& m = raw.moments;

    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            CHECK(std::abs(m.e2_dtau2(a, b) - m.e2_dtau2(b, a)) < 1e-14);
            for (int c = 0; c < 2; ++c) {
                CHECK(std::abs(m.e3(a, b, c) - m.e3(b, a, c)) < 1e-14);
                CHECK(std::abs(m.e3(a, b, c) - m.e3(a, c, b)) < 1e-14);
                for (int d = 0; d < 2; ++d) {
                    CHECK(std::abs(m.e4(a, b, c, d) - m.e4(b, a, c, d)) < 1e-14);
                    CHECK(std::abs(m.e4(a, b, c, d) - m.e4(a, c, b, d)) < 1e-14);
                    CHECK(std::abs(m.e4(a, b, c, d) - m.e4(a, b, d, c)) < 1e-14);
                }
            }
        }
}

TEST_CASE("alpha = 0 collapses the pair to the classical kinetic term") {
    auto chart = geometry::make_builtin_chart("euclidean", {{"n", 2}});
    auto params = make_params(cx(0, 0), 1.0, 2);
    hj::VelocityFieldSet vfs;
    CVec w0(2);
    w0 << cx(0.5, 0), cx(-0.2, 0);
    vfs.w_hat = [w0](const CVec&) { return w0; };
    vfs.w = vfs.w_hat;
    vfs.jac_w_hat = [](const CVec&) { return CMat(CMat::Zero(2, 2)); };
    vfs.w2 = [](const CVec&) { return CMat(CMat::Zero(2, 2)); };
    auto ev = geometry::eval_metric(chart.metric, real_point({0.0, 0.0}));
    auto covariant = cond_exp_quadratic_covariant(vfs, ev, params);
    CHECK(std::abs(covariant.first) < 1e-15);
    CHECK(std::abs(covariant.second - (w0[0] * w0[0] + w0[1] * w0[1])) < 1e-15);
}
