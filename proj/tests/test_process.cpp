#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "cqv/process.hpp"

using namespace cqv;
using namespace cqv::process;

namespace {

EnsembleConfig flat_config(int n_paths, double dt, double horizon, uint64_t seed, int dim) {
    EnsembleConfig cfg;
    cfg.n_paths = n_paths;
    cfg.dt = dt;
    cfg.horizon = horizon;
    cfg.master_seed = seed;
    cfg.z0 = CVec::Zero(dim);
    return cfg;
}

ProcessParams flat_params(double rho, double phi, double mass, int dim) {
    ProcessParams p;
    p.rho = rho;
    p.phi = phi;
    p.m = mass;
    p.lambda = 1.0 / mass;
    p.dim = dim;
    return p;
}

}  // namespace

TEST_CASE("determinism: identical seeds reproduce identical ensembles") {
    auto params = flat_params(1.0, kPi / 2.0, 1.0, 2);
    auto cfg = flat_config(16, 1e-3, 0.05, 77, 2);
    auto a = simulate_ensemble(nullptr, params, cfg);
    auto b = simulate_ensemble(nullptr, params, cfg);
    REQUIRE(a.paths.size() == b.paths.size());
    for (size_t p = 0; p < a.paths.size(); ++p)
        for (size_t i = 0; i < a.paths[p].size(); ++i)
            CHECK((a.paths[p].positions[i] - b.paths[p].positions[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("determinism: thread count does not change the ensemble") {
    auto params = flat_params(1.0, kPi / 4.0, 1.0, 1);
    auto cfg = flat_config(64, 1e-3, 0.02, 123, 1);
    setenv("CQV_THREADS", "1", 1);
    auto serial = simulate_ensemble(nullptr, params, cfg);
    setenv("CQV_THREADS", "7", 1);
    auto parallel = simulate_ensemble(nullptr, params, cfg);
    unsetenv("CQV_THREADS");
    for (size_t p = 0; p < serial.paths.size(); ++p)
        for (size_t i = 0; i < serial.paths[p].size(); ++i)
            CHECK((serial.paths[p].positions[i] - parallel.paths[p].positions[i])
                      .cwiseAbs()
                      .maxCoeff() == 0.0);
}

TEST_CASE("driftless real process: per-coordinate increment variance dt/m") {
    const double mass = 2.0;
    auto params = flat_params(1.0, 0.0, mass, 1);
    auto cfg = flat_config(2000, 1e-3, 0.02, 31, 1);
    auto ens = simulate_ensemble(nullptr, params, cfg);
    double sum_sq = 0.0;
    long count = 0;
    for (const auto& path : ens.paths)
        for (size_t i = 0; i + 1 < path.size(); ++i) {
            const cx dz = path.positions[i + 1][0] - path.positions[i][0];
            CHECK(std::abs(dz.imag()) < 1e-15);  // real alpha keeps paths real
            sum_sq += dz.real() * dz.real();
            ++count;
        }
    const double rate = sum_sq / (count * cfg.dt);
    CHECK(rate == doctest::Approx(1.0 / mass).epsilon(0.02));
}

TEST_CASE("alpha = i: X/Y split covariance rates are delta/2m each") {
    auto params = flat_params(1.0, kPi / 2.0, 1.0, 2);
    auto cfg = flat_config(4000, 1e-3, 0.05, 32, 2);
    auto ens = simulate_ensemble(nullptr, params, cfg);
    auto cov = split_real_imag_covariances(ens);
    for (int k = 0; k < 2; ++k) {
        CHECK(cov.xx(k, k) == doctest::Approx(0.5).epsilon(0.02));
        CHECK(cov.yy(k, k) == doctest::Approx(0.5).epsilon(0.02));
        CHECK(cov.xy(k, k) == doctest::Approx(0.5).epsilon(0.02));
    }
    CHECK(std::abs(cov.xx(0, 1)) < 0.02);  // off-diagonal uncorrelated

    auto pred = predicted_flat_rates(params);
    CHECK(pred.xx == doctest::Approx(0.5));
    CHECK(pred.yy == doctest::Approx(0.5));
    CHECK(pred.xy == doctest::Approx(0.5));
}

TEST_CASE("beta = 0 consequence: sample [Z, Zbar] rate is |alpha| lambda delta") {
    auto params = flat_params(1.0, 2.0 * kPi / 3.0, 1.0, 2);
    auto cfg = flat_config(4000, 1e-3, 0.05, 57, 2);
    auto ens = simulate_ensemble(nullptr, params, cfg);
    CMat rate = CMat::Zero(2, 2);
    long count = 0;
    for (const auto& path : ens.paths)
        for (size_t i = 0; i + 1 < path.size(); ++i) {
            const CVec dz = path.positions[i + 1] - path.positions[i];
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) rate(a, b) += dz[a] * std::conj(dz[b]);
            ++count;
        }
    rate /= static_cast<double>(count) * cfg.dt;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            const cx want = a == b ? cx(1.0, 0) : cx(0, 0);  // |alpha| lambda = 1
            CHECK(std::abs(rate(a, b) - want) < 0.03);
        }
}

TEST_CASE("polar-decomposition rates at phi in {0, pi}") {
    auto r0 = predicted_flat_rates(flat_params(1.0, 0.0, 1.0, 1));
    CHECK(r0.xx == doctest::Approx(1.0));
    CHECK(r0.yy == doctest::Approx(0.0));
    CHECK(r0.xy == doctest::Approx(0.0));

    auto rp = predicted_flat_rates(flat_params(1.0, kPi, 1.0, 1));
    CHECK(rp.xx == doctest::Approx(0.0));
    CHECK(rp.yy == doctest::Approx(1.0));
    CHECK(std::abs(rp.xy) < 1e-15);
}

TEST_CASE("deterministic limit alpha -> 0 reduces to euler integration") {
    auto params = flat_params(0.0, 0.0, 1.0, 1);
    CVec w0(1);
    w0[0] = cx(0.7, -0.2);
    auto cfg = flat_config(1, 1e-3, 0.1, 5, 1);
    auto ens = simulate_ensemble([w0](const CVec&) { return w0; }, params, cfg);
    const cx z_t = ens.paths[0].positions.back()[0];
    CHECK(std::abs(z_t - w0[0] * 0.1) < 1e-12);
}

TEST_CASE("terminal distribution of the real driftless process looks gaussian") {
    const int n_paths = 4000;
    auto params = flat_params(1.0, 0.0, 1.0, 1);
    auto cfg = flat_config(n_paths, 1e-3, 0.1, 33, 1);
    auto ens = simulate_ensemble(nullptr, params, cfg);
    double m1 = 0, m2 = 0, m3 = 0;
    for (const auto& path : ens.paths) m1 += path.positions.back()[0].real();
    m1 /= n_paths;
    for (const auto& path : ens.paths) {
        const double d = path.positions.back()[0].real() - m1;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n_paths;
    m3 /= n_paths;
    const double skew = m3 / std::pow(m2, 1.5);
    CHECK(std::abs(skew) < 3.0 * std::sqrt(6.0 / n_paths));
    CHECK(m2 == doctest::Approx(0.1).epsilon(0.1));
}

TEST_CASE("constant drift: ensemble mean terminal position within 3 SE") {
    const int n_paths = 4000;
    auto params = flat_params(0.1, 0.0, 1.0, 1);
    CVec w0(1);
    w0[0] = cx(1.3, 0);
    auto cfg = flat_config(n_paths, 1e-3, 0.1, 34, 1);
    auto ens = simulate_ensemble([w0](const CVec&) { return w0; }, params, cfg);
    double mean = 0, sq = 0;
    for (const auto& path : ens.paths) {
        mean += path.positions.back()[0].real();
        sq += path.positions.back()[0].real() * path.positions.back()[0].real();
    }
    mean /= n_paths;
    const double se = std::sqrt((sq / n_paths - mean * mean) / (n_paths - 1));
    CHECK(std::abs(mean - 0.13) < 3.0 * se);
}

TEST_CASE("structure relation: flat charts reproduce alpha lambda identity") {
    auto params = flat_params(1.0, 0.0, 1.0, 2);
    auto cfg = flat_config(10000, 1e-3, 0.01, 35, 2);
    auto ens = simulate_ensemble(nullptr, params, cfg);
    auto rates = estimate_structure_relation(ens, 1);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            const cx want = a == b ? cx(1, 0) : cx(0, 0);
            CHECK(std::abs(rates[0](a, b) - want) < 0.02);
        }

    // alpha = 0 gives the zero matrix
    auto zero_params = flat_params(0.0, 0.0, 1.0, 2);
    auto zero_ens = simulate_ensemble(nullptr, zero_params, flat_config(32, 1e-3, 0.01, 36, 2));
    auto zero_rates = estimate_structure_relation(zero_ens, 1);
    CHECK(zero_rates[0].cwiseAbs().maxCoeff() < 1e-20);
}

TEST_CASE("structure relation on minkowski with static observer: i times identity") {
    auto chart = geometry::make_builtin_chart("minkowski", {{"n", 2}});
    auto sim_chart = SimChart::from(&chart.metric, &*chart.observer);
    ProcessParams params = ProcessParams::massive_relativistic(1.0, 1.0, kPi / 2.0, 2);
    auto cfg = flat_config(10000, 1e-3, 0.01, 37, 2);
    auto ens = simulate_ensemble(nullptr, params, cfg, sim_chart);
    auto rates = estimate_structure_relation(ens, 1);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            const cx want = a == b ? cx(0, 1) : cx(0, 0);  // g_E = identity
            CHECK(std::abs(rates[0](a, b) - want) < 0.03);
        }
}

TEST_CASE("characteristic functional: J = 0 exact, gaussian closed form within 3 SE") {
    auto params = flat_params(1.0, 0.0, 1.0, 1);
    auto cfg = flat_config(3000, 1e-3, 1.0, 38, 1);
    cfg.z0[0] = cx(0.4, 0);
    auto ens = simulate_ensemble(nullptr, params, cfg);

    auto zero_j = [](double) { return CVec(CVec::Zero(1)); };
    auto r0 = characteristic_functional(ens, zero_j);
    CHECK(std::abs(r0.phi - cx(1, 0)) == 0.0);
    CHECK(std::abs(r0.mgf - cx(1, 0)) == 0.0);

    const double j = 0.8;
    auto const_j = [j](double) {
        CVec v(1);
        v[0] = cx(j, 0);
        return v;
    };
    auto r = characteristic_functional(ens, const_j);
    // E[exp(i J int Z dt)] = exp(i J z0 T - J^2 T^3 / (6 m)) for the driftless
    // real process started at z0 (time-integrated Brownian variance T^3/3).
    const cx want = std::exp(I() * j * 0.4 - j * j / 6.0);
    CHECK(std::abs(r.phi - want) < 3.0 * r.phi_se + 2e-3);

    // deterministic limit: phase of the classical trajectory
    auto det_params = flat_params(0.0, 0.0, 1.0, 1);
    CVec w0(1);
    w0[0] = cx(0.5, 0);
    auto det = simulate_ensemble([w0](const CVec&) { return w0; }, det_params,
                                 flat_config(2, 1e-3, 1.0, 39, 1));
    auto rd = characteristic_functional(det, const_j);
    const cx classical = std::exp(I() * j * 0.25);  // int_0^1 0.5 t dt = 1/4
    CHECK(std::abs(rd.phi - classical) < 1e-3);
}

TEST_CASE("characteristic functional: mgf overflow reported, not asserted") {
    auto params = flat_params(1.0, 0.0, 1.0, 1);
    auto cfg = flat_config(8, 1e-2, 1.0, 40, 1);
    auto ens = simulate_ensemble(nullptr, params, cfg);
    auto huge_j = [](double) {
        CVec v(1);
        v[0] = cx(2000.0, 0);
        return v;
    };
    auto r = characteristic_functional(ens, huge_j);
    CHECK(r.mgf_overflow);
    CHECK(std::isinf(r.mgf.real()));
}

TEST_CASE("martingale residual: driftless, constant drift, wrong drift detected") {
    auto params = flat_params(1.0, 0.0, 1.0, 1);
    auto cfg = flat_config(3000, 1e-3, 0.02, 45, 1);
    auto ens = simulate_ensemble(nullptr, params, cfg);
    auto r = martingale_residual(ens, nullptr, 4);
    for (size_t b = 0; b < r.mean.size(); ++b)
        CHECK(std::abs(r.mean[b][0].real()) < 3.0 * r.se[b][0].real());

    CVec w0(1);
    w0[0] = cx(0.9, 0);
    auto drift = [w0](const CVec&) { return w0; };
    auto ens2 = simulate_ensemble(drift, params, cfg);
    auto r2 = martingale_residual(ens2, drift, 4);
    for (size_t b = 0; b < r2.mean.size(); ++b)
        CHECK(std::abs(r2.mean[b][0].real()) < 3.0 * r2.se[b][0].real());

    // negative control: passing the wrong drift shows up as w_true - w_passed
    CVec wrong(1);
    wrong[0] = cx(0.2, 0);
    auto r3 = martingale_residual(ens2, [wrong](const CVec&) { return wrong; }, 1);
    CHECK(std::abs(r3.mean[0][0].real()) > 3.0 * r3.se[0][0].real());  // detected
    CHECK(std::abs(r3.mean[0][0].real() - 0.7) < 3.0 * r3.se[0][0].real());
}

TEST_CASE("rejected paths are counted and excluded, never silently dropped") {
    auto params = flat_params(1.0, 0.0, 1.0, 1);
    auto cfg = flat_config(100, 1e-3, 0.05, 42, 1);
    // drift blows up once |z| crosses a small threshold
    auto blowup = [](const CVec& z) {
        CVec w(1);
        w[0] = std::abs(z[0]) > 0.02 ? cx(std::nan(""), 0) : cx(0, 0);
        return w;
    };
    auto ens = simulate_ensemble(blowup, params, cfg);
    CHECK(ens.n_rejected > 0);
    CHECK(ens.n_accepted() + ens.n_rejected == 100);
    CHECK(ens.degraded);
    for (size_t p = 0; p < ens.paths.size(); ++p)
        if (!ens.accepted[p])
            CHECK(ens.paths[p].size() < static_cast<size_t>(ens.config.n_steps()) + 1);
}

TEST_CASE("antithetic pairing flips the noise stream") {
    auto params = flat_params(1.0, 0.0, 1.0, 1);
    auto cfg = flat_config(4, 1e-3, 0.01, 43, 1);
    cfg.antithetic = true;
    auto ens = simulate_ensemble(nullptr, params, cfg);
    for (size_t i = 0; i < ens.paths[0].size(); ++i)
        CHECK(std::abs(ens.paths[0].positions[i][0] + ens.paths[1].positions[i][0]) < 1e-15);
}

TEST_CASE("split covariances refuse curved charts") {
    auto chart = geometry::make_builtin_chart("sphere2");
    auto sim_chart = SimChart::from(&chart.metric, nullptr);
    ProcessParams params = flat_params(1.0, 0.0, 1.0, 2);
    auto cfg = flat_config(4, 1e-3, 0.01, 44, 2);
    cfg.z0[0] = cx(kPi / 2.0, 0);
    auto ens = simulate_ensemble(nullptr, params, cfg, sim_chart);
    CHECK_FALSE(ens.flat_chart);
    CHECK_THROWS_AS(split_real_imag_covariances(ens), Unsupported);
}

TEST_CASE("params validation: beta pinned to zero, relativistic gauge enforced") {
    ProcessParams p = flat_params(1.0, 0.0, 1.0, 1);
    p.beta = 0.1;
    CHECK_THROWS_AS(p.validate(), DomainError);

    ProcessParams rel = ProcessParams::massive_relativistic(2.0, 1.0, 0.0, 4);
    CHECK(rel.lambda == doctest::Approx(0.5));
    rel.lambda = 1.0;
    CHECK_THROWS_AS(rel.validate(), DomainError);

    CHECK(ProcessParams::massless_relativistic(1.0, 0.0, 4).lambda == doctest::Approx(1.0));
}
