#include <doctest.h>

#include <cmath>

#include "cqv/geometry.hpp"
#include "cqv/rng.hpp"

using namespace cqv;
using namespace cqv::geometry;

namespace {

CVec real_point(std::initializer_list<double> coords) {
    CVec z(static_cast<Eigen::Index>(coords.size()));
    int i = 0;
    for (double c : coords) z[i++] = cx(c, 0);
    return z;
}

double rel_err(const cx& got, const cx& want) {
    return std::abs(got - want) / std::max(1.0, std::abs(want));
}

}  // namespace

TEST_CASE("minkowski: constant metric has vanishing symbols and curvature") {
    auto chart = make_builtin_chart("minkowski");
    MetricEval ev = eval_metric(chart.metric, real_point({0.3, -1.2, 0.7, 2.0}));
    for (int m = 0; m < 4; ++m)
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) CHECK(std::abs(ev.gamma(m, a, b)) < 1e-14);
    CHECK(std::abs(ev.ricci_scalar) < 1e-14);
    CHECK((ev.g * ev.g_inv - CMat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("unit 2-sphere: frozen Christoffel and curvature values") {
    auto chart = make_builtin_chart("sphere2");
    const double theta = kPi / 3.0;
    MetricEval ev = eval_metric(chart.metric, real_point({theta, 0.85}));

    // Gamma^theta_{phi phi} = -sin(theta) cos(theta)
    const double expected = -std::sin(theta) * std::cos(theta);
    CHECK(std::abs(ev.gamma(0, 1, 1) - expected) < 1e-12);
    CHECK(std::abs(ev.gamma(0, 1, 1).real() - (-0.4330127018922193)) < 1e-12);
    // Gamma^phi_{theta phi} = cot(theta)
    CHECK(std::abs(ev.gamma(1, 0, 1) - 1.0 / std::tan(theta)) < 1e-12);
    // scalar curvature of the unit sphere
    CHECK(std::abs(ev.ricci_scalar - 2.0) < 1e-10);
    // Christoffel trace Gamma^theta = -cot(theta)
    CHECK(std::abs(ev.gamma_trace[0] + 1.0 / std::tan(theta)) < 1e-12);
    CHECK(std::abs(ev.gamma_trace[1]) < 1e-12);
}

TEST_CASE("2-sphere: finite-difference derivatives agree with analytic ones") {
    auto chart = make_builtin_chart("sphere2");
    const CVec z = real_point({1.1, 0.4});
    MetricEval an = eval_metric(chart.metric, z, DerivMode::Analytic);
    MetricEval fd = eval_metric(chart.metric, z, DerivMode::FiniteDifference);
    for (int m = 0; m < 2; ++m)
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                CHECK(rel_err(fd.gamma(m, a, b), an.gamma(m, a, b)) < 1e-6);
    CHECK(rel_err(fd.ricci_scalar, an.ricci_scalar) < 1e-6);
}

TEST_CASE("schwarzschild exterior: vacuum curvature and FD cross-check") {
    auto chart = make_builtin_chart("schwarzschild", {{"mass", 1.0}});
    const CVec z = real_point({0.0, 6.0, kPi / 2.0, 1.0});
    MetricEval an = eval_metric(chart.metric, z, DerivMode::Analytic);
    CHECK(std::abs(an.ricci_scalar) < 1e-10);
    CHECK(an.ricci.cwiseAbs().maxCoeff() < 1e-10);

    MetricEval fd = eval_metric(chart.metric, z, DerivMode::FiniteDifference);
    CHECK(std::abs(fd.ricci_scalar) < 1e-6);
    for (int m = 0; m < 4; ++m)
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                CHECK(std::abs(fd.gamma(m, a, b) - an.gamma(m, a, b)) < 1e-6);
}

TEST_CASE("analytic continuation: complex evaluation matches real at Im -> 0") {
    auto chart = make_builtin_chart("sphere2");
    CVec zr = real_point({0.9, 0.2});
    CVec zc = zr;
    zc[0] += cx(0, 1e-30);
    CHECK((chart.metric.g(zc) - chart.metric.g(zr)).cwiseAbs().maxCoeff() < 1e-14);

    // off the real slice the components follow the closed form
    CVec zi = real_point({0.9, 0.2});
    zi[0] = cx(0.9, 0.3);
    const cx s = std::sin(zi[0]);
    CHECK(std::abs(chart.metric.g(zi)(1, 1) - s * s) < 1e-14);
}

TEST_CASE("domain and singularity errors") {
    auto chart = make_builtin_chart("schwarzschild", {{"mass", 1.0}});
    CHECK_THROWS_AS(eval_metric(chart.metric, real_point({0.0, 2.0, 1.0, 0.0})), DomainError);
    auto sphere = make_builtin_chart("sphere2");
    CHECK_THROWS_AS(eval_metric(sphere.metric, real_point({0.0, 0.0})), SingularMetric);
    CHECK_THROWS_AS(make_builtin_chart("nosuch"), DomainError);
}

TEST_CASE("euclideanize: minkowski static observer gives the identity") {
    auto chart = make_builtin_chart("minkowski");
    MetricEval ev = eval_metric(chart.metric, real_point({0, 0, 0, 0}));
    CVec u = chart.observer->u(ev.point);
    CMat g_e = euclideanize(ev.g_inv, u);
    CHECK((g_e - CMat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("euclideanize: schwarzschild static observer at r = 4M") {
    auto chart = make_builtin_chart("schwarzschild", {{"mass", 1.0}});
    const CVec z = real_point({0.0, 4.0, kPi / 2.0, 0.0});
    MetricEval ev = eval_metric(chart.metric, z);
    CVec u = chart.observer->u(z);
    CMat g_e = euclideanize(ev.g_inv, u);
    // g_E^{00} = g^{00} + 2 u^0 u^0 = -1/f + 2/f = 1/f = 2 at f = 1/2
    CHECK(std::abs(g_e(0, 0) - cx(2.0, 0)) < 1e-12);
    CHECK(std::abs(g_e(1, 1) - cx(0.5, 0)) < 1e-12);

    // all eigenvalues strictly positive at the real Lorentzian point
    Eigen::SelfAdjointEigenSolver<RMat> es(g_e.real());
    CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("euclideanize: non-unit observer rejected") {
    auto chart = make_builtin_chart("minkowski");
    MetricEval ev = eval_metric(chart.metric, real_point({0, 0, 0, 0}));
    CVec bad = CVec::Zero(4);
    bad[0] = cx(2.0, 0);
    CHECK_THROWS_AS(euclideanize(ev.g_inv, bad), NormalizationError);
}

TEST_CASE("euclideanize skipped on riemannian charts by passing g_inv through") {
    // Non-relativistic mode has no rotation: callers simply use g_inv. This
    // documents the contract that euclideanize is only invoked with observers.
    auto chart = make_builtin_chart("euclidean", {{"n", 3}});
    CHECK_FALSE(chart.observer.has_value());
}

TEST_CASE("field strength: zero, constant-electric and pure-gauge potentials") {
    GaugePotential zero{[](const CVec& z) { return CVec(CVec::Zero(z.size())); }, nullptr, nullptr};
    CMat h0 = field_strength(zero, real_point({0.1, 0.2}));
    CHECK(h0.cwiseAbs().maxCoeff() < 1e-12);

    // A = (0, E x^0): H_{01} = d_0 A_1 - d_1 A_0 = E
    const double e_field = 1.0;
    GaugePotential linear{[e_field](const CVec& z) {
                              CVec a = CVec::Zero(2);
                              a[1] = e_field * z[0];
                              return a;
                          },
                          nullptr, nullptr};
    CMat h = field_strength(linear, real_point({0.4, -0.3}));
    CHECK(std::abs(h(0, 1) - cx(e_field, 0)) < 1e-9);
    CHECK(std::abs(h(1, 0) + cx(e_field, 0)) < 1e-9);
    CHECK(std::abs(h(0, 0)) < 1e-12);

    // pure gauge A = grad f with f = sin(x^0 + 2 x^1)
    GaugePotential gauge{[](const CVec& z) {
                             CVec a(2);
                             const cx c = std::cos(z[0] + 2.0 * z[1]);
                             a[0] = c;
                             a[1] = 2.0 * c;
                             return a;
                         },
                         nullptr, nullptr};
    CMat hg = field_strength(gauge, real_point({0.2, 0.5}));
    CHECK(hg.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("complex cholesky: identity, diagonal, random multiply-back") {
    CHECK((complex_cholesky(CMat::Identity(3, 3)) - CMat::Identity(3, 3)).cwiseAbs().maxCoeff() <
          1e-14);

    CMat d = CMat::Zero(2, 2);
    d(0, 0) = cx(4, 0);
    d(1, 1) = cx(9, 0);
    CMat s = complex_cholesky(d);
    CHECK(std::abs(s(0, 0) - cx(2, 0)) < 1e-14);
    CHECK(std::abs(s(1, 1) - cx(3, 0)) < 1e-14);

    Rng rng(20240817ULL);
    for (int trial = 0; trial < 25; ++trial) {
        CMat a(3, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j) {
                a(i, j) = cx(rng.next_normal(), rng.next_normal());
                a(j, i) = a(i, j);
            }
        a += 4.0 * CMat::Identity(3, 3);  // keep minors away from zero
        CMat sig = complex_cholesky(a);
        const double rel =
            (sig * sig.transpose() - a).cwiseAbs().maxCoeff() / a.cwiseAbs().maxCoeff();
        CHECK(rel < 1e-12);
        // lower triangular
        CHECK(std::abs(sig(0, 1)) < 1e-15);
        CHECK(std::abs(sig(0, 2)) < 1e-15);
        CHECK(std::abs(sig(1, 2)) < 1e-15);
    }
}

TEST_CASE("complex cholesky: pivot failure reported") {
    CMat a = CMat::Zero(2, 2);
    a(0, 0) = cx(0, 0);
    a(0, 1) = a(1, 0) = cx(1, 0);
    a(1, 1) = cx(1, 0);
    CHECK_THROWS_AS(complex_cholesky(a), PivotFailure);
}

TEST_CASE("euclideanize positive-definiteness across the schwarzschild exterior") {
    auto chart = make_builtin_chart("schwarzschild", {{"mass", 1.0}});
    for (double r : {2.6, 3.0, 5.0, 9.0, 25.0}) {
        const CVec z = real_point({0.0, r, 1.1, 0.3});
        MetricEval ev = eval_metric(chart.metric, z);
        CMat g_e = euclideanize(ev.g_inv, chart.observer->u(z));
        Eigen::SelfAdjointEigenSolver<RMat> es(g_e.real());
        CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
}

TEST_CASE("perturbed-flat: curvature is nonzero and derivatives cross-check") {
    auto chart = make_builtin_chart("perturbed-flat", {{"n", 2}, {"epsilon", 0.1}});
    const CVec z = real_point({0.35, -0.6});
    MetricEval an = eval_metric(chart.metric, z, DerivMode::Analytic);
    MetricEval fd = eval_metric(chart.metric, z, DerivMode::FiniteDifference);
    CHECK(std::abs(an.ricci_scalar) > 1e-3);
    CHECK(rel_err(fd.ricci_scalar, an.ricci_scalar) < 1e-6);
    CVec grad_an = eval_grad_ricci(chart.metric, z, DerivMode::Analytic);
    CHECK(grad_an.cwiseAbs().maxCoeff() > 1e-3);
}
