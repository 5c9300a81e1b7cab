#include "cqv/pde.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "cqv/errors.hpp"
#include "cqv/fd.hpp"

namespace cqv::pde {

namespace {

using SparseC = Eigen::SparseMatrix<cx>;
using Triplet = Eigen::Triplet<cx>;

double coupling_coefficient(CurvatureCoupling coupling, int n) {
    return curvature_coefficient(coupling, n);
}

struct NodeIterator {
    const GridSpec& grid;
    std::vector<int> idx;
    bool done = false;

    explicit NodeIterator(const GridSpec& g) : grid(g), idx(g.dims(), 0) {}
    void advance() {
        for (int a = grid.dims() - 1; a >= 0; --a) {
            if (++idx[a] < grid.npts[a]) return;
            idx[a] = 0;
        }
        done = true;
    }
};

int neighbor_index(const GridSpec& grid, const std::vector<int>& idx, int axis, int offset,
                   bool& exists) {
    int j = idx[axis] + offset;
    exists = true;
    if (grid.boundary == Boundary::Periodic) {
        j = (j % grid.npts[axis] + grid.npts[axis]) % grid.npts[axis];
    } else if (j < 0 || j >= grid.npts[axis]) {
        exists = false;
        return 0;
    }
    std::vector<int> nb = idx;
    nb[axis] = j;
    return static_cast<int>(grid.flatten(nb));
}

bool metric_is_identity(const geometry::ChartedMetric* metric, const GridSpec& grid) {
    if (!metric) return true;
    CVec probe = CVec::Zero(grid.dims());
    for (int a = 0; a < grid.dims(); ++a) probe[a] = 0.5 * (grid.lo[a] + grid.hi[a]);
    CMat g = metric->g(probe);
    return (g - CMat::Identity(grid.dims(), grid.dims())).cwiseAbs().maxCoeff() < 1e-14 &&
           (metric->g(0.75 * probe) - CMat::Identity(grid.dims(), grid.dims())).cwiseAbs().maxCoeff() <
               1e-14;
}

// Discretized [ (nabla - qA/alpha)^2 - c_R R ] with 2nd-order central
// differences. Flat charts support a gauge potential; curved charts must be
// diagonal and ungauged.
SparseC assemble_operator(const GridSpec& grid, const ProcessParams& params,
                          const geometry::ChartedMetric* metric, const geometry::GaugePotential* A,
                          CurvatureCoupling coupling) {
    const int d = grid.dims();
    const size_t total = grid.total();
    const bool flat = metric_is_identity(metric, grid);
    const bool lorentzian = metric && metric->signature == geometry::Signature::Lorentzian;
    if (!flat && A) throw Unsupported("gauge potentials on curved grids are not supported");
    const cx alpha = params.alpha();
    const double q = params.q;
    const double c_r = coupling_coefficient(coupling, d);

    std::vector<Triplet> trip;
    trip.reserve(total * (2 * d + 1));

    if (flat) {
        for (NodeIterator it(grid); !it.done; it.advance()) {
            const int row = static_cast<int>(grid.flatten(it.idx));
            CVec x(d);
            for (int a = 0; a < d; ++a) x[a] = grid.coord(a, it.idx[a]);
            cx diag(0, 0);
            for (int a = 0; a < d; ++a) {
                const double inv_h2 = 1.0 / (grid.h(a) * grid.h(a));
                bool has_m = false, has_p = false;
                const int jm = neighbor_index(grid, it.idx, a, -1, has_m);
                const int jp = neighbor_index(grid, it.idx, a, +1, has_p);
                if (has_m) trip.emplace_back(row, jm, cx(inv_h2, 0));
                if (has_p) trip.emplace_back(row, jp, cx(inv_h2, 0));
                diag -= 2.0 * inv_h2;
            }
            if (A && q != 0.0) {
                const CVec Av = A->A(x);
                cx a_sq(0, 0), div_a(0, 0);
                for (int a = 0; a < d; ++a) {
                    a_sq += Av[a] * Av[a];
                    div_a += fd::d1(A->A, x, a)[a];
                    const double inv_2h = 1.0 / (2.0 * grid.h(a));
                    bool has_m = false, has_p = false;
                    const int jm = neighbor_index(grid, it.idx, a, -1, has_m);
                    const int jp = neighbor_index(grid, it.idx, a, +1, has_p);
                    const cx coeff = -(q / alpha) * 2.0 * Av[a] * inv_2h;
                    if (has_p) trip.emplace_back(row, jp, coeff);
                    if (has_m) trip.emplace_back(row, jm, -coeff);
                }
                diag += -(q / alpha) * div_a + (q * q) / (alpha * alpha) * a_sq;
            }
            trip.emplace_back(row, row, diag);
        }
    } else {
        // Diagonal Laplace-Beltrami: (1/sqrt|g|) d_a (sqrt|g| g^{aa} d_a psi).
        std::vector<CVec> gkk(total);    // diagonal inverse components
        std::vector<cx> root_g(total);   // sqrt |det g|
        std::vector<cx> ricci(total, cx(0, 0));
        for (NodeIterator it(grid); !it.done; it.advance()) {
            const size_t i = grid.flatten(it.idx);
            CVec x(d);
            for (int a = 0; a < d; ++a) x[a] = grid.coord(a, it.idx[a]);
            geometry::MetricCore core = geometry::eval_metric_core(*metric, x);
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b)
                    if (a != b && std::abs(core.g(a, b)) > 1e-13)
                        throw Unsupported("curved-grid solver requires a diagonal metric");
            CVec diag_inv(d);
            cx det(1, 0);
            for (int a = 0; a < d; ++a) {
                diag_inv[a] = core.g_inv(a, a);
                det *= core.g(a, a);
            }
            gkk[i] = diag_inv;
            root_g[i] = std::sqrt(lorentzian ? -det : det);
            if (c_r != 0.0) ricci[i] = geometry::eval_metric(*metric, x).ricci_scalar;
        }
        for (NodeIterator it(grid); !it.done; it.advance()) {
            const int row = static_cast<int>(grid.flatten(it.idx));
            cx diag(0, 0);
            for (int a = 0; a < d; ++a) {
                const double inv_h2 = 1.0 / (grid.h(a) * grid.h(a));
                bool has_m = false, has_p = false;
                const int jm = neighbor_index(grid, it.idx, a, -1, has_m);
                const int jp = neighbor_index(grid, it.idx, a, +1, has_p);
                const cx w_here = root_g[row] * gkk[row][a];
                if (has_p) {
                    const cx w_face = 0.5 * (w_here + root_g[jp] * gkk[jp][a]);
                    trip.emplace_back(row, jp, w_face * inv_h2 / root_g[row]);
                    diag -= w_face * inv_h2 / root_g[row];
                }
                if (has_m) {
                    const cx w_face = 0.5 * (w_here + root_g[jm] * gkk[jm][a]);
                    trip.emplace_back(row, jm, w_face * inv_h2 / root_g[row]);
                    diag -= w_face * inv_h2 / root_g[row];
                }
            }
            diag -= c_r * ricci[row];
            trip.emplace_back(row, row, diag);
        }
        SparseC op(static_cast<int>(total), static_cast<int>(total));
        op.setFromTriplets(trip.begin(), trip.end());
        return op;
    }

    // curvature term for flat charts vanishes
    SparseC op(static_cast<int>(total), static_cast<int>(total));
    op.setFromTriplets(trip.begin(), trip.end());
    return op;
}

CVec sample_scalar(const GridSpec& grid, const ScalarFn& f) {
    CVec out = CVec::Zero(grid.total());
    if (!f) return out;
    for (size_t i = 0; i < grid.total(); ++i) out[static_cast<Eigen::Index>(i)] = f(grid.point(i));
    return out;
}

EvolveResult run_crank_nicolson(const ComplexField& terminal, const SparseC& generator, double span,
                                double dt, const EvolveOptions& options) {
    const auto total = static_cast<Eigen::Index>(terminal.grid.total());
    const double ratio = span / dt;
    const int n_steps = static_cast<int>(std::llround(ratio));
    if (n_steps <= 0 || std::abs(ratio - n_steps) > 1e-9 * std::max(1.0, ratio))
        throw GridError("span must be a whole number of time steps");

    EvolveResult result;
    result.n_steps = n_steps;

    // Data-adapted resolution check: the active modes of the terminal datum
    // must be advanced by less than half a unit per step.
    CVec g_psi = generator * terminal.values;
    const double bound = dt * g_psi.norm() / std::max(terminal.values.norm(), 1e-300);
    result.stability_bound = bound;
    if (bound >= 0.5)
        throw GridError("terminal datum not resolved: |G psi| dt / |psi| = " + std::to_string(bound) +
                        "; refine dt below " + std::to_string(0.4 * dt / bound));

    SparseC id(total, total);
    id.setIdentity();
    SparseC lhs = id - (0.5 * dt) * generator;
    SparseC rhs = id + (0.5 * dt) * generator;
    lhs.makeCompressed();
    rhs.makeCompressed();

    Eigen::SparseLU<SparseC> solver;
    solver.compute(lhs);
    if (solver.info() != Eigen::Success) throw GridError("Crank-Nicolson factorization failed");

    ComplexField field = terminal;
    result.norms.reserve(n_steps + 1);
    result.norms.push_back(field.l2_norm());
    for (int k = 1; k <= n_steps; ++k) {
        CVec b = rhs * field.values;
        field.values = solver.solve(b);
        if (solver.info() != Eigen::Success) throw GridError("Crank-Nicolson solve failed");
        field.time = terminal.time - k * dt;
        const double nrm = field.l2_norm();
        result.max_norm_drift_per_step =
            std::max(result.max_norm_drift_per_step, std::abs(nrm / result.norms.back() - 1.0));
        result.norms.push_back(nrm);
        if (options.snapshot_stride > 0 && k % options.snapshot_stride == 0)
            result.snapshots.push_back(field);
    }
    result.final = std::move(field);
    return result;
}

// In-place DFT along one axis via a precomputed dense transform matrix.
void dft_axis(CVec& values, const GridSpec& grid, int axis, bool inverse) {
    const int n = grid.npts[axis];
    CMat w(n, n);
    const double sign = inverse ? 1.0 : -1.0;
    for (int j = 0; j < n; ++j)
        for (int m = 0; m < n; ++m)
            w(j, m) = std::exp(cx(0.0, sign * 2.0 * kPi * j * m / n));
    if (inverse) w /= static_cast<double>(n);

    size_t stride = 1;
    for (int a = axis + 1; a < grid.dims(); ++a) stride *= grid.npts[a];
    const size_t block = stride * n;
    const size_t total = grid.total();

    CVec line(n), transformed(n);
    for (size_t base = 0; base < total; base += block) {
        for (size_t off = 0; off < stride; ++off) {
            for (int j = 0; j < n; ++j) line[j] = values[base + off + j * stride];
            transformed = w * line;
            for (int j = 0; j < n; ++j) values[base + off + j * stride] = transformed[j];
        }
    }
}

}  // namespace

double curvature_coefficient(CurvatureCoupling coupling, int n) {
    switch (coupling) {
        case CurvatureCoupling::RicciSixth: return 1.0 / 6.0;
        case CurvatureCoupling::Conformal: return n > 1 ? (n - 2.0) / (4.0 * (n - 1.0)) : 0.0;
        case CurvatureCoupling::Off: return 0.0;
    }
    return 0.0;
}

size_t GridSpec::total() const {
    size_t t = 1;
    for (int n : npts) t *= static_cast<size_t>(n);
    return t;
}

CVec GridSpec::point(size_t flat_index) const {
    const int d = dims();
    CVec x(d);
    for (int a = d - 1; a >= 0; --a) {
        x[a] = coord(a, static_cast<int>(flat_index % npts[a]));
        flat_index /= npts[a];
    }
    return x;
}

size_t GridSpec::flatten(const std::vector<int>& idx) const {
    size_t flat = 0;
    for (int a = 0; a < dims(); ++a) flat = flat * npts[a] + idx[a];
    return flat;
}

void GridSpec::validate() const {
    if (npts.empty() || lo.size() != npts.size() || hi.size() != npts.size())
        throw GridError("grid axis arrays inconsistent");
    for (size_t a = 0; a < npts.size(); ++a) {
        if (npts[a] < 16) throw GridError("every axis needs at least 16 points");
        if (!(hi[a] > lo[a])) throw GridError("axis extent must be positive");
    }
    if (dt <= 0.0) throw GridError("dt must be positive");
}

double ComplexField::l2_norm() const {
    double cell = 1.0;
    for (int a = 0; a < grid.dims(); ++a) cell *= grid.h(a);
    return std::sqrt(values.squaredNorm() * cell);
}

ComplexField sample_field(const GridSpec& grid, const std::function<cx(const CVec&)>& f, double time) {
    grid.validate();
    ComplexField field;
    field.grid = grid;
    field.time = time;
    field.values = CVec(grid.total());
    for (size_t i = 0; i < grid.total(); ++i) field.values[static_cast<Eigen::Index>(i)] = f(grid.point(i));
    return field;
}

EvolveResult evolve_backward_nonrel(const ComplexField& terminal, const ProcessParams& params,
                                    const geometry::ChartedMetric* metric,
                                    const geometry::GaugePotential* A, const ScalarFn& U,
                                    double span, const EvolveOptions& options) {
    params.validate();
    terminal.grid.validate();
    const cx alpha = params.alpha();
    SparseC d_op = assemble_operator(terminal.grid, params, metric, A, options.coupling);

    // Backward-time generator G = (alpha/2m) D - U/alpha (Feynman-Kac sign).
    SparseC gen = (alpha / (2.0 * params.m)) * d_op;
    CVec u_diag = sample_scalar(terminal.grid, U);
    for (Eigen::Index i = 0; i < u_diag.size(); ++i)
        gen.coeffRef(static_cast<int>(i), static_cast<int>(i)) -= u_diag[i] / alpha;

    return run_crank_nicolson(terminal, gen, span, terminal.grid.dt, options);
}

EvolveResult evolve_backward_rel(const ComplexField& terminal, const ProcessParams& params,
                                 const geometry::ChartedMetric* metric,
                                 const geometry::GaugePotential* A, double span,
                                 const EvolveOptions& options) {
    params.validate();
    terminal.grid.validate();
    if (!metric) throw DomainError("relativistic evolution needs a chart metric");
    const cx al = params.alpha_lambda();
    const GridSpec& grid = terminal.grid;
    const int d = grid.dims();

    const bool spectral_ok = grid.boundary == Boundary::Periodic && !A;
    CMat g0 = metric->g(CVec::Zero(d));
    bool constant_diag = (metric->g(CVec::Constant(d, cx(0.41, 0))) - g0).cwiseAbs().maxCoeff() < 1e-14;
    for (int a = 0; a < d && constant_diag; ++a)
        for (int b = 0; b < d; ++b)
            if (a != b && std::abs(g0(a, b)) > 1e-14) constant_diag = false;

    if (spectral_ok && constant_diag) {
        const double ratio = span / grid.dt;
        const int n_steps = static_cast<int>(std::llround(ratio));
        if (n_steps <= 0 || std::abs(ratio - n_steps) > 1e-9 * std::max(1.0, ratio))
            throw GridError("span must be a whole number of time steps");

        CMat g_inv = g0.inverse();
        CVec modes = terminal.values;
        for (int a = 0; a < d; ++a) dft_axis(modes, grid, a, false);

        // Per-mode multiplier exp(-(alpha lambda / 2) k^2 dt) per step. Modes
        // below the support threshold are dropped outright so an unbounded
        // multiplier on an unpopulated mode cannot pollute the evolution.
        const double max_amp = modes.cwiseAbs().maxCoeff();
        CVec mult(modes.size());
        double worst_growth = 0.0;
        for (size_t i = 0; i < grid.total(); ++i) {
            size_t rem = i;
            std::vector<int> idx(d);
            for (int a = d - 1; a >= 0; --a) {
                idx[a] = static_cast<int>(rem % grid.npts[a]);
                rem /= grid.npts[a];
            }
            cx k_sq(0, 0);
            CVec kvec(d);
            for (int a = 0; a < d; ++a) {
                int j = idx[a] <= grid.npts[a] / 2 ? idx[a] : idx[a] - grid.npts[a];
                kvec[a] = 2.0 * kPi * j / (grid.hi[a] - grid.lo[a]);
            }
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) k_sq += g_inv(a, b) * kvec[a] * kvec[b];
            const auto ei = static_cast<Eigen::Index>(i);
            if (std::abs(modes[ei]) <= 1e-12 * max_amp) {
                modes[ei] = cx(0, 0);
                mult[ei] = cx(0, 0);
                continue;
            }
            const cx exponent = -0.5 * al * k_sq * span;
            worst_growth = std::max(worst_growth, exponent.real());
            mult[ei] = std::exp(-0.5 * al * k_sq * grid.dt);
        }
        if (worst_growth > 30.0)
            throw IllPosedError("terminal datum has support on growing modes (exponent " +
                                std::to_string(worst_growth) + ")");

        EvolveResult result;
        result.n_steps = n_steps;
        result.stability_bound = 0.0;
        ComplexField field = terminal;
        CVec spectrum = modes;
        auto to_physical = [&](const CVec& spec) {
            CVec phys = spec;
            for (int a = 0; a < d; ++a) dft_axis(phys, grid, a, true);
            return phys;
        };
        result.norms.push_back(field.l2_norm());
        for (int k = 1; k <= n_steps; ++k) {
            spectrum = spectrum.cwiseProduct(mult);
            field.values = to_physical(spectrum);
            field.time = terminal.time - k * grid.dt;
            const double nrm = field.l2_norm();
            result.max_norm_drift_per_step =
                std::max(result.max_norm_drift_per_step, std::abs(nrm / result.norms.back() - 1.0));
            result.norms.push_back(nrm);
            if (options.snapshot_stride > 0 && k % options.snapshot_stride == 0)
                result.snapshots.push_back(field);
        }
        result.final = std::move(field);
        return result;
    }

    // Curved (diagonal) charts: Crank-Nicolson with the Laplace-Beltrami form.
    SparseC d_op = assemble_operator(grid, params, metric, A, options.coupling);
    SparseC gen = (0.5 * al) * d_op;
    return run_crank_nicolson(terminal, gen, span, grid.dt, options);
}

std::vector<EigenPair> stationary_eigs_nonrel(const ProcessParams& params,
                                              const geometry::ChartedMetric* metric,
                                              const geometry::GaugePotential* A, const ScalarFn& U,
                                              const GridSpec& grid, int k_max,
                                              const EvolveOptions& options) {
    params.validate();
    grid.validate();
    const cx alpha = params.alpha();
    const cx alpha_sq = alpha * alpha;
    const auto total = static_cast<Eigen::Index>(grid.total());

    SparseC d_op = assemble_operator(grid, params, metric, A, options.coupling);
    CVec u_diag = sample_scalar(grid, U);

    // L = (1/2m) D - U; reported energies are E = alpha^2 mu, ground mode first
    // (largest Re mu = slowest decay of the backward flow).
    SparseC l_op = (1.0 / (2.0 * params.m)) * d_op;
    for (Eigen::Index i = 0; i < total; ++i)
        l_op.coeffRef(static_cast<int>(i), static_cast<int>(i)) -= u_diag[i];

    bool hermitian = !A && metric_is_identity(metric, grid);
    for (Eigen::Index i = 0; i < total && hermitian; ++i)
        if (std::abs(u_diag[i].imag()) > 1e-14) hermitian = false;

    RVec eigenvalues_re;
    RMat vectors_re;
    CVec eigenvalues_c;
    CMat vectors_c;
    bool complex_path = false;

    if (hermitian && grid.dims() == 1 && grid.boundary == Boundary::Dirichlet) {
        // Real symmetric tridiagonal fast path.
        RVec diag(total), sub(total - 1);
        for (Eigen::Index i = 0; i < total; ++i) diag[i] = l_op.coeff(static_cast<int>(i), static_cast<int>(i)).real();
        for (Eigen::Index i = 0; i + 1 < total; ++i)
            sub[i] = l_op.coeff(static_cast<int>(i) + 1, static_cast<int>(i)).real();
        Eigen::SelfAdjointEigenSolver<RMat> solver;
        solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
        if (solver.info() != Eigen::Success) throw EigenError("tridiagonal eigensolver failed");
        eigenvalues_re = solver.eigenvalues();
        vectors_re = solver.eigenvectors();
    } else if (hermitian) {
        if (total > 4096) throw EigenError("dense Hermitian grid too large (> 4096 nodes)");
        RMat dense = RMat::Zero(total, total);
        for (int k = 0; k < l_op.outerSize(); ++k)
            for (SparseC::InnerIterator it(l_op, k); it; ++it)
                dense(it.row(), it.col()) = it.value().real();
        dense = 0.5 * (dense + dense.transpose().eval());
        Eigen::SelfAdjointEigenSolver<RMat> solver(dense);
        if (solver.info() != Eigen::Success) throw EigenError("dense symmetric eigensolver failed");
        eigenvalues_re = solver.eigenvalues();
        vectors_re = solver.eigenvectors();
    } else {
        if (total > 1200) throw EigenError("dense complex grid too large (> 1200 nodes)");
        CMat dense = CMat::Zero(total, total);
        for (int k = 0; k < l_op.outerSize(); ++k)
            for (SparseC::InnerIterator it(l_op, k); it; ++it) dense(it.row(), it.col()) = it.value();
        Eigen::ComplexEigenSolver<CMat> solver(dense);
        if (solver.info() != Eigen::Success) throw EigenError("dense complex eigensolver failed");
        eigenvalues_c = solver.eigenvalues();
        vectors_c = solver.eigenvectors();
        complex_path = true;
    }

    const Eigen::Index n_found = complex_path ? eigenvalues_c.size() : eigenvalues_re.size();
    std::vector<Eigen::Index> order(static_cast<size_t>(n_found));
    std::iota(order.begin(), order.end(), 0);
    auto mu_at = [&](Eigen::Index i) {
        return complex_path ? eigenvalues_c[i] : cx(eigenvalues_re[i], 0.0);
    };
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return mu_at(a).real() > mu_at(b).real(); });

    double cell = 1.0;
    for (int a = 0; a < grid.dims(); ++a) cell *= grid.h(a);

    std::vector<EigenPair> out;
    const int count = std::min<Eigen::Index>(k_max, n_found);
    for (int k = 0; k < count; ++k) {
        const Eigen::Index j = order[static_cast<size_t>(k)];
        EigenPair pair;
        const cx mu = mu_at(j);
        pair.energy = alpha_sq * mu;
        CVec phi = complex_path ? CVec(vectors_c.col(j)) : CVec(vectors_re.col(j).cast<cx>());
        // Fix normalization and phase (largest entry real positive).
        Eigen::Index imax = 0;
        phi.cwiseAbs().maxCoeff(&imax);
        phi *= std::abs(phi[imax]) / phi[imax];
        phi /= std::sqrt(phi.squaredNorm() * cell);
        pair.residual = (l_op * phi - mu * phi).norm() / phi.norm();
        pair.phi = std::move(phi);
        out.push_back(std::move(pair));
    }
    return out;
}

std::vector<cx> klein_gordon_residual(const ProbeField& phi, const ProcessParams& params,
                                      const geometry::ChartedMetric& metric,
                                      const geometry::GaugePotential* A,
                                      const std::vector<CVec>& probes, CurvatureCoupling coupling) {
    const int n = metric.dim;
    const cx alpha = params.alpha();
    const double q = params.q;
    const double mass = params.m;
    const double c_r = coupling_coefficient(coupling, n);

    auto grad_of = [&](const CVec& z) {
        if (phi.grad) return phi.grad(z);
        CVec g(n);
        for (int k = 0; k < n; ++k) g[k] = fd::d1(phi.value, z, k);
        return g;
    };
    auto hess_of = [&](const CVec& z) {
        if (phi.hess) return phi.hess(z);
        CMat h(n, n);
        for (int a = 0; a < n; ++a)
            for (int b = a; b < n; ++b) {
                h(a, b) = fd::d2(phi.value, z, a, b);
                h(b, a) = h(a, b);
            }
        return h;
    };

    std::vector<cx> out;
    out.reserve(probes.size());
    for (const CVec& z : probes) {
        geometry::MetricEval ev = geometry::eval_metric(metric, z);
        const cx value = phi.value(z);
        const CVec grad = grad_of(z);
        const CMat hess = hess_of(z);

        cx box(0, 0);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) {
                cx cov = hess(a, b);
                for (int k = 0; k < n; ++k) cov -= ev.gamma(k, a, b) * grad[k];
                box += ev.g_inv(a, b) * cov;
            }

        cx gauge(0, 0);
        if (A && q != 0.0) {
            const CVec Av = A->A(z);
            CMat dA(n, n);
            if (A->dA_flat) {
                CVec flat = A->dA_flat(z);
                for (int a = 0; a < n; ++a)
                    for (int b = 0; b < n; ++b) dA(a, b) = flat[a * n + b];
            } else {
                for (int a = 0; a < n; ++a) {
                    CVec col = fd::d1(A->A, z, a);
                    for (int b = 0; b < n; ++b) dA(a, b) = col[b];
                }
            }
            CVec a_up = CVec::Zero(n);
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) a_up[a] += ev.g_inv(a, b) * Av[b];
            cx div_a(0, 0);
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) {
                    div_a += ev.dg_inv(a, a, b) * Av[b] + ev.g_inv(a, b) * dA(a, b);
                }
            for (int m = 0; m < n; ++m)
                for (int k = 0; k < n; ++k) div_a += ev.gamma(m, m, k) * a_up[k];
            cx a_dot_grad(0, 0), a_sq(0, 0);
            for (int a = 0; a < n; ++a) {
                a_dot_grad += a_up[a] * grad[a];
                a_sq += a_up[a] * Av[a];
            }
            gauge = -(q / alpha) * (2.0 * a_dot_grad + div_a * value) +
                    (q * q) / (alpha * alpha) * a_sq * value;
        }

        out.push_back(box + gauge - c_r * ev.ricci_scalar * value +
                      mass * mass / (alpha * alpha) * value);
    }
    return out;
}

PrincipalWavefunction wavefunction_from_principal(const hj::PrincipalFunction& S,
                                                  const ProcessParams& params) {
    params.validate();
    const cx alpha = params.alpha();
    const double level = 0.5 * params.lambda * params.m * params.m;
    const double rho = params.rho, phi_angle = params.phi;
    auto s_fn = S.S;

    PrincipalWavefunction out;
    out.psi = [s_fn, alpha, level](const CVec& z, double tau) {
        return std::exp((s_fn(z, tau) + level * tau) / alpha);
    };
    out.abs2 = [psi = out.psi](const CVec& z, double tau) { return std::norm(psi(z, tau)); };
    out.abs2_polar = [s_fn, level, rho, phi_angle](const CVec& z, double tau) {
        const cx s = s_fn(z, tau);
        return std::exp(2.0 / rho *
                        (std::cos(phi_angle) * (s.real() + level * tau) + std::sin(phi_angle) * s.imag()));
    };
    return out;
}

namespace {

// Multilinear interpolation over the real slice of the chart.
cx interpolate_grid(const ComplexField& field, const RVec& x) {
    const GridSpec& grid = field.grid;
    const int d = grid.dims();
    std::vector<int> base(d);
    std::vector<double> frac(d);
    for (int a = 0; a < d; ++a) {
        const double u = (x[a] - grid.lo[a]) / grid.h(a);
        const int max_idx = grid.boundary == Boundary::Periodic ? grid.npts[a] : grid.npts[a] - 1;
        if (u < -1e-9 || u > max_idx + 1e-9) throw DomainError("point outside field grid");
        int i0 = static_cast<int>(std::floor(u));
        i0 = std::max(0, std::min(i0, max_idx - 1));
        base[a] = i0;
        frac[a] = u - i0;
    }
    cx value(0, 0);
    for (int corner = 0; corner < (1 << d); ++corner) {
        double weight = 1.0;
        std::vector<int> idx(d);
        for (int a = 0; a < d; ++a) {
            const bool hi = corner & (1 << a);
            weight *= hi ? frac[a] : 1.0 - frac[a];
            int j = base[a] + (hi ? 1 : 0);
            if (grid.boundary == Boundary::Periodic) j %= grid.npts[a];
            idx[a] = std::min(j, grid.npts[a] - 1);
        }
        value += weight * field.values[static_cast<Eigen::Index>(grid.flatten(idx))];
    }
    return value;
}

}  // namespace

hj::Wavefunction wavefunction_from_grid(const ComplexField& field, double node_threshold) {
    const int d = field.grid.dims();
    const double ref = field.values.cwiseAbs().maxCoeff();

    // Precompute central-difference gradients per axis, stored as fields.
    auto shared = std::make_shared<std::vector<ComplexField>>();
    shared->reserve(d);
    for (int a = 0; a < d; ++a) {
        ComplexField grad_field = field;
        const double inv_2h = 1.0 / (2.0 * field.grid.h(a));
        for (NodeIterator it(field.grid); !it.done; it.advance()) {
            bool has_m = false, has_p = false;
            const int jm = neighbor_index(field.grid, it.idx, a, -1, has_m);
            const int jp = neighbor_index(field.grid, it.idx, a, +1, has_p);
            const size_t row = field.grid.flatten(it.idx);
            const cx fm = has_m ? field.values[jm] : field.values[static_cast<Eigen::Index>(row)];
            const cx fp = has_p ? field.values[jp] : field.values[static_cast<Eigen::Index>(row)];
            // central where possible, one-sided at dirichlet edges
            const double factor = (has_m && has_p) ? inv_2h : 2.0 * inv_2h;
            grad_field.values[static_cast<Eigen::Index>(row)] = (fp - fm) * factor;
        }
        shared->push_back(std::move(grad_field));
    }
    auto base = std::make_shared<ComplexField>(field);

    hj::Wavefunction psi;
    psi.ref_amplitude = ref;
    psi.node_threshold = node_threshold;
    psi.psi = [base, shared, d](const CVec& z) {
        RVec x(d);
        for (int a = 0; a < d; ++a) x[a] = z[a].real();
        cx value = interpolate_grid(*base, x);
        // first-order continuation off the real slice
        for (int a = 0; a < d; ++a)
            if (z[a].imag() != 0.0)
                value += I() * z[a].imag() * interpolate_grid((*shared)[a], x);
        return value;
    };
    psi.grad_log_psi = [base, shared, d, node_threshold, ref](const CVec& z) {
        RVec x(d);
        for (int a = 0; a < d; ++a) x[a] = z[a].real();
        const cx value = interpolate_grid(*base, x);
        if (std::abs(value) < node_threshold * ref) throw NodeRegion("grid wavefunction node");
        CVec g(d);
        for (int a = 0; a < d; ++a) g[a] = interpolate_grid((*shared)[a], x) / value;
        return g;
    };
    return psi;
}

void check_single_valued(const hj::PrincipalFunction& S, const std::vector<CVec>& loop, double tau,
                         double tol) {
    if (loop.size() < 3) throw DomainError("loop needs at least 3 points");
    const int n = static_cast<int>(loop.front().size());
    auto grad = [&](const CVec& z) {
        if (S.grad_S) return S.grad_S(z, tau);
        CVec g(n);
        auto slice = [&](const CVec& p) { return S.S(p, tau); };
        for (int k = 0; k < n; ++k) g[k] = fd::d1(slice, z, k);
        return g;
    };
    cx circulation(0, 0);
    for (size_t i = 0; i < loop.size(); ++i) {
        const CVec& a = loop[i];
        const CVec& b = loop[(i + 1) % loop.size()];
        const CVec ga = grad(a), gb = grad(b);
        for (int k = 0; k < n; ++k) circulation += 0.5 * (ga[k] + gb[k]) * (b[k] - a[k]);
    }
    if (std::abs(circulation) > tol)
        throw TopologyError("grad S has loop integral " + std::to_string(std::abs(circulation)));
}

}  // namespace cqv::pde
