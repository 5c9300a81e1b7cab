#include "cqv/process.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <thread>

namespace cqv::process {

void ProcessParams::validate() const {
    if (beta != 0.0) throw DomainError("beta must be 0 in this artifact");
    if (rho < 0.0) throw DomainError("rho must be >= 0");
    if (lambda <= 0.0) throw DomainError("lambda must be > 0");
    if (m < 0.0) throw DomainError("mass must be >= 0");
    if (dim < 1) throw DomainError("dim must be >= 1");
    if (mode == Mode::Relativistic && m > 0.0 && std::abs(lambda * m - 1.0) > 1e-12)
        throw DomainError("massive relativistic gauge requires lambda = 1/m");
}

ProcessParams ProcessParams::massive_relativistic(double mass, double rho, double phi, int dim, double q) {
    ProcessParams p;
    p.m = mass;
    p.lambda = 1.0 / mass;
    p.rho = rho;
    p.phi = phi;
    p.dim = dim;
    p.q = q;
    p.mode = Mode::Relativistic;
    return p;
}

ProcessParams ProcessParams::massless_relativistic(double rho, double phi, int dim, double q) {
    ProcessParams p;
    p.m = 0.0;
    p.lambda = 1.0;
    p.rho = rho;
    p.phi = phi;
    p.dim = dim;
    p.q = q;
    p.mode = Mode::Relativistic;
    return p;
}

ProcessParams ProcessParams::nonrelativistic(double mass, double rho, double phi, int dim, double q) {
    ProcessParams p;
    p.m = mass;
    p.lambda = 1.0 / mass;
    p.rho = rho;
    p.phi = phi;
    p.dim = dim;
    p.q = q;
    p.mode = Mode::NonRelativistic;
    return p;
}

int EnsembleConfig::n_steps() const {
    const double ratio = horizon / dt;
    return static_cast<int>(std::llround(ratio));
}

void EnsembleConfig::validate() const {
    if (n_paths < 1) throw DomainError("n_paths must be >= 1");
    if (dt <= 0.0) throw DomainError("dt must be > 0");
    if (horizon <= 0.0) throw DomainError("horizon must be > 0");
    const double ratio = horizon / dt;
    if (std::abs(ratio - std::llround(ratio)) > 1e-9 * std::max(1.0, ratio))
        throw DomainError("horizon must be a whole number of steps");
}

SimChart SimChart::flat(int n) {
    SimChart c;
    c.dim = n;
    c.constant_components = true;
    c.sigma0 = CMat::Identity(n, n);
    return c;
}

SimChart SimChart::from(const geometry::ChartedMetric* metric, const geometry::ObserverField* observer) {
    SimChart c;
    c.metric = metric;
    c.observer = observer;
    c.dim = metric ? metric->dim : 1;
    if (!metric) {
        c.constant_components = true;
        c.sigma0 = CMat::Identity(c.dim, c.dim);
        return c;
    }
    // Probe two points; constant charts (flat builtins) get a single
    // factorization up front.
    try {
        CVec p0 = CVec::Zero(c.dim);
        CVec p1 = CVec::Constant(c.dim, cx(0.37, 0.0));
        CMat g0 = metric->g(p0), g1 = metric->g(p1);
        if ((g0 - g1).cwiseAbs().maxCoeff() == 0.0) {
            c.sigma0 = sigma_at(c, p0, nullptr);
            c.constant_components = true;
        }
    } catch (const std::exception&) {
        c.constant_components = false;
    }
    return c;
}

CMat sigma_at(const SimChart& chart, const CVec& z, double* max_im_observer) {
    if (!chart.metric) return CMat::Identity(chart.dim, chart.dim);
    geometry::MetricCore core = geometry::eval_metric_core(*chart.metric, z);
    CMat g_e = core.g_inv;
    if (chart.metric->signature == geometry::Signature::Lorentzian && chart.observer) {
        CVec u = chart.observer->u(z);
        if (max_im_observer) {
            for (Eigen::Index i = 0; i < u.size(); ++i)
                *max_im_observer = std::max(*max_im_observer, std::abs(u[i].imag()));
        }
        g_e = geometry::euclideanize(core.g_inv, u);
    }
    return geometry::complex_cholesky(g_e);
}

CVec step(const CVec& z, const CVec& drift_at_z, const ProcessParams& params, double dt,
          const RVec& gaussians, const CMat& sigma) {
    if (!finite(drift_at_z)) throw DriftBlowup("non-finite drift at step");
    return z + drift_at_z * dt +
           params.sqrt_alpha_lambda() * std::sqrt(dt) * (sigma * gaussians.cast<cx>());
}

int thread_count() {
    if (const char* env = std::getenv("CQV_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return std::min(v, 64);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(std::min(hw, 16u));
}

PathEnsemble simulate_ensemble(const DriftFn& drift, const ProcessParams& params,
                               const EnsembleConfig& config, const SimChart& chart) {
    params.validate();
    config.validate();
    if (config.z0.size() != chart.dim) throw DomainError("z0 dimension does not match chart");

    const int n_paths = config.n_paths;
    const int n_steps = config.n_steps();

    PathEnsemble ens;
    ens.params = params;
    ens.config = config;
    ens.paths.resize(n_paths);
    ens.seeds.resize(n_paths);
    ens.accepted.assign(n_paths, 1);
    ens.flat_chart = (chart.metric == nullptr) ||
                     (chart.constant_components && (chart.sigma0 - CMat::Identity(chart.dim, chart.dim))
                                                           .cwiseAbs()
                                                           .maxCoeff() < 1e-14);

    std::vector<double> im_obs(n_paths, 0.0);

    auto run_block = [&](int begin, int end) {
        for (int p = begin; p < end; ++p) {
            const bool flip = config.antithetic && (p % 2 == 1);
            const uint64_t seed = split_seed(config.master_seed, config.antithetic ? p / 2 : p);
            ens.seeds[p] = seed;
            auto& path = ens.paths[p];
            path.step = config.dt;
            path.times.clear();
            path.positions.clear();
            path.times.reserve(n_steps + 1);
            path.positions.reserve(n_steps + 1);
            PathStats stats = walk_path(drift, params, chart, config.z0, config.dt, n_steps, seed,
                                        flip, [&](int, double tau, const CVec& z) {
                                            path.times.push_back(tau);
                                            path.positions.push_back(z);
                                        });
            im_obs[p] = stats.max_im_observer;
            if (!stats.accepted) ens.accepted[p] = 0;
        }
    };

    const int n_threads = std::min(thread_count(), n_paths);
    if (n_threads <= 1) {
        run_block(0, n_paths);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (n_paths + n_threads - 1) / n_threads;
        for (int t = 0; t < n_threads; ++t) {
            const int begin = t * chunk;
            const int end = std::min(n_paths, begin + chunk);
            if (begin < end) pool.emplace_back(run_block, begin, end);
        }
        for (auto& th : pool) th.join();
    }

    for (int p = 0; p < n_paths; ++p) {
        if (!ens.accepted[p]) ++ens.n_rejected;
        ens.max_im_observer = std::max(ens.max_im_observer, im_obs[p]);
    }
    ens.degraded = ens.n_rejected > 0 && ens.attrition() > 0.01;
    return ens;
}

PathEnsemble simulate_ensemble(const DriftFn& drift, const ProcessParams& params,
                               const EnsembleConfig& config) {
    return simulate_ensemble(drift, params, config, SimChart::flat(params.dim));
}

std::vector<CMat> estimate_structure_relation(const PathEnsemble& ensemble, int n_buckets) {
    const int n = ensemble.params.dim;
    const int n_steps = ensemble.config.n_steps();
    if (n_buckets < 1) n_buckets = 1;
    std::vector<CMat> sums(n_buckets, CMat::Zero(n, n));
    std::vector<long> counts(n_buckets, 0);

    for (size_t p = 0; p < ensemble.paths.size(); ++p) {
        if (!ensemble.accepted[p]) continue;
        const auto& path = ensemble.paths[p];
        for (size_t i = 0; i + 1 < path.positions.size(); ++i) {
            int bucket = static_cast<int>(i * n_buckets / static_cast<size_t>(n_steps));
            bucket = std::min(bucket, n_buckets - 1);
            const CVec dz = path.positions[i + 1] - path.positions[i];
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) sums[bucket](a, b) += dz[a] * dz[b];
            ++counts[bucket];
        }
    }
    for (int b = 0; b < n_buckets; ++b) {
        if (counts[b] == 0) throw DomainError("empty ensemble bucket");
        sums[b] /= (static_cast<double>(counts[b]) * ensemble.config.dt);
    }
    return sums;
}

RealImagCovariances split_real_imag_covariances(const PathEnsemble& ensemble) {
    if (!ensemble.flat_chart)
        throw Unsupported("real/imaginary covariance split is defined on flat charts only");
    const int n = ensemble.params.dim;
    RealImagCovariances out;
    out.xx = RMat::Zero(n, n);
    out.yy = RMat::Zero(n, n);
    out.xy = RMat::Zero(n, n);
    long count = 0;
    for (size_t p = 0; p < ensemble.paths.size(); ++p) {
        if (!ensemble.accepted[p]) continue;
        const auto& path = ensemble.paths[p];
        for (size_t i = 0; i + 1 < path.positions.size(); ++i) {
            const CVec dz = path.positions[i + 1] - path.positions[i];
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) {
                    out.xx(a, b) += dz[a].real() * dz[b].real();
                    out.yy(a, b) += dz[a].imag() * dz[b].imag();
                    out.xy(a, b) += dz[a].real() * dz[b].imag();
                }
            ++count;
        }
    }
    if (count == 0) throw DomainError("empty ensemble");
    const double norm = 1.0 / (static_cast<double>(count) * ensemble.config.dt);
    out.xx *= norm;
    out.yy *= norm;
    out.xy *= norm;
    return out;
}

PredictedRates predicted_flat_rates(const ProcessParams& p) {
    // m d[X,X] = (beta + rho (1 + cos phi))/2 dt and cyclic relations; with the
    // gauge lambda = 1/m these are rho lambda (1 +- cos phi)/2, rho lambda sin(phi)/2.
    PredictedRates r;
    r.xx = p.rho * p.lambda * (1.0 + std::cos(p.phi)) / 2.0;
    r.yy = p.rho * p.lambda * (1.0 - std::cos(p.phi)) / 2.0;
    r.xy = p.rho * p.lambda * std::sin(p.phi) / 2.0;
    return r;
}

CharacteristicFunctional characteristic_functional(const PathEnsemble& ensemble, const CovectorFn& J) {
    CharacteristicFunctional out;
    std::vector<cx> phase_integrals;
    phase_integrals.reserve(ensemble.paths.size());

    for (size_t p = 0; p < ensemble.paths.size(); ++p) {
        if (!ensemble.accepted[p]) continue;
        const auto& path = ensemble.paths[p];
        cx integral(0, 0);
        // trapezoid over the grid
        for (size_t i = 0; i + 1 < path.positions.size(); ++i) {
            const double dt = path.times[i + 1] - path.times[i];
            const CVec j0 = J(path.times[i]);
            const CVec j1 = J(path.times[i + 1]);
            cx f0(0, 0), f1(0, 0);
            for (int k = 0; k < path.dim(); ++k) {
                f0 += j0[k] * path.positions[i][k];
                f1 += j1[k] * path.positions[i + 1][k];
            }
            integral += 0.5 * (f0 + f1) * dt;
        }
        phase_integrals.push_back(integral);
    }
    const size_t n = phase_integrals.size();
    if (n == 0) throw DomainError("empty ensemble");

    cx phi_sum(0, 0), mgf_sum(0, 0);
    double phi_sq = 0.0, mgf_sq = 0.0;
    for (const cx& s : phase_integrals) {
        const cx e_phi = std::exp(I() * s);
        const cx e_mgf = std::exp(s);
        phi_sum += e_phi;
        mgf_sum += e_mgf;
        phi_sq += std::norm(e_phi);
        mgf_sq += std::norm(e_mgf);
        if (!finite(e_mgf)) out.mgf_overflow = true;
    }
    out.phi = phi_sum / static_cast<double>(n);
    out.mgf = mgf_sum / static_cast<double>(n);
    if (n > 1) {
        // Delete-one jackknife of the mean coincides with the standard error.
        const double phi_var = std::max(0.0, phi_sq / n - std::norm(out.phi));
        const double mgf_var = std::max(0.0, mgf_sq / n - std::norm(out.mgf));
        out.phi_se = std::sqrt(phi_var / (n - 1));
        out.mgf_se = std::sqrt(mgf_var / (n - 1));
    }
    if (out.mgf_overflow) {
        out.mgf = cx(std::numeric_limits<double>::infinity(), 0.0);
        out.mgf_se = std::numeric_limits<double>::infinity();
    }
    return out;
}

MartingaleResidual martingale_residual(const PathEnsemble& ensemble, const DriftFn& drift,
                                       int n_buckets) {
    const int n = ensemble.params.dim;
    const int n_steps = ensemble.config.n_steps();
    if (n_buckets < 1) n_buckets = 1;

    MartingaleResidual out;
    std::vector<CVec> sums(n_buckets, CVec::Zero(n));
    std::vector<RVec> sq_re(n_buckets, RVec::Zero(n)), sq_im(n_buckets, RVec::Zero(n));
    std::vector<long> counts(n_buckets, 0);

    for (size_t p = 0; p < ensemble.paths.size(); ++p) {
        if (!ensemble.accepted[p]) continue;
        const auto& path = ensemble.paths[p];
        for (size_t i = 0; i + 1 < path.positions.size(); ++i) {
            int bucket = static_cast<int>(i * n_buckets / static_cast<size_t>(n_steps));
            bucket = std::min(bucket, n_buckets - 1);
            const double dt = path.times[i + 1] - path.times[i];
            CVec w = drift ? drift(path.positions[i]) : CVec::Zero(n);
            const CVec r = (path.positions[i + 1] - path.positions[i] - w * dt) / dt;
            sums[bucket] += r;
            for (int k = 0; k < n; ++k) {
                sq_re[bucket][k] += r[k].real() * r[k].real();
                sq_im[bucket][k] += r[k].imag() * r[k].imag();
            }
            ++counts[bucket];
        }
    }
    out.mean.resize(n_buckets);
    out.se.resize(n_buckets);
    for (int b = 0; b < n_buckets; ++b) {
        if (counts[b] == 0) throw DomainError("empty martingale bucket");
        const double cnt = static_cast<double>(counts[b]);
        out.mean[b] = sums[b] / cnt;
        out.se[b] = CVec::Zero(n);
        for (int k = 0; k < n; ++k) {
            const double var_re = std::max(0.0, sq_re[b][k] / cnt - out.mean[b][k].real() * out.mean[b][k].real());
            const double var_im = std::max(0.0, sq_im[b][k] / cnt - out.mean[b][k].imag() * out.mean[b][k].imag());
            out.se[b][k] = cx(std::sqrt(var_re / cnt), std::sqrt(var_im / cnt));
        }
    }
    return out;
}

}  // namespace cqv::process
