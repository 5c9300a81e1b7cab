#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "cqv/errors.hpp"
#include "cqv/geometry.hpp"
#include "cqv/rng.hpp"
#include "cqv/stochastic.hpp"
#include "cqv/types.hpp"

namespace cqv::process {

enum class Mode { Relativistic, NonRelativistic };

// Coupling constants. alpha is kept in polar form (rho, phi); beta is pinned
// to zero: each increment is one complex scalar sqrt(alpha lambda) times a
// single real Gaussian vector, which realizes maximal Z-Zbar correlation.
struct ProcessParams {
    double rho = 1.0;
    double phi = 0.0;
    double beta = 0.0;
    double lambda = 1.0;
    double m = 1.0;
    double q = 0.0;
    int dim = 1;
    Mode mode = Mode::NonRelativistic;

    cx alpha() const { return std::polar(rho, phi); }
    cx alpha_lambda() const { return alpha() * lambda; }
    cx sqrt_alpha_lambda() const { return std::sqrt(alpha_lambda()); }  // principal branch
    void validate() const;

    static ProcessParams massive_relativistic(double mass, double rho, double phi, int dim, double q = 0.0);
    static ProcessParams massless_relativistic(double rho, double phi, int dim, double q = 0.0);
    static ProcessParams nonrelativistic(double mass, double rho, double phi, int dim, double q = 0.0);
};

struct EnsembleConfig {
    int n_paths = 1;
    double dt = 1e-3;
    double horizon = 1.0;
    uint64_t master_seed = 0;
    CVec z0;
    bool antithetic = false;

    int n_steps() const;
    void validate() const;  // horizon must be a whole number of steps
};

using DriftFn = std::function<CVec(const CVec&)>;

// Chart data needed while stepping. metric == nullptr means the flat identity
// chart in `dim` coordinates (sigma = I). Constant charts get one factorization.
struct SimChart {
    const geometry::ChartedMetric* metric = nullptr;
    const geometry::ObserverField* observer = nullptr;
    int dim = 1;
    bool constant_components = false;
    CMat sigma0;  // valid when constant_components

    static SimChart flat(int n);
    static SimChart from(const geometry::ChartedMetric* metric, const geometry::ObserverField* observer);
};

// sigma(z) with sigma sigma^T = g_E(z); tracks |Im u| for the off-real-slice
// observer diagnostic.
CMat sigma_at(const SimChart& chart, const CVec& z, double* max_im_observer = nullptr);

// One Euler-Maruyama update: Z' = Z + w(Z) dtau + sqrt(alpha lambda) sigma(Z) xi sqrt(dtau).
CVec step(const CVec& z, const CVec& drift_at_z, const ProcessParams& params, double dt,
          const RVec& gaussians, const CMat& sigma);

struct PathStats {
    bool accepted = true;
    int rejected_at_step = -1;
    std::string reject_reason;
    double max_im_observer = 0.0;
};

// Streaming walk of a single path; on_point(step_index, tau, z) is called for
// every grid point including the initial one. Returns per-path stats; a
// rejected path stops early.
template <class OnPoint>
PathStats walk_path(const DriftFn& drift, const ProcessParams& params, const SimChart& chart,
                    const CVec& z0, double dt, int n_steps, uint64_t seed, bool flip_noise,
                    OnPoint&& on_point) {
    PathStats stats;
    Rng rng(seed);
    const cx noise_scale = params.sqrt_alpha_lambda();
    const double sqrt_dt = std::sqrt(dt);
    const int n = chart.dim;
    CVec z = z0;
    on_point(0, 0.0, z);
    RVec xi(n);
    for (int k = 1; k <= n_steps; ++k) {
        CVec w = CVec::Zero(n);
        if (drift) {
            try {
                w = drift(z);
            } catch (const NodeRegion&) {
                stats.accepted = false;
                stats.rejected_at_step = k;
                stats.reject_reason = "NodeRegion";
                return stats;
            }
            if (!finite(w)) {
                stats.accepted = false;
                stats.rejected_at_step = k;
                stats.reject_reason = "DriftBlowup";
                return stats;
            }
        }
        CMat sigma;
        try {
            sigma = chart.constant_components ? chart.sigma0 : sigma_at(chart, z, &stats.max_im_observer);
        } catch (const PivotFailure&) {
            stats.accepted = false;
            stats.rejected_at_step = k;
            stats.reject_reason = "PivotFailure";
            return stats;
        } catch (const SingularMetric&) {
            stats.accepted = false;
            stats.rejected_at_step = k;
            stats.reject_reason = "SingularMetric";
            return stats;
        }
        for (int j = 0; j < n; ++j) xi[j] = rng.next_normal();
        if (flip_noise) xi = -xi;
        z = z + w * dt + noise_scale * sqrt_dt * (sigma * xi.cast<cx>());
        if (!finite(z)) {
            stats.accepted = false;
            stats.rejected_at_step = k;
            stats.reject_reason = "DriftBlowup";
            return stats;
        }
        on_point(k, k * dt, z);
    }
    return stats;
}

struct PathEnsemble {
    ProcessParams params;
    EnsembleConfig config;
    std::vector<stochastic::DiscretePath> paths;  // slot per path; rejected ones truncated
    std::vector<uint64_t> seeds;
    std::vector<uint8_t> accepted;
    int n_rejected = 0;
    bool degraded = false;  // > 1% rejected
    bool flat_chart = true;
    double max_im_observer = 0.0;

    int n_accepted() const { return static_cast<int>(paths.size()) - n_rejected; }
    double attrition() const {
        return paths.empty() ? 0.0 : static_cast<double>(n_rejected) / static_cast<double>(paths.size());
    }
};

PathEnsemble simulate_ensemble(const DriftFn& drift, const ProcessParams& params,
                               const EnsembleConfig& config, const SimChart& chart);
PathEnsemble simulate_ensemble(const DriftFn& drift, const ProcessParams& params,
                               const EnsembleConfig& config);  // flat chart

// Averaged QV increments per time bucket divided by dt; approximately
// alpha lambda mean(g_E) along paths.
std::vector<CMat> estimate_structure_relation(const PathEnsemble& ensemble, int n_buckets = 1);

struct RealImagCovariances {
    RMat xx, yy, xy;  // measured rates d[X,X]/dt etc.
};
RealImagCovariances split_real_imag_covariances(const PathEnsemble& ensemble);

// Predicted flat-chart rates for one coordinate pair (diagonal entries).
struct PredictedRates {
    double xx, yy, xy;
};
PredictedRates predicted_flat_rates(const ProcessParams& params);

using CovectorFn = std::function<CVec(double)>;  // J_mu(tau)

struct CharacteristicFunctional {
    cx phi;  // E[exp(i int J.Z dtau)]
    double phi_se = 0.0;
    cx mgf;  // E[exp(int J.Z dtau)]
    double mgf_se = 0.0;
    bool mgf_overflow = false;
};
CharacteristicFunctional characteristic_functional(const PathEnsemble& ensemble, const CovectorFn& J);

struct MartingaleResidual {
    std::vector<CVec> mean;  // per time bucket, ensemble mean of (dZ - w dtau)/dtau
    std::vector<CVec> se;    // componentwise standard errors (complex modulus)
};
MartingaleResidual martingale_residual(const PathEnsemble& ensemble, const DriftFn& drift,
                                       int n_buckets = 4);

int thread_count();  // CQV_THREADS override, else hardware concurrency

}  // namespace cqv::process
