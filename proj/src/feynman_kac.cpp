#include "cqv/feynman_kac.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "cqv/errors.hpp"

namespace cqv::fk {

namespace {

// One streaming estimate at a single probe. Values are accumulated per path;
// SE comes from batch means over contiguous path blocks (deterministic for a
// fixed seed layout regardless of thread count).
FKEstimate estimate_at_probe(const FKProblem& problem, const ProcessParams& params,
                             const EnsembleConfig& config, const CVec& probe, uint64_t probe_salt,
                             const cx& potential_scale) {
    const int n_steps = config.n_steps();
    const int n_paths = config.n_paths;
    const process::SimChart chart = process::SimChart::flat(params.dim);

    std::vector<cx> values(n_paths, cx(0, 0));
    std::vector<uint8_t> ok(n_paths, 1);

    auto run_block = [&](int begin, int end) {
        for (int p = begin; p < end; ++p) {
            const uint64_t seed = split_seed(config.master_seed ^ probe_salt, p);
            cx weight_integral(0, 0);
            cx u_prev(0, 0);
            CVec z_last = probe;
            auto on_point = [&](int k, double, const CVec& z) {
                if (problem.potential) {
                    const cx u_here = problem.potential(z);
                    if (k > 0) weight_integral += 0.5 * (u_prev + u_here) * config.dt;
                    u_prev = u_here;
                }
                if (k == n_steps) z_last = z;
            };
            process::PathStats stats = process::walk_path(problem.drift, params, chart, probe,
                                                          config.dt, n_steps, seed, false, on_point);
            if (!stats.accepted) {
                ok[p] = 0;
                continue;
            }
            values[p] = std::exp(-potential_scale * weight_integral) * problem.terminal(z_last);
        }
    };

    const int n_threads = std::min(process::thread_count(), n_paths);
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

    FKEstimate est;
    long n_ok = 0;
    cx sum(0, 0);
    for (int p = 0; p < n_paths; ++p)
        if (ok[p]) {
            sum += values[p];
            ++n_ok;
        }
    est.n_paths = n_ok;
    est.attrition = 1.0 - static_cast<double>(n_ok) / n_paths;
    if (n_ok == 0) {
        est.status = EstimateStatus::Underpowered;
        return est;
    }
    est.value = sum / static_cast<double>(n_ok);

    // Batch means over accepted paths in index order.
    const int n_batches = static_cast<int>(std::min<long>(64, n_ok));
    if (n_batches >= 2) {
        std::vector<cx> batch_sums(n_batches, cx(0, 0));
        std::vector<long> batch_counts(n_batches, 0);
        long rank = 0;
        for (int p = 0; p < n_paths; ++p) {
            if (!ok[p]) continue;
            const int b = static_cast<int>(rank * n_batches / n_ok);
            batch_sums[b] += values[p];
            ++batch_counts[b];
            ++rank;
        }
        double var_re = 0.0, var_im = 0.0;
        int used = 0;
        for (int b = 0; b < n_batches; ++b) {
            if (batch_counts[b] == 0) continue;
            const cx bm = batch_sums[b] / static_cast<double>(batch_counts[b]);
            var_re += (bm.real() - est.value.real()) * (bm.real() - est.value.real());
            var_im += (bm.imag() - est.value.imag()) * (bm.imag() - est.value.imag());
            ++used;
        }
        if (used >= 2) {
            var_re /= (used - 1);
            var_im /= (used - 1);
            est.std_error = std::sqrt((var_re + var_im) / used);
        }
    }
    return est;
}

std::vector<FKEstimate> run_all_probes(const FKProblem& problem, const ProcessParams& params,
                                       const EnsembleConfig& config, const cx& potential_scale) {
    if (!problem.terminal) throw DomainError("terminal function required");
    if (problem.probes.empty()) throw DomainError("at least one probe required");
    EnsembleConfig cfg = config;
    cfg.horizon = problem.horizon;
    cfg.validate();
    params.validate();

    std::vector<FKEstimate> out;
    out.reserve(problem.probes.size());
    for (size_t i = 0; i < problem.probes.size(); ++i) {
        uint64_t salt = 0x51ed2701u + 0x9e3779b97f4a7c15ULL * (i + 1);
        out.push_back(estimate_at_probe(problem, params, cfg, problem.probes[i], salt, potential_scale));
    }
    return out;
}

}  // namespace

std::vector<FKEstimate> fk_estimate(const FKProblem& problem, const ProcessParams& params,
                                    const EnsembleConfig& config) {
    if (params.phi != 0.0 || params.rho <= 0.0)
        throw ModeError("classical mode requires real alpha > 0; use complex_fk_estimate");
    return run_all_probes(problem, params, config, cx(1.0, 0.0));
}

std::vector<FKEstimate> complex_fk_estimate(const FKProblem& problem, const ProcessParams& params,
                                            const EnsembleConfig& config, double max_horizon) {
    if (problem.horizon > max_horizon)
        throw DomainError("complex mode enforces short horizons (T - t <= " +
                          std::to_string(max_horizon) + ")");
    // Weight exp(-(1/alpha) int U): reduces to the classical functional at
    // alpha = 1, where paths are seed-for-seed identical as well.
    std::vector<FKEstimate> out = run_all_probes(problem, params, config, 1.0 / params.alpha());
    for (auto& est : out) {
        if (est.status != EstimateStatus::Ok) continue;
        if (est.std_error > 0.25 * std::abs(est.value)) est.status = EstimateStatus::VarianceBlowup;
    }
    return out;
}

PdeComparison compare_to_pde(const std::vector<FKEstimate>& estimates, const std::vector<cx>& pde_values,
                             const std::string& estimate_label, const std::string& pde_label,
                             long min_paths) {
    if (estimate_label != pde_label)
        throw ConfigMismatch("estimate '" + estimate_label + "' vs pde '" + pde_label + "'");
    if (estimates.size() != pde_values.size())
        throw ConfigMismatch("probe count mismatch between estimates and field");

    PdeComparison cmp;
    cmp.z_scores.reserve(estimates.size());
    int covered = 0, scored = 0;
    for (size_t i = 0; i < estimates.size(); ++i) {
        const FKEstimate& est = estimates[i];
        if (est.n_paths < min_paths || est.std_error == 0.0) {
            cmp.underpowered = true;
            cmp.z_scores.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        if (est.status == EstimateStatus::VarianceBlowup) {
            ++cmp.n_flagged;
            cmp.z_scores.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        const double z = std::abs(est.value - pde_values[i]) / est.std_error;
        cmp.z_scores.push_back(z);
        cmp.max_abs_z = std::max(cmp.max_abs_z, z);
        ++scored;
        if (z <= 3.0) ++covered;
    }
    cmp.coverage = scored > 0 ? static_cast<double>(covered) / scored : 0.0;
    return cmp;
}

}  // namespace cqv::fk
