#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cqv/process.hpp"
#include "cqv/types.hpp"

namespace cqv::fk {

using process::DriftFn;
using process::EnsembleConfig;
using process::ProcessParams;

// Backward problem data. The generator being estimated is
//   (alpha/2m) Laplacian + v . grad - U   (classical mode, alpha real > 0)
// and the path weight is exp(-int U ds); the complex mode weighs by
// exp(-(1/alpha) int U ds) over complexified paths, so both agree at alpha = 1.
struct FKProblem {
    DriftFn drift;                        // may be null (zero drift)
    std::function<cx(const CVec&)> potential;  // may be null (zero)
    std::function<cx(const CVec&)> terminal;
    double t0 = 0.0;
    double horizon = 1.0;  // T - t0
    std::vector<CVec> probes;
    std::string label;  // configuration identity for compare_to_pde
};

enum class EstimateStatus { Ok, VarianceBlowup, Underpowered };

struct FKEstimate {
    cx value = cx(0, 0);
    double std_error = 0.0;  // batch-means SE, combined re/im
    long n_paths = 0;
    double attrition = 0.0;
    EstimateStatus status = EstimateStatus::Ok;
};

// Classical representation; requires alpha real and positive, otherwise
// ModeError points at complex_fk_estimate.
std::vector<FKEstimate> fk_estimate(const FKProblem& problem, const ProcessParams& params,
                                    const EnsembleConfig& config);

// Complexified-process generalization, validated empirically at short
// horizons. Estimates whose SE exceeds 25% of |value| are flagged
// VarianceBlowup instead of being asserted.
std::vector<FKEstimate> complex_fk_estimate(const FKProblem& problem, const ProcessParams& params,
                                            const EnsembleConfig& config, double max_horizon = 0.5);

struct PdeComparison {
    std::vector<double> z_scores;
    double max_abs_z = 0.0;
    double coverage = 0.0;  // fraction of probes with |z| <= 3 (flagged ones excluded)
    int n_flagged = 0;
    bool underpowered = false;
};

// Per-probe z-scores (estimate - pde)/SE. Labels must match or the comparison
// refuses with ConfigMismatch.
PdeComparison compare_to_pde(const std::vector<FKEstimate>& estimates, const std::vector<cx>& pde_values,
                             const std::string& estimate_label, const std::string& pde_label,
                             long min_paths = 100);

}  // namespace cqv::fk
