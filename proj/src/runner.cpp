#include "cqv/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "cqv/expansion.hpp"
#include "cqv/feynman_kac.hpp"
#include "cqv/hamilton_jacobi.hpp"
#include "cqv/io.hpp"
#include "cqv/pde.hpp"
#include "cqv/rng.hpp"

namespace cqv::runner {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::set<std::string> kExperiments = {"simulate",      "evolve",          "fk-compare",
                                            "identity-check", "classical-limit", "phi-sweep"};

void require_object(const json& node, const std::string& path) {
    if (!node.is_object()) throw ConfigError(path, "expected an object");
}

void check_keys(const json& node, const std::string& path, const std::set<std::string>& allowed,
                const std::set<std::string>& required) {
    require_object(node, path);
    for (auto it = node.begin(); it != node.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError(path + "." + it.key(), "unknown key");
    for (const auto& key : required)
        if (!node.contains(key)) throw ConfigError(path + "." + key, "missing required key");
}

double need_number(const json& node, const std::string& path, const std::string& key) {
    if (!node.contains(key) || !node[key].is_number())
        throw ConfigError(path + "." + key, "expected a number");
    return node[key].get<double>();
}

double opt_number(const json& node, const std::string& key, double fallback) {
    return node.contains(key) ? node[key].get<double>() : fallback;
}

std::string opt_string(const json& node, const std::string& key, const std::string& fallback) {
    return node.contains(key) ? node[key].get<std::string>() : fallback;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

process::ProcessParams parse_params(const json& config) {
    const json& p = config.at("process");
    check_keys(p, "process",
               {"rho", "phi", "mass", "charge", "dim", "mode", "lambda"},
               {"rho", "phi", "mass", "dim"});
    process::ProcessParams params;
    params.rho = need_number(p, "process", "rho");
    params.phi = need_number(p, "process", "phi");
    params.m = need_number(p, "process", "mass");
    params.q = opt_number(p, "charge", 0.0);
    params.dim = static_cast<int>(need_number(p, "process", "dim"));
    const std::string mode = opt_string(p, "mode", "nonrelativistic");
    if (mode == "relativistic")
        params.mode = process::Mode::Relativistic;
    else if (mode == "nonrelativistic")
        params.mode = process::Mode::NonRelativistic;
    else
        throw ConfigError("process.mode", "must be relativistic or nonrelativistic");
    if (p.contains("lambda"))
        params.lambda = p["lambda"].get<double>();
    else if (params.m > 0.0)
        params.lambda = 1.0 / params.m;
    else
        params.lambda = 1.0;
    try {
        params.validate();
    } catch (const std::exception& e) {
        throw ConfigError("process", e.what());
    }
    return params;
}

struct ChartBundle {
    bool present = false;
    geometry::BuiltinChart chart;
};

ChartBundle parse_metric(const json& config) {
    ChartBundle bundle;
    if (!config.contains("metric")) return bundle;
    const json& m = config.at("metric");
    check_keys(m, "metric", {"name", "params"}, {"name"});
    std::map<std::string, double> params;
    if (m.contains("params")) {
        require_object(m["params"], "metric.params");
        for (auto it = m["params"].begin(); it != m["params"].end(); ++it)
            params[it.key()] = it.value().get<double>();
    }
    try {
        bundle.chart = geometry::make_builtin_chart(m["name"].get<std::string>(), params);
    } catch (const std::exception& e) {
        throw ConfigError("metric.name", e.what());
    }
    bundle.present = true;
    return bundle;
}

process::EnsembleConfig parse_ensemble(const json& node, const std::string& path, int dim) {
    check_keys(node, path,
               {"n_paths", "dt", "horizon", "master_seed", "z0_re", "z0_im", "antithetic"},
               {"n_paths", "dt", "horizon", "master_seed"});
    process::EnsembleConfig cfg;
    cfg.n_paths = static_cast<int>(need_number(node, path, "n_paths"));
    cfg.dt = need_number(node, path, "dt");
    cfg.horizon = need_number(node, path, "horizon");
    cfg.master_seed = node["master_seed"].get<uint64_t>();
    cfg.antithetic = node.contains("antithetic") && node["antithetic"].get<bool>();
    cfg.z0 = CVec::Zero(dim);
    if (node.contains("z0_re")) {
        auto re = node["z0_re"].get<std::vector<double>>();
        if (static_cast<int>(re.size()) != dim) throw ConfigError(path + ".z0_re", "length != dim");
        for (int k = 0; k < dim; ++k) cfg.z0[k] = cx(re[k], cfg.z0[k].imag());
    }
    if (node.contains("z0_im")) {
        auto im = node["z0_im"].get<std::vector<double>>();
        if (static_cast<int>(im.size()) != dim) throw ConfigError(path + ".z0_im", "length != dim");
        for (int k = 0; k < dim; ++k) cfg.z0[k] = cx(cfg.z0[k].real(), im[k]);
    }
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw ConfigError(path, e.what());
    }
    return cfg;
}

pde::GridSpec parse_grid(const json& node, const std::string& path) {
    check_keys(node, path, {"lo", "hi", "npts", "boundary", "dt"}, {"lo", "hi", "npts", "dt"});
    pde::GridSpec grid;
    grid.lo = node["lo"].get<std::vector<double>>();
    grid.hi = node["hi"].get<std::vector<double>>();
    grid.npts = node["npts"].get<std::vector<int>>();
    grid.dt = need_number(node, path, "dt");
    const std::string boundary = opt_string(node, "boundary", "dirichlet");
    if (boundary == "periodic")
        grid.boundary = pde::Boundary::Periodic;
    else if (boundary == "dirichlet")
        grid.boundary = pde::Boundary::Dirichlet;
    else
        throw ConfigError(path + ".boundary", "must be periodic or dirichlet");
    try {
        grid.validate();
    } catch (const std::exception& e) {
        throw ConfigError(path, e.what());
    }
    return grid;
}

pde::ScalarFn parse_potential(const json& config, std::string* descriptor) {
    if (!config.contains("potential")) {
        if (descriptor) *descriptor = "none";
        return nullptr;
    }
    const json& node = config.at("potential");
    check_keys(node, "potential", {"kind", "omega", "value"}, {"kind"});
    const std::string kind = node["kind"].get<std::string>();
    if (descriptor) *descriptor = kind;
    if (kind == "none") return nullptr;
    if (kind == "harmonic") {
        const double omega = opt_number(node, "omega", 1.0);
        if (descriptor) *descriptor = "harmonic(omega=" + fmt(omega) + ")";
        return [omega](const CVec& z) {
            cx s(0, 0);
            for (Eigen::Index k = 0; k < z.size(); ++k) s += z[k] * z[k];
            return 0.5 * omega * omega * s;
        };
    }
    if (kind == "constant") {
        const double value = need_number(node, "potential", "value");
        if (descriptor) *descriptor = "constant(" + fmt(value) + ")";
        return [value](const CVec&) { return cx(value, 0); };
    }
    throw ConfigError("potential.kind", "must be none, harmonic or constant");
}

std::function<cx(const CVec&)> parse_terminal(const json& config, std::string* descriptor) {
    const json& node = config.at("terminal");
    check_keys(node, "terminal", {"kind", "width", "center", "k"}, {"kind"});
    const std::string kind = node["kind"].get<std::string>();
    if (kind == "gaussian") {
        const double width = opt_number(node, "width", 1.0);
        const double center = opt_number(node, "center", 0.0);
        if (descriptor) *descriptor = "gaussian(width=" + fmt(width) + ",center=" + fmt(center) + ")";
        return [width, center](const CVec& z) {
            cx s(0, 0);
            for (Eigen::Index k = 0; k < z.size(); ++k) s += (z[k] - center) * (z[k] - center);
            return std::exp(-s / (2.0 * width * width));
        };
    }
    if (kind == "plane-wave") {
        std::vector<double> kvec = node.contains("k") ? node["k"].get<std::vector<double>>()
                                                      : std::vector<double>{1.0};
        if (descriptor) {
            *descriptor = "plane-wave(k=";
            for (double v : kvec) *descriptor += fmt(v) + ",";
            *descriptor += ")";
        }
        return [kvec](const CVec& z) {
            cx phase(0, 0);
            for (size_t k = 0; k < kvec.size() && k < static_cast<size_t>(z.size()); ++k)
                phase += kvec[k] * z[static_cast<Eigen::Index>(k)];
            return std::exp(I() * phase);
        };
    }
    if (kind == "constant") {
        if (descriptor) *descriptor = "constant";
        return [](const CVec&) { return cx(1, 0); };
    }
    throw ConfigError("terminal.kind", "must be gaussian, plane-wave or constant");
}

json base_metadata(const json& config, const std::string& experiment) {
    json meta;
    meta["experiment"] = experiment;
    meta["version"] = io::kVersion;
    meta["config_hash"] = io::config_hash(config);
    meta["warnings"] = json::array();
    return meta;
}

void write_metadata(const fs::path& dir, const json& meta) {
    std::ofstream os(dir / "metadata.json");
    os << meta.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

RunResult run_simulate(const json& config, const fs::path& out_dir) {
    auto params = parse_params(config);
    auto bundle = parse_metric(config);
    auto ens_cfg = parse_ensemble(config.at("ensemble"), "ensemble",
                                  bundle.present ? bundle.chart.metric.dim : params.dim);

    process::DriftFn drift = nullptr;
    if (config.contains("drift_re") || config.contains("drift_im")) {
        CVec w0 = CVec::Zero(params.dim);
        if (config.contains("drift_re")) {
            auto re = config["drift_re"].get<std::vector<double>>();
            for (int k = 0; k < params.dim && k < static_cast<int>(re.size()); ++k)
                w0[k] = cx(re[k], w0[k].imag());
        }
        if (config.contains("drift_im")) {
            auto im = config["drift_im"].get<std::vector<double>>();
            for (int k = 0; k < params.dim && k < static_cast<int>(im.size()); ++k)
                w0[k] = cx(w0[k].real(), im[k]);
        }
        drift = [w0](const CVec&) { return w0; };
    }

    process::SimChart chart =
        bundle.present
            ? process::SimChart::from(&bundle.chart.metric,
                                      bundle.chart.observer ? &*bundle.chart.observer : nullptr)
            : process::SimChart::flat(params.dim);

    process::PathEnsemble ensemble = process::simulate_ensemble(drift, params, ens_cfg, chart);
    const int n_buckets = static_cast<int>(opt_number(config, "n_buckets", 1));
    auto rates = process::estimate_structure_relation(ensemble, n_buckets);

    RunResult result;
    io::write_ensemble(out_dir.string(), "ensemble", ensemble,
                       static_cast<int>(opt_number(config, "max_paths_saved", 64)));
    result.artifacts.push_back((out_dir / "ensemble_paths.csv").string());
    result.artifacts.push_back((out_dir / "ensemble_meta.json").string());

    std::ofstream csv(out_dir / "structure_relation.csv");
    csv << "bucket,i,j,rate_re,rate_im,predicted_re,predicted_im\n";
    const cx al = params.alpha_lambda();
    for (int b = 0; b < n_buckets; ++b)
        for (int i = 0; i < params.dim; ++i)
            for (int j = 0; j < params.dim; ++j) {
                cx predicted = ensemble.flat_chart ? (i == j ? al : cx(0, 0)) : cx(0, 0);
                csv << b << "," << i << "," << j << "," << fmt(rates[b](i, j).real()) << ","
                    << fmt(rates[b](i, j).imag()) << "," << fmt(predicted.real()) << ","
                    << fmt(predicted.imag()) << "\n";
            }
    result.artifacts.push_back((out_dir / "structure_relation.csv").string());

    json meta = base_metadata(config, "simulate");
    meta["master_seed"] = ens_cfg.master_seed;
    meta["attrition"] = ensemble.attrition();
    meta["n_rejected"] = ensemble.n_rejected;
    if (ensemble.degraded) meta["warnings"].push_back("EnsembleDegraded");
    write_metadata(out_dir, meta);
    RunResult out;
    out.metadata = meta;
    out.artifacts = result.artifacts;
    return out;
}

// ---------------------------------------------------------------------------
// evolve
// ---------------------------------------------------------------------------

RunResult run_evolve(const json& config, const fs::path& out_dir) {
    auto params = parse_params(config);
    auto bundle = parse_metric(config);
    auto grid = parse_grid(config.at("grid"), "grid");
    std::string terminal_desc, potential_desc;
    auto terminal_fn = parse_terminal(config, &terminal_desc);
    auto potential_fn = parse_potential(config, &potential_desc);
    const double span = need_number(config, "config", "span");
    const std::string equation = opt_string(config, "equation", "nonrel");

    pde::EvolveOptions options;
    options.snapshot_stride = static_cast<int>(opt_number(config, "snapshot_stride", 0));
    const std::string coupling = opt_string(config, "coupling", "r6");
    if (coupling == "r6")
        options.coupling = pde::CurvatureCoupling::RicciSixth;
    else if (coupling == "conformal")
        options.coupling = pde::CurvatureCoupling::Conformal;
    else if (coupling == "off")
        options.coupling = pde::CurvatureCoupling::Off;
    else
        throw ConfigError("coupling", "must be r6, conformal or off");

    pde::ComplexField terminal = pde::sample_field(grid, terminal_fn, span);
    const geometry::ChartedMetric* metric = bundle.present ? &bundle.chart.metric : nullptr;

    pde::EvolveResult evolved;
    if (equation == "nonrel")
        evolved = pde::evolve_backward_nonrel(terminal, params, metric, nullptr, potential_fn, span,
                                              options);
    else if (equation == "rel")
        evolved = pde::evolve_backward_rel(terminal, params, metric, nullptr, span, options);
    else
        throw ConfigError("equation", "must be nonrel or rel");

    RunResult result;
    io::write_field((out_dir / "field_final").string(), evolved.final);
    result.artifacts.push_back((out_dir / "field_final.bin").string());
    result.artifacts.push_back((out_dir / "field_final.json").string());
    if (grid.dims() == 1) {
        std::ofstream slice(out_dir / "field_final.csv");
        io::write_field_slice_csv(slice, evolved.final);
        result.artifacts.push_back((out_dir / "field_final.csv").string());
    }
    {
        std::ofstream norms(out_dir / "norms.csv");
        norms << "step,l2_norm\n";
        for (size_t k = 0; k < evolved.norms.size(); ++k)
            norms << k << "," << fmt(evolved.norms[k]) << "\n";
        result.artifacts.push_back((out_dir / "norms.csv").string());
    }

    json meta = base_metadata(config, "evolve");
    meta["terminal"] = terminal_desc;
    meta["potential"] = potential_desc;
    meta["stability_bound"] = evolved.stability_bound;
    meta["max_norm_drift_per_step"] = evolved.max_norm_drift_per_step;
    meta["n_steps"] = evolved.n_steps;
    write_metadata(out_dir, meta);
    result.metadata = meta;
    return result;
}

// ---------------------------------------------------------------------------
// fk-compare
// ---------------------------------------------------------------------------

RunResult run_fk_compare(const json& config, const fs::path& out_dir) {
    auto params = parse_params(config);
    if (params.dim != 1) throw ConfigError("process.dim", "fk-compare is 1D");
    auto grid = parse_grid(config.at("grid"), "grid");
    std::string terminal_desc, potential_desc;
    auto terminal_fn = parse_terminal(config, &terminal_desc);
    auto potential_fn = parse_potential(config, &potential_desc);
    const double horizon = need_number(config, "config", "horizon");
    const json& fk_node = config.at("fk");
    check_keys(fk_node, "fk", {"n_paths", "dt", "master_seed", "mode", "max_horizon"},
               {"n_paths", "dt", "master_seed", "mode"});
    const std::string mode = fk_node["mode"].get<std::string>();
    auto probes_raw = config.at("probes").get<std::vector<double>>();

    fk::FKProblem problem;
    problem.terminal = terminal_fn;
    problem.potential = potential_fn;
    problem.horizon = horizon;
    problem.label = terminal_desc + "|" + potential_desc + "|T=" + fmt(horizon);
    for (double x : probes_raw) {
        CVec z(1);
        z[0] = cx(x, 0);
        problem.probes.push_back(z);
    }

    process::EnsembleConfig fk_cfg;
    fk_cfg.n_paths = static_cast<int>(need_number(fk_node, "fk", "n_paths"));
    fk_cfg.dt = need_number(fk_node, "fk", "dt");
    fk_cfg.horizon = horizon;
    fk_cfg.master_seed = fk_node["master_seed"].get<uint64_t>();
    fk_cfg.z0 = CVec::Zero(1);

    std::vector<fk::FKEstimate> estimates;
    if (mode == "classical")
        estimates = fk::fk_estimate(problem, params, fk_cfg);
    else if (mode == "complex")
        estimates = fk::complex_fk_estimate(problem, params, fk_cfg,
                                            opt_number(fk_node, "max_horizon", 0.5));
    else
        throw ConfigError("fk.mode", "must be classical or complex");

    pde::ComplexField terminal = pde::sample_field(grid, terminal_fn, horizon);
    pde::EvolveResult evolved =
        pde::evolve_backward_nonrel(terminal, params, nullptr, nullptr, potential_fn, horizon, {});

    std::vector<cx> pde_values;
    for (double x : probes_raw) {
        const double h = grid.h(0);
        const double f_idx = (x - grid.lo[0]) / h;
        const auto idx = static_cast<Eigen::Index>(std::llround(f_idx));
        if (std::abs(f_idx - static_cast<double>(idx)) > 1e-9 || idx < 0 ||
            idx >= evolved.final.values.size())
            throw ConfigError("probes", "probe " + fmt(x) + " is not a grid node");
        pde_values.push_back(evolved.final.values[idx]);
    }

    fk::PdeComparison cmp = fk::compare_to_pde(estimates, pde_values, problem.label, problem.label);

    RunResult result;
    std::ofstream csv(out_dir / "fk_compare.csv");
    csv << "x,psi_pde_re,psi_pde_im,psi_mc_re,psi_mc_im,se,z\n";
    for (size_t i = 0; i < probes_raw.size(); ++i) {
        csv << fmt(probes_raw[i]) << "," << fmt(pde_values[i].real()) << ","
            << fmt(pde_values[i].imag()) << "," << fmt(estimates[i].value.real()) << ","
            << fmt(estimates[i].value.imag()) << "," << fmt(estimates[i].std_error) << ","
            << fmt(cmp.z_scores[i]) << "\n";
    }
    result.artifacts.push_back((out_dir / "fk_compare.csv").string());

    json report = json::array();
    for (size_t i = 0; i < probes_raw.size(); ++i) {
        const char* status = estimates[i].status == fk::EstimateStatus::VarianceBlowup
                                 ? "variance_blowup"
                                 : (estimates[i].status == fk::EstimateStatus::Underpowered
                                        ? "underpowered"
                                        : "ok");
        report.push_back({{"x", probes_raw[i]},
                          {"value_re", estimates[i].value.real()},
                          {"value_im", estimates[i].value.imag()},
                          {"se", estimates[i].std_error},
                          {"z", cmp.z_scores[i]},
                          {"attrition", estimates[i].attrition},
                          {"status", status}});
    }
    {
        std::ofstream report_file(out_dir / "fk_report.json");
        report_file << report.dump(2) << "\n";
        result.artifacts.push_back((out_dir / "fk_report.json").string());
    }

    json meta = base_metadata(config, "fk-compare");
    meta["master_seed"] = fk_cfg.master_seed;
    meta["mode"] = mode;
    meta["coverage"] = cmp.coverage;
    meta["max_abs_z"] = cmp.max_abs_z;
    meta["n_flagged"] = cmp.n_flagged;
    meta["label"] = problem.label;
    double attrition = 0.0;
    for (const auto& est : estimates) attrition = std::max(attrition, est.attrition);
    meta["attrition"] = attrition;
    if (cmp.n_flagged > 0) meta["warnings"].push_back("VarianceBlowup on some probes");
    if (cmp.underpowered) meta["warnings"].push_back("underpowered probes present");
    write_metadata(out_dir, meta);
    result.metadata = meta;
    return result;
}

// ---------------------------------------------------------------------------
// identity-check
// ---------------------------------------------------------------------------

CVec random_probe(const std::string& metric_name, Rng& rng) {
    auto uniform = [&rng](double lo, double hi) { return lo + (hi - lo) * rng.next_uniform(); };
    if (metric_name == "sphere2") {
        CVec z(2);
        z[0] = cx(uniform(0.45, kPi - 0.45), 0);
        z[1] = cx(uniform(0.0, 2.0 * kPi), 0);
        return z;
    }
    if (metric_name == "schwarzschild") {
        CVec z(4);
        z[0] = cx(uniform(-1.0, 1.0), 0);
        z[1] = cx(uniform(3.0, 8.0), 0);  // exterior, away from the horizon
        z[2] = cx(uniform(0.6, kPi - 0.6), 0);
        z[3] = cx(uniform(0.0, 2.0 * kPi), 0);
        return z;
    }
    // flat / perturbed-flat: box around the origin
    CVec z(2);
    z[0] = cx(uniform(-1.2, 1.2), 0);
    z[1] = cx(uniform(-1.2, 1.2), 0);
    return z;
}

// Closed-form drift with analytic Jacobian for the identity suite.
hj::VelocityFieldSet random_drift_field(const geometry::ChartedMetric& metric,
                                        const process::ProcessParams& params, Rng& rng) {
    const int n = metric.dim;
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
        geometry::MetricEval ev = geometry::eval_metric(metric, z);
        CVec w = w_hat(z);
        for (int m = 0; m < n; ++m) w[m] -= 0.5 * al * ev.gamma_trace[m];
        return w;
    };
    vfs.w2 = [&metric, al](const CVec& z) {
        return CMat(al * geometry::eval_metric_core(metric, z).g_inv);
    };
    return vfs;
}

// w_hat = 0: the Ito drift is pure Christoffel trace.
hj::VelocityFieldSet zero_hat_field(const geometry::ChartedMetric& metric,
                                    const process::ProcessParams& params) {
    const int n = metric.dim;
    const cx al = params.alpha_lambda();
    hj::VelocityFieldSet vfs;
    vfs.w_hat = [n](const CVec&) { return CVec(CVec::Zero(n)); };
    vfs.jac_w_hat = [n](const CVec&) { return CMat(CMat::Zero(n, n)); };
    vfs.w = [&metric, al, n](const CVec& z) {
        geometry::MetricEval ev = geometry::eval_metric(metric, z);
        CVec w(n);
        for (int m = 0; m < n; ++m) w[m] = -0.5 * al * ev.gamma_trace[m];
        return w;
    };
    vfs.w2 = [&metric, al](const CVec& z) {
        return CMat(al * geometry::eval_metric_core(metric, z).g_inv);
    };
    return vfs;
}

RunResult run_identity_check(const json& config, const fs::path& out_dir) {
    check_keys(config, "config",
               {"experiment", "output_dir", "process", "metrics", "alphas", "n_probes", "probe_seed",
                "drift"},
               {"experiment", "output_dir", "process", "metrics", "alphas", "n_probes", "probe_seed"});
    auto metrics = config.at("metrics").get<std::vector<std::string>>();
    const int n_probes = static_cast<int>(need_number(config, "config", "n_probes"));
    const auto probe_seed = config.at("probe_seed").get<uint64_t>();
    const std::string drift_kind = opt_string(config, "drift", "zero-hat");

    const json& base_process = config.at("process");

    std::ofstream csv(out_dir / "identity_check.csv");
    csv << "metric,alpha_rho,alpha_phi,probe,dtau_raw_re,dtau_raw_im,dtau_cov_re,dtau_cov_im,"
           "dtau2_raw_re,dtau2_raw_im,dtau2_cov_re,dtau2_cov_im,abs_diff\n";

    double max_diff = 0.0;
    for (const std::string& metric_name : metrics) {
        geometry::BuiltinChart chart = geometry::make_builtin_chart(metric_name);
        for (const json& alpha_node : config.at("alphas")) {
            process::ProcessParams params;
            params.rho = alpha_node.at("rho").get<double>();
            params.phi = alpha_node.at("phi").get<double>();
            params.m = opt_number(base_process, "mass", 1.0);
            params.lambda = base_process.contains("lambda") ? base_process["lambda"].get<double>()
                                                            : 1.0;
            params.dim = chart.metric.dim;
            params.mode = process::Mode::NonRelativistic;

            Rng rng(split_seed(probe_seed, std::hash<std::string>{}(metric_name) & 0xffff));
            hj::VelocityFieldSet vfs = drift_kind == "random-field"
                                           ? random_drift_field(chart.metric, params, rng)
                                           : zero_hat_field(chart.metric, params);

            for (int p = 0; p < n_probes; ++p) {
                const CVec z = random_probe(metric_name, rng);
                geometry::MetricEval ev = geometry::eval_metric(chart.metric, z);
                auto covariant = expansion::cond_exp_quadratic_covariant(vfs, ev, params);
                auto raw = expansion::cond_exp_quadratic_raw(vfs, ev, params);
                const double diff = std::max(std::abs(raw.pair.first - covariant.first),
                                             std::abs(raw.pair.second - covariant.second));
                max_diff = std::max(max_diff, diff);
                csv << metric_name << "," << fmt(params.rho) << "," << fmt(params.phi) << "," << p
                    << "," << fmt(raw.pair.first.real()) << "," << fmt(raw.pair.first.imag()) << ","
                    << fmt(covariant.first.real()) << "," << fmt(covariant.first.imag()) << ","
                    << fmt(raw.pair.second.real()) << "," << fmt(raw.pair.second.imag()) << ","
                    << fmt(covariant.second.real()) << "," << fmt(covariant.second.imag()) << ","
                    << fmt(diff) << "\n";
            }
        }
    }

    RunResult result;
    result.artifacts.push_back((out_dir / "identity_check.csv").string());
    json meta = base_metadata(config, "identity-check");
    meta["max_abs_diff"] = max_diff;
    meta["drift"] = drift_kind;
    write_metadata(out_dir, meta);
    result.metadata = meta;
    return result;
}

// ---------------------------------------------------------------------------
// classical-limit
// ---------------------------------------------------------------------------

RunResult run_classical_limit(const json& config, const fs::path& out_dir) {
    auto params = parse_params(config);
    auto bundle = parse_metric(config);
    if (!bundle.present) throw ConfigError("metric", "classical-limit needs a metric");
    auto z0 = config.at("z0").get<std::vector<double>>();
    auto zdot0 = config.at("zdot0").get<std::vector<double>>();
    const double dtau = need_number(config, "config", "dtau");
    const int n_steps = static_cast<int>(need_number(config, "config", "n_steps"));
    const int stride = static_cast<int>(opt_number(config, "store_stride", 1));

    const int n = bundle.chart.metric.dim;
    if (static_cast<int>(z0.size()) != n || static_cast<int>(zdot0.size()) != n)
        throw ConfigError("z0", "length must match metric dimension");
    RVec z(n), v(n);
    for (int k = 0; k < n; ++k) {
        z[k] = z0[k];
        v[k] = zdot0[k];
    }

    hj::ClassicalTrajectory traj =
        hj::integrate_classical_limit(params, bundle.chart.metric, nullptr, z, v, dtau, n_steps);

    RunResult result;
    std::ofstream csv(out_dir / "trajectory.csv");
    csv << "tau";
    for (int k = 0; k < n; ++k) csv << ",z" << k;
    for (int k = 0; k < n; ++k) csv << ",zdot" << k;
    csv << "\n";
    for (size_t i = 0; i < traj.times.size(); i += stride) {
        csv << fmt(traj.times[i]);
        for (int k = 0; k < n; ++k) csv << "," << fmt(traj.position[i][k]);
        for (int k = 0; k < n; ++k) csv << "," << fmt(traj.velocity[i][k]);
        csv << "\n";
    }
    result.artifacts.push_back((out_dir / "trajectory.csv").string());

    json meta = base_metadata(config, "classical-limit");
    meta["max_constraint_drift"] = traj.max_constraint_drift;
    meta["n_steps"] = n_steps;
    write_metadata(out_dir, meta);
    result.metadata = meta;
    return result;
}

// ---------------------------------------------------------------------------
// phi-sweep
// ---------------------------------------------------------------------------

RunResult run_phi_sweep(const json& config, const fs::path& out_dir) {
    auto params = parse_params(config);
    auto ens_cfg = parse_ensemble(config.at("ensemble"), "ensemble", params.dim);
    auto phis = config.at("phis").get<std::vector<double>>();

    std::ofstream csv(out_dir / "phi_sweep.csv");
    csv << "phi,xx_measured,xx_predicted,yy_measured,yy_predicted,xy_measured,xy_predicted,"
           "max_abs_z\n";

    double worst_z = 0.0;
    for (double phi : phis) {
        process::ProcessParams p = params;
        p.phi = phi;
        process::PathEnsemble ens = process::simulate_ensemble(nullptr, p, ens_cfg);
        process::RealImagCovariances cov = process::split_real_imag_covariances(ens);
        process::PredictedRates pred = process::predicted_flat_rates(p);

        double xx = 0.0, yy = 0.0, xy = 0.0;
        for (int k = 0; k < p.dim; ++k) {
            xx += cov.xx(k, k);
            yy += cov.yy(k, k);
            xy += cov.xy(k, k);
        }
        xx /= p.dim;
        yy /= p.dim;
        xy /= p.dim;

        // QV increments are chi-square-like; SE approximated by sqrt(2) rate /
        // sqrt(#increments), a conservative scale for the z report.
        const double n_incr =
            static_cast<double>(ens.n_accepted()) * ens_cfg.n_steps() * p.dim;
        const double scale = p.rho * p.lambda / std::max(1.0, std::sqrt(n_incr));
        const double z = std::max({std::abs(xx - pred.xx), std::abs(yy - pred.yy),
                                   std::abs(xy - pred.xy)}) /
                         (1.5 * scale);
        worst_z = std::max(worst_z, z);
        csv << fmt(phi) << "," << fmt(xx) << "," << fmt(pred.xx) << "," << fmt(yy) << ","
            << fmt(pred.yy) << "," << fmt(xy) << "," << fmt(pred.xy) << "," << fmt(z) << "\n";
    }

    RunResult result;
    result.artifacts.push_back((out_dir / "phi_sweep.csv").string());
    json meta = base_metadata(config, "phi-sweep");
    meta["master_seed"] = ens_cfg.master_seed;
    meta["max_abs_z"] = worst_z;
    write_metadata(out_dir, meta);
    result.metadata = meta;
    return result;
}

}  // namespace

json load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config", "cannot open " + path);
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError("config", std::string("JSON parse error: ") + e.what());
    }
}

void validate_config(const json& config) {
    require_object(config, "config");
    if (!config.contains("experiment") || !config["experiment"].is_string())
        throw ConfigError("experiment", "missing experiment kind");
    const std::string kind = config["experiment"].get<std::string>();
    if (!kExperiments.count(kind)) throw ConfigError("experiment", "unknown kind " + kind);
    if (!config.contains("output_dir") || !config["output_dir"].is_string())
        throw ConfigError("output_dir", "missing output directory");

    if (kind == "simulate") {
        check_keys(config, "config",
                   {"experiment", "output_dir", "process", "metric", "ensemble", "drift_re",
                    "drift_im", "n_buckets", "max_paths_saved"},
                   {"experiment", "output_dir", "process", "ensemble"});
        auto params = parse_params(config);
        auto bundle = parse_metric(config);
        if (bundle.present && bundle.chart.metric.dim != params.dim)
            throw ConfigError("process.dim", "must match the chart dimension");
        parse_ensemble(config.at("ensemble"), "ensemble",
                       bundle.present ? bundle.chart.metric.dim : params.dim);
    } else if (kind == "evolve") {
        check_keys(config, "config",
                   {"experiment", "output_dir", "process", "metric", "grid", "terminal",
                    "potential", "span", "equation", "snapshot_stride", "coupling"},
                   {"experiment", "output_dir", "process", "grid", "terminal", "span"});
        parse_params(config);
        parse_metric(config);
        parse_grid(config.at("grid"), "grid");
        parse_terminal(config, nullptr);
        parse_potential(config, nullptr);
    } else if (kind == "fk-compare") {
        check_keys(config, "config",
                   {"experiment", "output_dir", "process", "grid", "terminal", "potential",
                    "horizon", "fk", "probes"},
                   {"experiment", "output_dir", "process", "grid", "terminal", "horizon", "fk",
                    "probes"});
        parse_params(config);
        parse_grid(config.at("grid"), "grid");
        parse_terminal(config, nullptr);
        parse_potential(config, nullptr);
    } else if (kind == "identity-check") {
        check_keys(config, "config",
                   {"experiment", "output_dir", "process", "metrics", "alphas", "n_probes",
                    "probe_seed", "drift"},
                   {"experiment", "output_dir", "process", "metrics", "alphas", "n_probes",
                    "probe_seed"});
        if (!config["alphas"].is_array() || config["alphas"].empty())
            throw ConfigError("alphas", "expected a non-empty array");
        for (const json& a : config["alphas"])
            check_keys(a, "alphas[]", {"rho", "phi"}, {"rho", "phi"});
        if (!config["metrics"].is_array() || config["metrics"].empty())
            throw ConfigError("metrics", "expected a non-empty array");
        for (const json& m : config["metrics"]) {
            try {
                geometry::make_builtin_chart(m.get<std::string>());
            } catch (const std::exception& e) {
                throw ConfigError("metrics", e.what());
            }
        }
        if (need_number(config, "config", "n_probes") < 1)
            throw ConfigError("n_probes", "must be >= 1");
    } else if (kind == "classical-limit") {
        check_keys(config, "config",
                   {"experiment", "output_dir", "process", "metric", "z0", "zdot0", "dtau",
                    "n_steps", "store_stride"},
                   {"experiment", "output_dir", "process", "metric", "z0", "zdot0", "dtau",
                    "n_steps"});
        parse_params(config);
    } else if (kind == "phi-sweep") {
        check_keys(config, "config",
                   {"experiment", "output_dir", "process", "ensemble", "phis"},
                   {"experiment", "output_dir", "process", "ensemble", "phis"});
        auto params = parse_params(config);
        parse_ensemble(config.at("ensemble"), "ensemble", params.dim);
    }
}

RunResult run_experiment(const json& config, const std::string& output_dir_override) {
    validate_config(config);
    const std::string kind = config["experiment"].get<std::string>();
    std::string out_dir = config["output_dir"].get<std::string>();
    if (!output_dir_override.empty()) out_dir = output_dir_override;
    fs::create_directories(out_dir);

    if (kind == "simulate") return run_simulate(config, out_dir);
    if (kind == "evolve") return run_evolve(config, out_dir);
    if (kind == "fk-compare") return run_fk_compare(config, out_dir);
    if (kind == "identity-check") return run_identity_check(config, out_dir);
    if (kind == "classical-limit") return run_classical_limit(config, out_dir);
    if (kind == "phi-sweep") return run_phi_sweep(config, out_dir);
    throw ConfigError("experiment", "unknown kind " + kind);
}

}  // namespace cqv::runner
