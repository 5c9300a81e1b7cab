#include "cqv/io.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "cqv/errors.hpp"

namespace cqv::io {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void write_path_csv(std::ostream& os, const stochastic::DiscretePath& path,
                    const process::ProcessParams& params, uint64_t seed) {
    const int n = path.dim();
    os << "# n=" << n << " dt=" << fmt_double(path.step) << " seed=" << seed
       << " alpha_re=" << fmt_double(params.alpha().real())
       << " alpha_im=" << fmt_double(params.alpha().imag())
       << " lambda=" << fmt_double(params.lambda) << " m=" << fmt_double(params.m) << "\n";
    os << "tau";
    for (int k = 0; k < n; ++k) os << ",re_z" << k;
    for (int k = 0; k < n; ++k) os << ",im_z" << k;
    os << "\n";
    for (size_t i = 0; i < path.size(); ++i) {
        os << fmt_double(path.times[i]);
        for (int k = 0; k < n; ++k) os << "," << fmt_double(path.positions[i][k].real());
        for (int k = 0; k < n; ++k) os << "," << fmt_double(path.positions[i][k].imag());
        os << "\n";
    }
}

stochastic::DiscretePath read_path_csv(std::istream& is) {
    stochastic::DiscretePath path;
    std::string line;
    int n = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto pos = line.find("n=");
            if (pos != std::string::npos) n = std::atoi(line.c_str() + pos + 2);
            const auto dtpos = line.find("dt=");
            if (dtpos != std::string::npos) path.step = std::atof(line.c_str() + dtpos + 3);
            continue;
        }
        if (line.rfind("tau", 0) == 0) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::atof(cell.c_str()));
        if (static_cast<int>(row.size()) != 1 + 2 * n) throw DomainError("malformed path row");
        path.times.push_back(row[0]);
        CVec z(n);
        for (int k = 0; k < n; ++k) z[k] = cx(row[1 + k], row[1 + n + k]);
        path.positions.push_back(z);
    }
    return path;
}

void write_ensemble(const std::string& out_dir, const std::string& stem,
                    const process::PathEnsemble& ensemble, int max_paths) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    std::ofstream paths_file(fs::path(out_dir) / (stem + "_paths.csv"));
    int written = 0;
    for (size_t p = 0; p < ensemble.paths.size() && written < max_paths; ++p) {
        if (!ensemble.accepted[p]) continue;
        paths_file << "# path=" << p << "\n";
        write_path_csv(paths_file, ensemble.paths[p], ensemble.params, ensemble.seeds[p]);
        ++written;
    }

    nlohmann::json meta;
    meta["version"] = kVersion;
    meta["params"] = params_to_json(ensemble.params);
    meta["n_paths"] = ensemble.config.n_paths;
    meta["dt"] = ensemble.config.dt;
    meta["horizon"] = ensemble.config.horizon;
    meta["master_seed"] = ensemble.config.master_seed;
    meta["antithetic"] = ensemble.config.antithetic;
    meta["n_rejected"] = ensemble.n_rejected;
    meta["attrition"] = ensemble.attrition();
    meta["max_im_observer"] = ensemble.max_im_observer;
    nlohmann::json warnings = nlohmann::json::array();
    if (ensemble.degraded) warnings.push_back("EnsembleDegraded: more than 1% of paths rejected");
    if (ensemble.max_im_observer > 0.1)
        warnings.push_back("observer field has large imaginary part off the real slice");
    meta["warnings"] = warnings;

    std::ofstream meta_file(fs::path(out_dir) / (stem + "_meta.json"));
    meta_file << meta.dump(2) << "\n";
}

void write_field(const std::string& base_path, const pde::ComplexField& field) {
    const pde::GridSpec& grid = field.grid;
    nlohmann::json header;
    header["version"] = kVersion;
    header["dims"] = grid.dims();
    header["lo"] = grid.lo;
    header["hi"] = grid.hi;
    header["npts"] = grid.npts;
    header["boundary"] = grid.boundary == pde::Boundary::Periodic ? "periodic" : "dirichlet";
    header["dt"] = grid.dt;
    header["time"] = field.time;
    header["l2_norm"] = field.l2_norm();
    std::ofstream js(base_path + ".json");
    js << header.dump(2) << "\n";

    std::ofstream bin(base_path + ".bin", std::ios::binary);
    const int32_t d = grid.dims();
    bin.write(reinterpret_cast<const char*>(&d), sizeof(d));
    for (int a = 0; a < d; ++a) {
        const int32_t npts = grid.npts[a];
        bin.write(reinterpret_cast<const char*>(&npts), sizeof(npts));
        bin.write(reinterpret_cast<const char*>(&grid.lo[a]), sizeof(double));
        bin.write(reinterpret_cast<const char*>(&grid.hi[a]), sizeof(double));
    }
    for (Eigen::Index i = 0; i < field.values.size(); ++i) {
        const double re = field.values[i].real(), im = field.values[i].imag();
        bin.write(reinterpret_cast<const char*>(&re), sizeof(double));
        bin.write(reinterpret_cast<const char*>(&im), sizeof(double));
    }
}

pde::ComplexField read_field(const std::string& base_path) {
    std::ifstream js(base_path + ".json");
    if (!js) throw DomainError("missing field header " + base_path + ".json");
    nlohmann::json header = nlohmann::json::parse(js);

    pde::ComplexField field;
    field.grid.lo = header["lo"].get<std::vector<double>>();
    field.grid.hi = header["hi"].get<std::vector<double>>();
    field.grid.npts = header["npts"].get<std::vector<int>>();
    field.grid.boundary =
        header["boundary"] == "periodic" ? pde::Boundary::Periodic : pde::Boundary::Dirichlet;
    field.grid.dt = header["dt"].get<double>();
    field.time = header["time"].get<double>();

    std::ifstream bin(base_path + ".bin", std::ios::binary);
    if (!bin) throw DomainError("missing field payload " + base_path + ".bin");
    int32_t d = 0;
    bin.read(reinterpret_cast<char*>(&d), sizeof(d));
    if (d != field.grid.dims()) throw DomainError("field header/payload dimension mismatch");
    for (int a = 0; a < d; ++a) {
        int32_t npts = 0;
        double lo = 0, hi = 0;
        bin.read(reinterpret_cast<char*>(&npts), sizeof(npts));
        bin.read(reinterpret_cast<char*>(&lo), sizeof(double));
        bin.read(reinterpret_cast<char*>(&hi), sizeof(double));
        if (npts != field.grid.npts[a]) throw DomainError("field payload npts mismatch");
    }
    field.values = CVec(field.grid.total());
    for (Eigen::Index i = 0; i < field.values.size(); ++i) {
        double re = 0, im = 0;
        bin.read(reinterpret_cast<char*>(&re), sizeof(double));
        bin.read(reinterpret_cast<char*>(&im), sizeof(double));
        field.values[i] = cx(re, im);
    }
    return field;
}

void write_field_slice_csv(std::ostream& os, const pde::ComplexField& field) {
    if (field.grid.dims() != 1) throw DomainError("CSV slice export is 1D only");
    os << "x,psi_re,psi_im\n";
    for (int i = 0; i < field.grid.npts[0]; ++i) {
        os << fmt_double(field.grid.coord(0, i)) << ","
           << fmt_double(field.values[i].real()) << "," << fmt_double(field.values[i].imag()) << "\n";
    }
}

uint64_t config_hash(const nlohmann::json& config) {
    const std::string canonical = config.dump();
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : canonical) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {

nlohmann::json point_to_json(const CVec& z) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index k = 0; k < z.size(); ++k)
        arr.push_back({{"re", z[k].real()}, {"im", z[k].imag()}});
    return arr;
}

}  // namespace

nlohmann::json residual_report(const std::vector<CVec>& probes, const std::vector<CVec>& residuals,
                               double tolerance) {
    nlohmann::json report = nlohmann::json::array();
    for (size_t i = 0; i < probes.size(); ++i) {
        double worst = 0.0;
        for (Eigen::Index k = 0; k < residuals[i].size(); ++k)
            worst = std::max(worst, std::abs(residuals[i][k]));
        report.push_back({{"probe", point_to_json(probes[i])},
                          {"residual", point_to_json(residuals[i])},
                          {"max_abs", worst},
                          {"tolerance", tolerance},
                          {"pass", worst <= tolerance}});
    }
    return report;
}

nlohmann::json residual_report(const std::vector<CVec>& probes, const std::vector<cx>& residuals,
                               double tolerance) {
    std::vector<CVec> wrapped;
    wrapped.reserve(residuals.size());
    for (const cx& r : residuals) wrapped.push_back(CVec::Constant(1, r));
    return residual_report(probes, wrapped, tolerance);
}

nlohmann::json params_to_json(const process::ProcessParams& params) {
    nlohmann::json j;
    j["rho"] = params.rho;
    j["phi"] = params.phi;
    j["beta"] = params.beta;
    j["lambda"] = params.lambda;
    j["mass"] = params.m;
    j["charge"] = params.q;
    j["dim"] = params.dim;
    j["mode"] = params.mode == process::Mode::Relativistic ? "relativistic" : "nonrelativistic";
    return j;
}

}  // namespace cqv::io
