#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "cqv/pde.hpp"
#include "cqv/process.hpp"

namespace cqv::io {

inline const char* kVersion = "0.1.0";

// Columnar path format: comment header carrying (n, dt, seed, alpha, lambda,
// m), then one row per grid time: tau, Re Z^0 ... Re Z^{n-1}, Im Z^0 ...
void write_path_csv(std::ostream& os, const stochastic::DiscretePath& path,
                    const process::ProcessParams& params, uint64_t seed);
stochastic::DiscretePath read_path_csv(std::istream& is);

// Paths file (first `max_paths` accepted paths) plus a JSON metadata sidecar.
void write_ensemble(const std::string& out_dir, const std::string& stem,
                    const process::PathEnsemble& ensemble, int max_paths = 64);

// Field layout: <base>.bin holds dims, extents and interleaved Re/Im doubles;
// <base>.json carries the header. CSV export is available for 1D slices.
void write_field(const std::string& base_path, const pde::ComplexField& field);
pde::ComplexField read_field(const std::string& base_path);
void write_field_slice_csv(std::ostream& os, const pde::ComplexField& field);

// FNV-1a over the canonical (sorted-key) dump; recorded in every output.
uint64_t config_hash(const nlohmann::json& config);

nlohmann::json params_to_json(const process::ProcessParams& params);

// Residual report: JSON array of (probe point, residual components, tolerance).
nlohmann::json residual_report(const std::vector<CVec>& probes, const std::vector<CVec>& residuals,
                               double tolerance);
nlohmann::json residual_report(const std::vector<CVec>& probes, const std::vector<cx>& residuals,
                               double tolerance);

}  // namespace cqv::io
