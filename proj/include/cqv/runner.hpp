#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace cqv::runner {

// Schema violations carry the offending field path; the CLI maps them to
// exit code 2.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& field_path, const std::string& message)
        : std::runtime_error(field_path + ": " + message), field_path_(field_path) {}
    const std::string& field_path() const { return field_path_; }

private:
    std::string field_path_;
};

struct RunResult {
    nlohmann::json metadata;
    std::vector<std::string> artifacts;
};

nlohmann::json load_config(const std::string& path);
void validate_config(const nlohmann::json& config);

// Executes one experiment; output_dir_override (CLI flag or CQV_OUT_DIR)
// replaces the configured output directory when nonempty.
RunResult run_experiment(const nlohmann::json& config, const std::string& output_dir_override = "");

}  // namespace cqv::runner
