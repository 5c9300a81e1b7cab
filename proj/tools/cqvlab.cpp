#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "cqv/errors.hpp"
#include "cqv/io.hpp"
#include "cqv/runner.hpp"

namespace {

int run_kind(const std::string& kind, const std::string& config_path, const std::string& out_flag) {
    try {
        nlohmann::json config = cqv::runner::load_config(config_path);
        cqv::runner::validate_config(config);
        if (config["experiment"].get<std::string>() != kind) {
            std::cerr << "config declares experiment '" << config["experiment"].get<std::string>()
                      << "', expected '" << kind << "'\n";
            return 2;
        }
        std::string out_dir = out_flag;
        if (out_dir.empty())
            if (const char* env = std::getenv("CQV_OUT_DIR")) out_dir = env;

        cqv::runner::RunResult result = cqv::runner::run_experiment(config, out_dir);
        std::cout << result.metadata.dump(2) << "\n";
        for (const auto& artifact : result.artifacts) std::cout << "wrote " << artifact << "\n";
        const auto& warnings = result.metadata["warnings"];
        if (!warnings.empty()) std::cout << warnings.size() << " warning(s) recorded\n";
        return 0;
    } catch (const cqv::runner::ConfigError& e) {
        std::cerr << "config error at " << e.field_path() << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cqvlab: stochastic-process / PDE cross-verification laboratory"};
    app.require_subcommand(1);

    const std::vector<std::string> kinds = {"simulate",       "evolve",          "fk-compare",
                                            "identity-check", "classical-limit", "phi-sweep"};

    std::string config_path, out_dir;
    for (const auto& kind : kinds) {
        auto* sub = app.add_subcommand(kind, "run a '" + kind + "' experiment config");
        sub->add_option("config", config_path, "experiment config (JSON)")->required();
        sub->add_option("--out", out_dir, "override output directory");
        sub->callback([kind, &config_path, &out_dir]() {
            std::exit(run_kind(kind, config_path, out_dir));
        });
    }

    auto* validate = app.add_subcommand("validate-config", "validate a config without running it");
    validate->add_option("config", config_path, "experiment config (JSON)")->required();
    validate->callback([&config_path]() {
        try {
            nlohmann::json config = cqv::runner::load_config(config_path);
            cqv::runner::validate_config(config);
            std::cout << "ok: " << config["experiment"].get<std::string>()
                      << " config_hash=" << cqv::io::config_hash(config) << "\n";
            std::exit(0);
        } catch (const cqv::runner::ConfigError& e) {
            std::cerr << "config error at " << e.field_path() << ": " << e.what() << "\n";
            std::exit(2);
        }
    });

    CLI11_PARSE(app, argc, argv);
    return 0;
}
