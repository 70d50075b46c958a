#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

namespace spherealign::cli {

// Malformed, unknown, or invalid config content. Mapped to exit code 2,
// together with the parameter validation errors of the owning modules.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct CommonArgs {
    std::filesystem::path config_path;
    std::filesystem::path out_dir = ".";
    std::optional<std::uint64_t> seed; // --seed overrides the config's seed
    bool quiet = false;
};

// Each command runs one experiment: parse + validate the config, compute all
// artifacts, then write them atomically. Returns the exit code for check
// verdicts (0 pass, 4 fail); errors escape as exceptions for main to map.
int run_particles(const CommonArgs& args);
int run_vback(const CommonArgs& args);
int run_kinetic(const CommonArgs& args);
int run_slowdecay(const CommonArgs& args);
int run_measure(const CommonArgs& args);

} // namespace spherealign::cli
