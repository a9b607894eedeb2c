#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>

#include "hdivmm/config.hpp"

namespace hdivmm {

inline constexpr const char* kVersion = "1.0.0";

enum class Command { Forward, Estimate, Reconstruct, EstimateRhs, Converge, MonteCarlo };

std::optional<Command> parse_command(std::string_view name);
const char* to_string(Command command);

/// Command-line values that take precedence over the config file.
struct RunOverrides {
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
};

/// Runs one command and writes its CSV files into cfg.output_dir.
/// Library errors propagate.
void run_command(Command command, const RunConfig& cfg);

/// Observation data for estimate / reconstruct: synthetic (forward solve of
/// the truth plus optional white noise) or read from the data file.
ObservationData load_observations(const EstimationProblem& problem, const RunConfig& cfg, const MeshLevel& level);

/// Exit status for an exception: 2 config/schema, 3 numerical, 4 I/O, 1 other.
int exit_code_for(const std::exception& e);

/// Loads the config, applies overrides and runs.  Failures are reported as a
/// single line on stderr and mapped to the exit status.
int run(Command command, const std::filesystem::path& config_path, const RunOverrides& overrides = {});

} // namespace hdivmm
