#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "output.hpp"

namespace qpns::cli {

inline constexpr const char* kToolVersion = "qpns 0.1.0";

enum ExitCode { kExitPass = 0, kExitCheckFailed = 1, kExitConfigError = 2 };

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> truncation;
};

RunConfig apply_overrides(RunConfig cfg, const Overrides& o);

struct ExperimentResult {
  nlohmann::ordered_json report;  // experiment-specific fields
  nlohmann::ordered_json checks = nlohmann::ordered_json::object();
  bool pass() const;
};

const std::vector<std::string>& subcommands();

// Runs one pipeline, writing its data files into out. Throws ConfigError for
// configurations the pipeline cannot use.
ExperimentResult run_experiment(const std::string& subcommand, const RunConfig& cfg, OutputDir& out);

// Runs the pipeline and writes <subcommand>.json and manifest.json; returns the exit code.
int run(const std::string& subcommand, const RunConfig& cfg, const std::string& out_dir, std::ostream& log);

// Full command line: qpns <subcommand> [--config F] [--out D] [--seed-override S]
// [--threads T] [--truncation-override N].
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace qpns::cli
