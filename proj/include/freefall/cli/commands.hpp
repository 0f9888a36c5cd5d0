#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "freefall/cli/output.hpp"
#include "freefall/cli/scenario.hpp"

namespace freefall::cli {

inline constexpr const char* out_dir_env = "FREEFALL_OUT_DIR";

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  int threads = 1;
  Format format = Format::csv;
};

/// --out-dir, then $FREEFALL_OUT_DIR, then the scenario's output_dir, then ".".
std::filesystem::path resolve_out_dir(const Scenario& scenario, const RunOptions& options);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct CommandReport {
  std::vector<std::filesystem::path> artifacts;
  std::vector<CheckResult> checks;

  bool ok() const;
};

const std::vector<std::string>& command_names();

/// Runs one subcommand; every artifact plus "run_summary.json" lands in the output directory.
/// ConfigError for scenario problems the command discovers (missing block, empty grid).
CommandReport run_command(const std::string& name, const Scenario& scenario,
                          const RunOptions& options);

/// Independent stream seed for sub-run `k`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k);

}  // namespace freefall::cli
