#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace attelig::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kConfigError = 2,
  kDataError = 3,
  kEstimationError = 4,
  kIdentityViolation = 5,
};

/// Writes one JSON report per estimator plus estimates.txt into the output directory.
int cmd_estimate(const std::filesystem::path& config, std::ostream& out, std::ostream& err);

/// Writes simulation.json and simulation.txt into the output directory.
int cmd_simulate(const std::filesystem::path& config, std::ostream& out, std::ostream& err);

/// Verifies every fixture under `fixtures`; files in negative/ must fail at
/// least one identity. Optionally writes the per-identity results as JSON.
int cmd_oracle_check(const std::filesystem::path& fixtures, const std::optional<std::filesystem::path>& jsonOut,
                     std::ostream& out, std::ostream& err);

std::filesystem::path default_fixtures_dir();

/// Full command line, argv[0] included.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace attelig::cli
