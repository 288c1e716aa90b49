#ifndef GPESMC_TOOLS_COMMANDS_HPP
#define GPESMC_TOOLS_COMMANDS_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "config.hpp"

namespace gpesmc::cli {

enum ExitCode : int { kOk = 0, kIoError = 1, kConfigError = 2, kNumericalError = 3 };

/// Command-line overrides shared by every subcommand.
struct RunOptions {
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::optional<std::string> out;  // primary output file
  bool timing = false;             // record wall-clock times in the trace
};

/// Simulates data; writes CSV `k,y` (plus `x` when include_latent).
int cmd_simulate(const ExperimentConfig& config, const RunOptions& options, std::ostream& log);
/// Runs Monte-Carlo EM; writes the trace CSV and a JSON summary.
int cmd_infer(const ExperimentConfig& config, const RunOptions& options, std::ostream& log);
/// Prints summary statistics of density and log-density draws as JSON.
int cmd_gpe_check(const ExperimentConfig& config, const RunOptions& options, std::ostream& report);
/// One smoothing pass at a fixed parameter; writes smoothed draws as CSV `draw,k,x`.
int cmd_smooth(const ExperimentConfig& config, const RunOptions& options, std::ostream& log);

/// Maps an exception escaping a command to its exit code and prints it.
int report_failure(std::ostream& err);

}  // namespace gpesmc::cli

#endif  // GPESMC_TOOLS_COMMANDS_HPP
