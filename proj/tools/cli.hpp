#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace kamrev2::cli {

enum ExitCode : int {
  kSuccess = 0,
  kValidationFailure = 2,
  kSolverFailure = 3,
  kPreconditionFailure = 4,
};

struct RunConfig {
  std::string command;     // validate | classify | dioph | measure | solve | sweep
  std::string subcommand;  // check | measure, for dioph
  std::string model_path;
  std::string output_dir = ".";
  std::uint64_t seed = 0;
  int threads = 0;  // 0: logical cores
  // Keys: tau gamma L kmax grid eps2 cl Q radius center fourier newton_tol max_iters gate
  // max_unknowns omega0 mu0 chi0 horizon starts keep_transforms. Lists are comma separated.
  std::map<std::string, std::string> overrides;
};

// Keys accepted in RunConfig::overrides.
const std::vector<std::string>& override_keys();

// Executes the pipeline, writes outputs and run_manifest.json; returns an ExitCode.
int run(const RunConfig& config);

// Parses argv into a RunConfig; returns false and sets `exit_code` when the process should stop
// (help output or a usage error).
bool parse_args(int argc, char** argv, RunConfig& config, int& exit_code);

std::string sha256_hex(const std::string& bytes);

}  // namespace kamrev2::cli
