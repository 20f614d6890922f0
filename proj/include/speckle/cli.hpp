#pragma once

#include "speckle/pipeline.hpp"
#include "speckle/synth.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace speckle::cli {

/// Parse failure carrying the exit code the binary should return.
struct CliError : std::runtime_error {
  CliError(int code_, const std::string &what) : std::runtime_error(what), code(code_) {}
  int code;
};

struct CliInvocation {
  std::string subcommand; // score | align | optimize | apply | repeat | synth
  int threads = -1;       // -1 = not given; 0 = all cores
  bool help = false;
  std::string help_text;
  std::string resolved_config; // every option after config + flag resolution

  // score
  std::filesystem::path score_a, score_b;

  // align, optimize, repeat
  RunConfig run;
  std::filesystem::path align_out;     // align: parameter file
  std::filesystem::path aligned_image; // align: moved BSE speckle
  int runs = 10;
  std::filesystem::path resume;

  // apply
  std::filesystem::path apply_map, apply_warp, apply_phases, apply_out;

  // synth
  SynthSpec synth;
  std::filesystem::path synth_dir = ".";
  bool synth_ang = false;
};

/// Arguments exclude the program name. A `--config FILE` of `key = value`
/// lines is expanded in place of the flag; later flags override it.
CliInvocation parse_args(const std::vector<std::string> &args);

/// Thread count from the invocation, falling back to SPECKLE_FORGE_THREADS.
int resolve_threads(const CliInvocation &inv);

/// Executes a parsed invocation and returns the process exit code:
/// 0 success, 1 invalid input, 2 runtime failure.
int execute(const CliInvocation &inv);

int main(int argc, char **argv);

} // namespace speckle::cli
