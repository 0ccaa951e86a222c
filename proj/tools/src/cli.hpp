#pragma once

#include <ostream>

namespace rnp::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,     // a check did not pass (gradcheck) or an unexpected error
  kExitUsage = 2,
  kExitData = 3,        // unreadable or inconsistent data, checkpoint or config file
  kExitDivergence = 4,  // non-finite loss during training
};

/// Entry point of the `resnetplus` binary. Subcommands: train, eval, ablate, predict, synth,
/// gradcheck. Normal output goes to `out`, diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rnp::cli
