// SPDX-License-Identifier: Apache-2.0
//
// skycast command line: synth, train, eval, predict, heatmap.
#pragma once

namespace skycast::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,  // bad flags or config
  kExitData = 2,  // unreadable or malformed inputs
  kExitNumeric = 3,  // non-finite loss or prediction
};

/// Parses arguments, runs one subcommand and maps errors onto exit codes.
/// Never throws.
int run(int argc, const char* const* argv);

}  // namespace skycast::cli
