#pragma once

#include <iosfwd>

namespace nphmm::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitValidation = 2,
  kExitFit = 3,
  kExitGuard = 4,
};

/// Parses the command line (simulate | fit | identify | gof | reproduce) and
/// runs the subcommand. Reports go to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nphmm::cli
