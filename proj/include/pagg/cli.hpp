#ifndef PAGG_CLI_HPP
#define PAGG_CLI_HPP

#include <ostream>
#include <string>
#include <vector>

#include "pagg/config.hpp"

namespace pagg {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitNumeric = 4,
};

// Runs the command line `args` (without the program name). Output goes to
// `out`, diagnostics to `err`; the return value is one of ExitCode.
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err, const EnvLookup& env);

}  // namespace pagg

#endif  // PAGG_CLI_HPP
