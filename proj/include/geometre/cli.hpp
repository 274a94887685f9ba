#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace geometre {

enum ExitCode : int { kExitOk = 0, kExitInvalid = 1, kExitNumerical = 2 };

// Runs one command line (without the program name). Machine-readable output
// that has no --out path goes to `out`; diagnostics go to `err` and the log.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace geometre
