#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace radgs {

// Process exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitUsage = 2,   // bad flags, invalid config or parameter
    kExitIo = 3,      // missing, unreadable or corrupt files
    kExitDiverged = 4 // training produced non-finite values
};

// Entry point shared by the executable and the tests. args[0] is the program
// name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace radgs
