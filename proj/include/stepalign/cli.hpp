#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stepalign::cli {

enum ExitCode : int { ok = 0, usage = 1, data = 2, numerical = 3 };

/// Runs one subcommand. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace stepalign::cli
