#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace clustermatch::cli {

/// Exit codes: 0 success, 1 the run failed, 2 the command line is invalid.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Parses and runs one command line (argv[0] is the program name). Output
/// files are written only after the whole command succeeded.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace clustermatch::cli
