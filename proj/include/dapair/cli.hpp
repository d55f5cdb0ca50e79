#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dapair {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitAbort = 2;

/// Parses arguments (argv[0] is the program name), runs the subcommand and
/// returns the exit code: 0 success, 1 invalid arguments or configuration,
/// 2 runtime failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

/// Long flags the front end accepts, including their leading dashes.
std::vector<std::string> cli_flags();

}  // namespace dapair
