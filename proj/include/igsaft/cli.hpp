#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace igsaft {

/// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitEstimation = 2;

/// Expands "z1..z10" ranges and comma lists into column names.
std::vector<std::string> expand_columns(const std::vector<std::string>& tokens);

/// Runs a subcommand (fit, simulate or diagnose); `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace igsaft
