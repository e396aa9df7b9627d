#pragma once

// Command-line front end. Subcommands: growth-rate, annealed, stability,
// oracle, rs, moments.

#include <ostream>
#include <string>
#include <vector>

namespace annealed {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitBudget = 4;

/// Runs one command; `args` excludes the program name. Returns the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace annealed
