#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rfat {

/// Exit codes of run_command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one CLI invocation. `args` excludes the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rfat
