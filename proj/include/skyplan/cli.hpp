#pragma once

#include <string>
#include <vector>

namespace skyplan {

constexpr const char* kVersion = "0.1.0";

/// Exit statuses of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2 };

/// Entry point of the `skyplan` tool. args[0] is the program name.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

} // namespace skyplan
