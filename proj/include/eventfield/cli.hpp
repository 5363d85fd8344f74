#pragma once

#include <string>
#include <vector>

namespace evf::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Runs one subcommand. Returns 0 on success, 2 on configuration or
/// validation errors and 1 on any other failure; diagnostics go to stderr.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

}  // namespace evf::cli
