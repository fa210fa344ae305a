#pragma once

#include <string>
#include <vector>

namespace pairrank::cli {

// Runs the command line given argv-style arguments (excluding argv[0]).
// Returns the process exit code: 0 success, 1 usage/config/data error,
// 2 partial completion with a resume manifest written.
int run(const std::vector<std::string>& args);

}  // namespace pairrank::cli
