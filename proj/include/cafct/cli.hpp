#pragma once

#include <string>
#include <vector>

namespace cafct::cli {

// Full command-line entry point (subcommands gen-data, train, eval, infer,
// grad-check). Returns the process exit status: 0 on success, nonzero with a
// one-line reason on stderr otherwise.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace cafct::cli
