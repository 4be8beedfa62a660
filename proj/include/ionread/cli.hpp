#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace ionread::cli {

/// Runs one CLI invocation (args exclude the program name). Returns the
/// process exit code; diagnostics go to err as a single line.
int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
        std::ostream& err = std::cerr);

int run(int argc, char** argv);

}  // namespace ionread::cli
