#pragma once

#include <string>
#include <vector>

namespace gridcal::cli {

/// Parses `args` (without the program name), runs one subcommand and returns
/// the process exit code. Failures print "error: <CODE>: <message>" on stderr.
int run_cli(const std::vector<std::string>& args);

} // namespace gridcal::cli
