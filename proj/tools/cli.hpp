#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cohconf::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Runs one invocation. argv[0] is the program name. Normal output goes to
/// `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "0.01..0.10" (step 0.01), "0.01..0.10:0.03" or a comma list.
/// Throws cohconf::Error(InvalidArgument).
std::vector<double> parse_alpha_list(const std::string& text);

}  // namespace cohconf::cli
