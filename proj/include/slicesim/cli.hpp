#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace slicesim::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kRuntimeError = 2, kScenarioFailed = 3 };

/// Accepts comma lists and inclusive ranges: "1,2,5-8".
std::vector<std::uint64_t> parse_seeds(const std::string& text);

/// Entry point shared by the slicesim binary and the tests. Progress and results go to
/// `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace slicesim::cli
