#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lam {

inline constexpr const char* kToolVersion = "1.0.0";

/// Exit codes: 0 success, 1 runtime failure, 2 usage error. Runtime failures
/// print one `error[<kind>]: <message>` line to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_cli(int argc, char** argv);

}  // namespace lam
