#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace deflact {

/// Parses `a:b:n` (n equally spaced values from a to b) or a comma-separated
/// list. Throws ConfigError on malformed input.
std::vector<double> parse_value_list(const std::string& text);

/// Entry point of the `deflact` tool. Returns 0 on success, 1 on runtime or
/// solver failure, 2 on usage errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace deflact
