#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fusemap {

/// Entry point of the fusemap tool. args[0] is the program name. Returns the
/// process exit code: 0 success, 1 error, 2 memory-invalid result (eval).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fusemap
