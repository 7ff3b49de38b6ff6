#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace crt {

// Exit codes: 0 success, 2 invalid input or usage, 3 numerical failure,
// 1 anything else.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace crt
