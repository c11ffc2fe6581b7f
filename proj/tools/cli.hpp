#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ssnas::cli {

// Parses argv (without the program name) and runs the subcommand. Results
// go to `out`; failures print one "error: ..." line to `err`. Returns the
// process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ssnas::cli
