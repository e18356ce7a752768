#pragma once

#include <ostream>

namespace biasforge {

// Parses arguments, dispatches the subcommand and returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace biasforge
