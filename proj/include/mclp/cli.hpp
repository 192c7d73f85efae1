#pragma once

namespace mclp {

// Entry point of the command-line tool. Returns the process exit code:
// 0 on success, 1 on invalid arguments or configuration (the message names
// the offending field), 2 on runtime failure.
int run_cli(int argc, const char* const* argv);

}  // namespace mclp
