#pragma once

namespace maskdiff {

// Full command-line entry point. Returns the process exit code:
//   0 ok, 2 usage, 3 config, 4 numeric, 5 I/O.
// All failures print a single line "maskdiff: error: <category>: <message>"
// to stderr.
int run_cli(int argc, const char* const* argv);

}  // namespace maskdiff
