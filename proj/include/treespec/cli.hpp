#pragma once

namespace treespec {

// Entry point shared by the binary and the tests. Returns the process exit
// code: 0 success, 2 validation failure, 3 algorithmic failure, 4 I/O.
int run_cli(int argc, const char* const* argv);

}  // namespace treespec
