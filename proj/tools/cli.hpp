#pragma once

#include <ostream>

namespace imix::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitInput = 2,
  kExitRefusedOverwrite = 3,
};

// Entry point shared by the binary and the in-process tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace imix::cli
