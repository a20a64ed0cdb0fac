// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>

namespace sspam::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 1,
  kAllDiverged = 2,
  kInternalError = 3,
};

/// Entry point of the `sspam` tool; returns the process exit code.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sspam::cli
