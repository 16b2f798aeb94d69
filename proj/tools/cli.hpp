#pragma once

#include <ostream>

namespace srloc::cli {

enum ExitCode : int {
  kOk = 0,
  kInputError = 1,
  kNotConverged = 2,
  kDegenerateGeometry = 3,
  kCampaignFailed = 4,
};

/// Entry point behind the `srloc` executable. Data goes to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace srloc::cli
