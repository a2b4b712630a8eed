#pragma once

#include <ostream>

namespace imdpm::cli {

enum ExitCode : int {
    exit_ok = 0,
    exit_error = 1,
    exit_no_technical_scenario = 2,
    exit_uncorrelatable = 3,
};

// Entry point shared by the imdpm executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace imdpm::cli
