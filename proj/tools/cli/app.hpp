#pragma once

#include <ostream>

namespace gim::cli {

/// Runs the gim command line; returns the process exit code (0 ok, 1 usage, 2 data, 3 numerical).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gim::cli
