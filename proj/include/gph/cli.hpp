#pragma once

#include <ostream>

namespace gph::cli {

/// Entry point of the gph command. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gph::cli
