#pragma once

#include <iosfwd>

namespace rrid::cli {

// Exit codes: 0 success, 1 usage error, 2 data / format / check failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rrid::cli
