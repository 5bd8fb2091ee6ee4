#pragma once

#include <iosfwd>

namespace drumloop::cli {

// Exit codes: 0 success, 1 usage or input error, 2 domain rejection.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitDomain = 2;

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace drumloop::cli
