#pragma once

namespace esure {

inline constexpr int kExitPass = 0;
inline constexpr int kExitVerificationFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `esure` command line tool.
int run_cli(int argc, char** argv);

}  // namespace esure
