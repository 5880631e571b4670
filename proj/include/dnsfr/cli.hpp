#pragma once

namespace dnsfr {

inline constexpr const char* kVersion = "0.1.0";

/// Entry point of the `dnsfr` command-line tool. Returns the process exit code;
/// failures print a JSON error object to stderr.
int run_cli(int argc, char** argv);

}  // namespace dnsfr
