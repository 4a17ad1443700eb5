#pragma once

namespace cqcd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitTolerance = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

inline constexpr int kReportSchemaVersion = 1;

/// Entry point of the `cqcd` tool. Returns the process exit code.
int run(int argc, char** argv);

}  // namespace cqcd::cli
