#pragma once

#include <iosfwd>

namespace dstrip::cli {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

/// Dispatches argv[1] to one of phantom, labelprep, synth, mask, sdt, train,
/// strip, eval, pipeline, config. Returns 0 on success, 2 for usage errors and
/// 1 when the operation fails (diagnostic on `err`).
int run_subcommand(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace dstrip::cli
