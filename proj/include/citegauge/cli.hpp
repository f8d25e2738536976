// SPDX-License-Identifier: Apache-2.0
//
// The citegauge command line: format, eval, grpo, xai and report
// subcommands. `run` is the whole program minus process setup, so tests can
// drive it in-process.

#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "citegauge/error.hpp"

namespace citegauge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;

/// 2 for errors caused by the invocation or its input files, 1 otherwise.
int exit_code_for(Errc code) noexcept;

/// `args` excludes the program name. Errors go to `err` as one JSON object
/// {"error", "message", "details"} per line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Asks a running grpo command to stop after its current step. Safe to call
/// from a signal handler.
void request_stop() noexcept;
void clear_stop() noexcept;

}  // namespace citegauge::cli
