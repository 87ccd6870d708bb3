#pragma once

#include <iosfwd>

namespace panelreg {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitModel = 3;

/// Runs `panelreg <command> [flags]`. Commands: synth, ingest, split,
/// evaluate, interpret. Diagnostics go to `err`, summaries to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace panelreg
