// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kgdial::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kConfig = 2, kRuntime = 3 };

/// Build identifier baked in at compile time (git describe).
const char* build_id();

/// Runs one subcommand. `args` excludes the program name. `in` feeds the
/// chat loop; results go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
        std::ostream& err);

}  // namespace kgdial::cli
