#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace chm::cli {

/// Process exit codes.
enum ExitCode : int {
    exit_ok = 0,
    exit_usage = 2,
    exit_input = 3,
    exit_numerical = 4,
};

/// Runs one `chm` invocation. `args` excludes the program name. Reports go to
/// `out`; usage text and structured error records go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// FNV-1a 64-bit digest of a file, as "fnv1a64:<16 hex digits>".
std::string file_digest(const std::string& path);

}  // namespace chm::cli
