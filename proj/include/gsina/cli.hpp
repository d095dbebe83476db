#ifndef GSINA_CLI_HPP
#define GSINA_CLI_HPP

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace gsina {

inline constexpr int kSchemaVersion = 1;

// Stable process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitIo = 3,
  kExitDivergence = 4,
  kExitCheckFailed = 5,
};

/// Flat key=value lines; '#' starts a comment, blank lines are skipped.
/// Throws Parse on a malformed line or a repeated key, Io when unreadable.
std::map<std::string, std::string> read_run_config(std::istream& in);
std::map<std::string, std::string> read_run_config(const std::filesystem::path& path);

/// Entry point shared by the `gsina` binary and the tests. `args` excludes the
/// program name. Logs go to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gsina

#endif  // GSINA_CLI_HPP
