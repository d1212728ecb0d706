#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace smc {

struct CliOptions {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed_override;
};

// Executes one subcommand: loads and validates the JSON config, runs the
// experiment, writes CSV/JSON outputs under out_dir. Throws ConfigError for
// schema violations; model and I/O failures propagate as other exceptions.
void run_command(const std::string& name, const CliOptions& options);

// Full command line. Returns 0 on success, 2 for config errors (including
// bad flags), 3 for runtime model errors.
int cli_main(int argc, const char* const* argv);

}  // namespace smc
