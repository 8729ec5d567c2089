#pragma once

// Batch commands behind the sfocc executable. Each command reads one JSON
// config, writes its outputs under `out`, and finishes with manifest.json:
// the resolved config (paths made absolute, seed filled in), SHA-256 digests
// of inputs and outputs, timestamps and run times. Passing a manifest as the
// config reruns the recorded command after checking the input digests.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "sfocc/io.hpp"

namespace sfocc {

struct CommandArgs {
  std::string command;  // simulate | fit | predict | compare | simstudy
  fs::path config;
  fs::path out;
  std::optional<std::uint64_t> seed;  // overrides the config's seed
  int workers = 1;
};

/// Exit status: 0 success, 1 run failure, 2 invalid config or data.
int run_command(const CommandArgs& args, std::ostream& log);

/// Error carrying the exit status for configuration and validation problems.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int cmd_simulate(const Json& config, const fs::path& out, std::ostream& log, Json& manifest);
int cmd_fit(const Json& config, const fs::path& out, int workers, std::ostream& log, Json& manifest);
int cmd_predict(const Json& config, const fs::path& out, std::ostream& log, Json& manifest);
int cmd_compare(const Json& config, const fs::path& out, std::ostream& log, Json& manifest);
int cmd_simstudy(const Json& config, const fs::path& out, int workers, std::ostream& log,
                 Json& manifest);

}  // namespace sfocc
