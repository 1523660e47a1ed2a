#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rodif::cli {

using nlohmann::json;

enum ExitCode : int {
  kOk = 0,
  kRuntime = 1,
  kUsage = 2,
  kPretrainFailed = 3,
  kHarvestCap = 4,
  kCounterexample = 5,
  kNumericalAbort = 6,
};

/// Bad flags, unreadable or unknown config keys, missing input files.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string command;
  std::string config_path;
  std::filesystem::path out = "runs/latest";
  std::optional<std::uint64_t> seed;
  /// "dotted.key=value"; value parsed as JSON, else taken as a string.
  std::vector<std::string> overrides;
};

/// Every key the tool understands, with its default.
json default_config();

/// Defaults, then the config file, then overrides, then --seed.
json resolve_config(const RunConfig& run);

/// Runs one subcommand and maps errors to exit codes.
int run(const RunConfig& run, std::ostream& log);

/// Parses argv and runs.
int main_entry(int argc, char** argv, std::ostream& log);

}  // namespace rodif::cli
