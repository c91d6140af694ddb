#pragma once

#include "core/config.hpp"
#include "core/error.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cosub {

// Process exit codes, stable across versions.
enum class Status : int { Ok = 0, Internal = 1, Config = 2, Io = 3, Infeasible = 4, Numerical = 5 };

Status status_for(ErrorKind kind);
const char* to_string(Status s);

struct CommandOptions {
  std::string out_dir;  // overrides the config when non-empty
  std::optional<std::uint64_t> seed;
  bool trace = false;
  bool dump_phi = false;
};

struct CommandResult {
  Status status = Status::Ok;
  std::string message;
  std::vector<std::string> outputs;
  json summary;
};

// Applies the overrides in `opt` to `cfg`.
RunConfig apply_overrides(RunConfig cfg, const CommandOptions& opt);

// Each command validates, runs and writes its artifacts under the output
// directory. Errors are mapped to a Status rather than thrown.
CommandResult cmd_generate(const RunConfig& cfg, const CommandOptions& opt);
CommandResult cmd_fit(const RunConfig& cfg, const CommandOptions& opt);
CommandResult cmd_experiment(const RunConfig& cfg, const CommandOptions& opt);
CommandResult cmd_typei(const RunConfig& cfg, const CommandOptions& opt);

// Writes `j` with two-space indentation; throws Io on failure.
void write_json(const json& j, const std::string& path);

}  // namespace cosub
