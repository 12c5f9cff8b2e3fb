#pragma once

#include <string>
#include <vector>

#include "gapkit/config.hpp"
#include "json.hpp"

namespace gapkit {

/// check, simulate, ulam, spectrum, marginals, decay, report
const std::vector<std::string>& command_names();

struct CommandResult {
  nlohmann::json doc;  // also written to <out_dir>/<command>.json
  bool ok = false;     // every embedded validity check passed
};

/// Runs one command and writes its artifacts under cfg.out_dir.
/// Module failures propagate as exceptions.
CommandResult run_command(const std::string& command, const RunConfig& cfg);

/// The fully resolved configuration, defaults filled in.
nlohmann::json config_json(const RunConfig& cfg);

/// {"command", "status": "error", "kind", "message", "generated_at"}
nlohmann::json error_json(const std::string& command, const std::string& kind, const std::string& message);

/// Copy of doc without the top-level "generated_at" field.
nlohmann::json mask_timestamp(nlohmann::json doc);

/// UTC, ISO 8601 to the second.
std::string utc_timestamp();

}  // namespace gapkit
